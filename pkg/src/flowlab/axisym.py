"""Axisymmetric Navier-Stokes in the meridional half-plane via (f, eta, psi).

With ``f = r u_theta``, ``eta = omega_theta / r`` and the Stokes stream
function ``psi``:

    f_t + u . grad f = f_rr - f_r / r + f_zz
    eta_t + u . grad eta = eta_rr + 3 eta_r / r + eta_zz + d_z(f^2) / r^4
    psi_rr - psi_r / r + psi_zz = -r^2 eta,   u_r = -psi_z / r,  u_z = psi_r / r

The radial operators are discretised in flux form so that both are monotone
(M-matrix) and exact on ``r^2``.  Advection is explicit first-order upwind,
diffusion implicit Euler; f and eta therefore satisfy discrete maximum
principles whenever the source term is absent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ParameterError, ParityError, SolverError, ValidationError
from .fields import AxisymGrid, ScalarField

logger = logging.getLogger(__name__)

PARITY_TOL = 1e-2
ELLIPTIC_TOL = 1e-10
MONITOR_RINGS = 2


# ---------------------------------------------------------------------------
# Radial flux coefficients
# ---------------------------------------------------------------------------

def _half_radii(grid: AxisymGrid) -> tuple[np.ndarray, np.ndarray]:
    r = grid.r
    return r + grid.dr / 2, np.maximum(r - grid.dr / 2, 0.0)


def _swirl_radial(grid: AxisymGrid) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper coefficients of ``r d_r (d_r f / r)``, rows ``1 .. nr-2``."""
    rp, rm = _half_radii(grid)
    lo, hi = np.zeros(grid.nr), np.zeros(grid.nr)
    j = np.arange(1, grid.nr - 1)
    denom = grid.dr * np.log(rp[j] / rm[j])
    lo[j] = 1.0 / (rm[j] * denom)
    hi[j] = 1.0 / (rp[j] * denom)
    return lo, hi


def _five_radial(grid: AxisymGrid) -> tuple[np.ndarray, np.ndarray]:
    """Lower/upper coefficients of ``r^-3 d_r (r^3 d_r eta)``, rows ``0 .. nr-2``."""
    rp, rm = _half_radii(grid)
    lo, hi = np.zeros(grid.nr), np.zeros(grid.nr)
    j = np.arange(1, grid.nr - 1)
    vol = (rp[j] ** 4 - rm[j] ** 4) / 4.0
    lo[j] = rm[j] ** 3 / (grid.dr * vol)
    hi[j] = rp[j] ** 3 / (grid.dr * vol)
    hi[0] = 8.0 / grid.dr ** 2
    return lo, hi


def _operator(grid: AxisymGrid, lo: np.ndarray, hi: np.ndarray, rows: np.ndarray) -> sp.csr_matrix:
    """Full ``(nr nz)^2`` matrix of radial flux part plus ``d_zz``; zero outside ``rows``."""
    nr, nz = grid.shape
    idx = np.arange(nr * nz).reshape(nr, nz)
    jj, kk = np.nonzero(rows)
    me = idx[jj, kk]
    dz2 = 1.0 / grid.dz ** 2
    data, ri, ci = [], [], []

    def add(target, coeff):
        ri.append(me)
        ci.append(target)
        data.append(coeff)

    add(idx[jj, kk], -(lo[jj] + hi[jj]) - 2 * dz2)
    add(idx[np.minimum(jj + 1, nr - 1), kk], hi[jj])
    has_lo = jj > 0
    add(idx[np.maximum(jj - 1, 0), kk], np.where(has_lo, lo[jj], 0.0))
    add(idx[jj, kk + 1], np.full(jj.size, dz2))
    add(idx[jj, kk - 1], np.full(jj.size, dz2))
    A = sp.coo_matrix((np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))), shape=(nr * nz,) * 2)
    return A.tocsr()


def _interior_rows(grid: AxisymGrid, include_axis: bool) -> np.ndarray:
    rows = np.zeros(grid.shape, dtype=bool)
    rows[1:-1, 1:-1] = True
    if include_axis:
        rows[0, 1:-1] = True
    return rows


def _extrapolate_edges(a: np.ndarray, include_axis: bool) -> np.ndarray:
    """Fill edge rows by quadratic extrapolation from the adjacent interior rows."""
    out = a.copy()
    out[:, 0] = 3 * out[:, 1] - 3 * out[:, 2] + out[:, 3]
    out[:, -1] = 3 * out[:, -2] - 3 * out[:, -3] + out[:, -4]
    out[-1] = 3 * out[-2] - 3 * out[-3] + out[-4]
    if not include_axis:
        out[0] = 3 * out[1] - 3 * out[2] + out[3]
    return out


def axis_slope(grid: AxisymGrid, s: np.ndarray) -> np.ndarray:
    """One-sided second-order ``d_r s`` at the axis, per z column."""
    return (-3 * s[0] + 4 * s[1] - s[2]) / (2 * grid.dr)


def check_even(grid: AxisymGrid, s: np.ndarray, what: str = "field", tol: float = PARITY_TOL) -> None:
    """Reject fields whose linear part at the axis is not small against their size."""
    scale = float(np.max(np.abs(s)))
    if scale == 0:
        return
    slope = float(np.max(np.abs(axis_slope(grid, s))))
    if slope * grid.dr > tol * scale:
        raise ParityError(f"{what} is not even across the axis (d_r at r=0 is {slope:.3g})")


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def laplacian5(s: ScalarField) -> ScalarField:
    """``s_rr + 3 s_r / r + s_zz``, with ``4 s_rr + s_zz`` on the axis.

    Edge rows are filled by quadratic extrapolation.  Odd inputs raise
    ``ParityError``.
    """
    grid = s.grid
    if not isinstance(grid, AxisymGrid):
        raise ValidationError("laplacian5 requires an AxisymGrid field")
    check_even(grid, s.samples)
    lo, hi = _five_radial(grid)
    A = _operator(grid, lo, hi, _interior_rows(grid, include_axis=True))
    out = (A @ s.samples.ravel()).reshape(grid.shape)
    return ScalarField(grid, _extrapolate_edges(out, include_axis=True), s.time)


def swirl_operator(s: ScalarField) -> ScalarField:
    """``s_rr - s_r / r + s_zz`` at interior nodes; edges extrapolated."""
    grid = s.grid
    lo, hi = _swirl_radial(grid)
    A = _operator(grid, lo, hi, _interior_rows(grid, include_axis=False))
    out = (A @ s.samples.ravel()).reshape(grid.shape)
    out = _extrapolate_edges(out, include_axis=False)
    out[0] = 0.0
    return ScalarField(grid, out, s.time)


class _Solvers:
    """Operators and cached factorizations for one grid."""

    def __init__(self, grid: AxisymGrid):
        self.grid = grid
        rows_f = _interior_rows(grid, include_axis=False)
        rows_e = _interior_rows(grid, include_axis=True)
        self.unknown_f = rows_f.ravel()
        self.unknown_e = rows_e.ravel()
        self.L_f = _operator(grid, *_swirl_radial(grid), rows_f)
        self.L_e = _operator(grid, *_five_radial(grid), rows_e)
        self._psi = None
        self._steps: dict[tuple[str, float], object] = {}

    def _split(self, A, unknown):
        u = np.flatnonzero(unknown)
        k = np.flatnonzero(~unknown)
        return A[u][:, u], A[u][:, k], u, k

    def psi_solve(self, rhs: np.ndarray) -> tuple[np.ndarray, float]:
        """Solve ``L psi = rhs`` with ``psi = 0`` on axis and outer boundary."""
        if self._psi is None:
            Auu, _, u, _ = self._split(self.L_f, self.unknown_f)
            self._psi = (splu(Auu.tocsc()), Auu, u)
        lu, Auu, u = self._psi
        b = rhs.ravel()[u]
        x = lu.solve(b)
        scale = max(1.0, float(np.max(np.abs(b))))
        res = float(np.max(np.abs(Auu @ x - b))) / scale if b.size else 0.0
        if res > ELLIPTIC_TOL:
            raise SolverError(f"stream-function solve residual {res:.3e} exceeds {ELLIPTIC_TOL:g}", res)
        psi = np.zeros(rhs.size)
        psi[u] = x
        return psi.reshape(rhs.shape), res

    def implicit(self, which: str, dt: float, star: np.ndarray, known: np.ndarray) -> np.ndarray:
        """``(I - dt L) x = star`` on unknown nodes; other nodes take ``known``."""
        key = (which, round(dt, 15))
        A, unknown = (self.L_f, self.unknown_f) if which == "f" else (self.L_e, self.unknown_e)
        if key not in self._steps:
            Auu, Auk, u, k = self._split(A, unknown)
            M = (sp.identity(u.size) - dt * Auu).tocsc()
            self._steps[key] = (splu(M), Auk, u, k)
        lu, Auk, u, k = self._steps[key]
        out = known.ravel().copy()
        rhs = star.ravel()[u] + dt * (Auk @ out[k])
        out[u] = lu.solve(rhs)
        return out.reshape(star.shape)


_SOLVERS: dict[AxisymGrid, _Solvers] = {}


def solvers_for(grid: AxisymGrid) -> _Solvers:
    if grid not in _SOLVERS:
        _SOLVERS[grid] = _Solvers(grid)
    return _SOLVERS[grid]


# ---------------------------------------------------------------------------
# State and reconstruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MeridionalVelocity:
    u_r: np.ndarray
    u_z: np.ndarray
    psi: np.ndarray
    residual: float = 0.0


def _d_z(grid: AxisymGrid, a: np.ndarray) -> np.ndarray:
    return np.gradient(a, grid.dz, axis=1, edge_order=2)


def velocity_from_psi(grid: AxisymGrid, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``u_r = -psi_z / r``, ``u_z = psi_r / r``; on the axis ``u_r = 0`` and ``u_z = 2 psi_rr``."""
    r = grid.r[:, None]
    safe = np.where(r > 0, r, 1.0)
    psi_r = np.gradient(psi, grid.dr, axis=0, edge_order=2)
    u_r = np.where(r > 0, -_d_z(grid, psi) / safe, 0.0)
    u_z = np.where(r > 0, psi_r / safe, 0.0)
    u_z[0] = 2.0 * (psi[1] - psi[0]) / grid.dr ** 2
    return u_r, u_z


def meridional_from_eta(eta: ScalarField) -> MeridionalVelocity:
    """Stream function and meridional velocity for a given ``eta``."""
    grid = eta.grid
    rhs = -(grid.r[:, None] ** 2) * eta.samples
    psi, res = solvers_for(grid).psi_solve(rhs)
    u_r, u_z = velocity_from_psi(grid, psi)
    return MeridionalVelocity(u_r, u_z, psi, res)


def continuity_residual(grid: AxisymGrid, u_r: np.ndarray, u_z: np.ndarray) -> float:
    """``max |(r u_r)_r / r + (u_z)_z|`` over nodes two rings inside the boundary."""
    r = grid.r[:, None]
    flux = np.gradient(r * u_r, grid.dr, axis=0)
    div = flux[2:-2, 2:-2] / r[2:-2] + _d_z(grid, u_z)[2:-2, 2:-2]
    return float(np.max(np.abs(div))) if div.size else 0.0


@dataclass(frozen=True, eq=False)
class SwirlState:
    grid: AxisymGrid
    f: np.ndarray
    eta: np.ndarray
    psi: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        for name in ("f", "eta", "psi"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != self.grid.shape:
                raise ValidationError(f"{name} has shape {a.shape}, expected {self.grid.shape}")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{name} contains non-finite samples")
            object.__setattr__(self, name, a)
        if np.max(np.abs(self.f[0])) > 1e-12:
            raise ValidationError("f = r u_theta must vanish on the axis")

    @classmethod
    def from_scalars(cls, grid: AxisymGrid, f: np.ndarray, eta: np.ndarray, time: float = 0.0) -> "SwirlState":
        f = np.array(f, dtype=float)
        f[0] = 0.0
        check_even(grid, np.asarray(eta, dtype=float), "eta")
        psi = meridional_from_eta(ScalarField(grid, eta)).psi
        return cls(grid, f, eta, psi, time)

    def velocity(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(u_r, u_theta, u_z)``; the swirl ``u_theta = f / r`` is 0 on the axis."""
        u_r, u_z = velocity_from_psi(self.grid, self.psi)
        r = self.grid.r[:, None]
        u_t = np.where(r > 0, self.f / np.where(r > 0, r, 1.0), 0.0)
        return u_r, u_t, u_z

    def fields(self) -> dict[str, ScalarField]:
        u_r, u_t, u_z = self.velocity()
        g = self.grid
        return {name: ScalarField(g, a, self.time) for name, a in
                (("f", self.f), ("eta", self.eta), ("psi", self.psi),
                 ("u_r", u_r), ("u_theta", u_t), ("u_z", u_z))}


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------

def cfl_number(grid: AxisymGrid, u_r: np.ndarray, u_z: np.ndarray, dt: float) -> float:
    return float(np.max(dt * (np.abs(u_r) / grid.dr + np.abs(u_z) / grid.dz)))


def _upwind(grid: AxisymGrid, s: np.ndarray, u_r: np.ndarray, u_z: np.ndarray, dt: float,
            include_axis: bool) -> np.ndarray:
    out = s.copy()
    j0 = 0 if include_axis else 1
    c = s[j0:-1, 1:-1]
    ur = u_r[j0:-1, 1:-1]
    uz = u_z[j0:-1, 1:-1]
    zb = (c - s[j0:-1, :-2]) / grid.dz
    zf = (s[j0:-1, 2:] - c) / grid.dz
    rf = (s[j0 + 1:, 1:-1] - c) / grid.dr
    if j0 == 0:
        rb = np.vstack([np.zeros((1, c.shape[1])), (s[1:-1, 1:-1] - s[:-2, 1:-1]) / grid.dr])
    else:
        rb = (c - s[:-2, 1:-1]) / grid.dr
    change = (np.maximum(ur, 0) * rb + np.minimum(ur, 0) * rf + np.maximum(uz, 0) * zb + np.minimum(uz, 0) * zf)
    out[j0:-1, 1:-1] = c - dt * change
    return out


def _check_cfl(grid, u_r, u_z, dt):
    cfl = cfl_number(grid, u_r, u_z, dt)
    if cfl > 1.0 + 1e-12:
        raise ParameterError(f"advective CFL number {cfl:.3g} > 1; reduce dt")
    return cfl


def swirl_evolve(state: SwirlState, meridional: MeridionalVelocity, dt: float) -> ScalarField:
    """One step of ``f_t + u . grad f = f_rr - f_r / r + f_zz``; boundary values are held."""
    grid = state.grid
    _check_cfl(grid, meridional.u_r, meridional.u_z, dt)
    star = _upwind(grid, state.f, meridional.u_r, meridional.u_z, dt, include_axis=False)
    f = solvers_for(grid).implicit("f", dt, star, state.f)
    f[0] = 0.0
    return ScalarField(grid, f, state.time + dt)


def swirl_source(grid: AxisymGrid, f: np.ndarray) -> np.ndarray:
    """``d_z(f^2) / r^4`` written as ``d_z(u1^2)`` with ``u1 = f / r^2`` (axis limit ``f_1 / dr^2``)."""
    r = grid.r[:, None]
    u1 = np.where(r > 0, f / np.where(r > 0, r, 1.0) ** 2, 0.0)
    u1[0] = f[1] / grid.dr ** 2
    return _d_z(grid, u1 ** 2)


def eta_evolve(state: SwirlState, meridional: MeridionalVelocity, dt: float,
               with_swirl_source: bool = True) -> ScalarField:
    """One step of the eta equation; the swirl source is explicit."""
    grid = state.grid
    _check_cfl(grid, meridional.u_r, meridional.u_z, dt)
    star = _upwind(grid, state.eta, meridional.u_r, meridional.u_z, dt, include_axis=True)
    if with_swirl_source:
        src = swirl_source(grid, state.f)
        star[:-1, 1:-1] += dt * src[:-1, 1:-1]
    eta = solvers_for(grid).implicit("eta", dt, star, state.eta)
    return ScalarField(grid, eta, state.time + dt)


def axisym_step(state: SwirlState, dt: float, with_swirl_source: bool = True) -> SwirlState:
    grid = state.grid
    u_r, u_z = velocity_from_psi(grid, state.psi)
    mer = MeridionalVelocity(u_r, u_z, state.psi)
    f = swirl_evolve(state, mer, dt)
    eta = eta_evolve(state, mer, dt, with_swirl_source)
    new_psi = meridional_from_eta(eta).psi
    return SwirlState(grid, f.samples, eta.samples, new_psi, state.time + dt)


# ---------------------------------------------------------------------------
# Monitors and residuals
# ---------------------------------------------------------------------------

MONITOR_COLUMNS = ("t", "sup_f", "inf_f", "sup_eta", "sup_rho_u", "cfl")


@dataclass
class LiouvilleReport:
    rows: list[tuple[float, ...]]
    f_nonincreasing: bool
    eta_nonincreasing: bool
    max_f_increase: float
    max_eta_increase: float
    excluded_rings: int = MONITOR_RINGS
    notes: list[str] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[MONITOR_COLUMNS.index(name)] for row in self.rows])


def liouville_monitors(states: list[SwirlState], dt: float | None = None, tol: float = 1e-10) -> LiouvilleReport:
    """Time series of the maximum-principle scalars and of ``rho |u|``.

    ``sup_f``, ``inf_f`` and ``sup_eta`` are taken over the whole grid;
    ``sup_rho_u`` skips the outermost rings, where the confining boundary
    distorts the flow.
    """
    rows = []
    for s in states:
        u_r, u_t, u_z = s.velocity()
        rho_u = s.grid.r[:, None] * np.sqrt(u_r ** 2 + u_t ** 2 + u_z ** 2)
        k = MONITOR_RINGS
        core = rho_u[:-k, k:-k] if rho_u.shape[0] > k and rho_u.shape[1] > 2 * k else rho_u
        cfl = cfl_number(s.grid, u_r, u_z, dt) if dt else 0.0
        rows.append((s.time, float(np.max(np.abs(s.f))), float(np.min(s.f)), float(np.max(np.abs(s.eta))),
                     float(np.max(core)), cfl))
    sup_f = np.array([r[1] for r in rows])
    sup_e = np.array([r[3] for r in rows])
    df = float(np.max(np.diff(sup_f))) if len(rows) > 1 else 0.0
    de = float(np.max(np.diff(sup_e))) if len(rows) > 1 else 0.0
    notes = [f"sup_rho_u excludes the {MONITOR_RINGS} outermost node rings"]
    return LiouvilleReport(rows, df <= tol, de <= tol, df, de, MONITOR_RINGS, notes)


def primitive_residuals(states: list[SwirlState], ring: int = 3) -> dict[str, float]:
    """Residuals of the swirl and azimuthal-vorticity equations on reconstructed velocities.

    The velocity ``(u_r, u_theta, u_z)`` is rebuilt from each state, the
    azimuthal vorticity is recomputed from it, and both pressure-free
    equations are evaluated with centred differences at the middle snapshot
    of each consecutive triple.  Values are sup norms over nodes at least
    ``ring`` nodes from every edge; ``*_scale`` gives the largest single term.
    """
    if len(states) < 3:
        raise ValidationError("need at least three states")
    grid = states[0].grid
    r = grid.r[:, None]
    safe = np.where(r > 0, r, 1.0)

    def d_r(a):
        return np.gradient(a, grid.dr, axis=0, edge_order=2)

    def d_z(a):
        return _d_z(grid, a)

    def lap(a):
        return np.gradient(d_r(a), grid.dr, axis=0, edge_order=2) + d_r(a) / safe + d_z(d_z(a))

    vel = [s.velocity() for s in states]
    omega = [d_z(v[0]) - d_r(v[2]) for v in vel]
    sl = (slice(ring, grid.nr - ring), slice(ring, grid.nz - ring))
    worst = {"swirl": 0.0, "vorticity": 0.0, "swirl_scale": 0.0, "vorticity_scale": 0.0}
    for m in range(1, len(states) - 1):
        h = states[m + 1].time - states[m - 1].time
        u_r, u_t, u_z = vel[m]
        w = omega[m]
        dut = (vel[m + 1][1] - vel[m - 1][1]) / h
        terms_t = [dut, u_r * d_r(u_t) + u_z * d_z(u_t), u_r * u_t / safe, lap(u_t) - u_t / safe ** 2]
        res_t = terms_t[0] + terms_t[1] + terms_t[2] - terms_t[3]
        dwt = (omega[m + 1] - omega[m - 1]) / h
        terms_w = [dwt, u_r * d_r(w) + u_z * d_z(w), -u_r * w / safe, lap(w) - w / safe ** 2, d_z(u_t ** 2) / safe]
        res_w = terms_w[0] + terms_w[1] + terms_w[2] - terms_w[3] - terms_w[4]
        worst["swirl"] = max(worst["swirl"], float(np.max(np.abs(res_t[sl]))))
        worst["vorticity"] = max(worst["vorticity"], float(np.max(np.abs(res_w[sl]))))
        worst["swirl_scale"] = max(worst["swirl_scale"], max(float(np.max(np.abs(t[sl]))) for t in terms_t))
        worst["vorticity_scale"] = max(worst["vorticity_scale"], max(float(np.max(np.abs(t[sl]))) for t in terms_w))
    return worst


def run(state: SwirlState, dt: float, steps: int, every: int = 1,
        with_swirl_source: bool = True) -> list[SwirlState]:
    """Advance ``steps`` steps, keeping every ``every``-th state (first and last always kept)."""
    out = [state]
    for n in range(1, steps + 1):
        state = axisym_step(state, dt, with_swirl_source)
        if n % every == 0 or n == steps:
            out.append(state)
    return out


# ---------------------------------------------------------------------------
# Initial states
# ---------------------------------------------------------------------------

def _zero_edges(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a[-1] = 0.0
    a[:, 0] = 0.0
    a[:, -1] = 0.0
    return a


def rigid_rotation(grid: AxisymGrid, omega: float = 1.0) -> SwirlState:
    """``u_theta = omega r``: ``f = omega r^2``, no meridional flow."""
    rr, _ = grid.mesh()
    return SwirlState.from_scalars(grid, omega * rr ** 2, np.zeros(grid.shape))


def swirl_bump(grid: AxisymGrid, amplitude: float = 1.0, width: float | None = None,
               eta_amplitude: float = 0.0) -> SwirlState:
    """Localized swirl ``f = A r^2 exp(-(r^2 + (z - zc)^2) / w^2)`` with optional eta bump; zero outer edges."""
    rr, zz = grid.mesh()
    zc = 0.5 * (grid.z_min + grid.z_max)
    if width is None:
        width = 0.25 * min(grid.r_max, grid.z_max - grid.z_min)
    g = np.exp(-(rr ** 2 + (zz - zc) ** 2) / width ** 2)
    f = _zero_edges(amplitude * rr ** 2 * g / width ** 2)
    eta = _zero_edges(eta_amplitude * g)
    return SwirlState.from_scalars(grid, f, eta)


def vortex_ring(grid: AxisymGrid, amplitude: float = 1.0, r0: float | None = None,
                width: float | None = None) -> SwirlState:
    """No-swirl ring: ``eta`` is a pair of Gaussians at ``r = +-r0``, even across the axis."""
    rr, zz = grid.mesh()
    zc = 0.5 * (grid.z_min + grid.z_max)
    if r0 is None:
        r0 = 0.3 * grid.r_max
    if width is None:
        width = 0.15 * min(grid.r_max, grid.z_max - grid.z_min)
    dz2 = (zz - zc) ** 2
    eta = amplitude * (np.exp(-((rr - r0) ** 2 + dz2) / width ** 2) + np.exp(-((rr + r0) ** 2 + dz2) / width ** 2))
    return SwirlState.from_scalars(grid, np.zeros(grid.shape), _zero_edges(eta))
