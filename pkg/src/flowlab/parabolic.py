"""Scalar drift-diffusion ``u_t + a . grad u - Laplace u = 0`` on 1D and 2D boxes.

The scheme splits each step into explicit first-order upwinding of the drift
and an implicit Euler diffusion solve with Dirichlet data.  Under the CFL
condition ``dt * sum_d max|a_d| / dx <= 1`` the drift step is a convex
combination of neighbouring values, and the diffusion matrix is an M-matrix,
so the scheme obeys the discrete maximum principle exactly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import splu

from .errors import DataError, GeometryError, ParameterError, ValidationError

logger = logging.getLogger(__name__)

MP_TOL = 1e-12

Drift = Callable[..., np.ndarray]


def _as_callable(value, dim: int, vector: bool) -> Callable:
    if callable(value):
        return value
    arr = np.asarray(value, dtype=float)
    if vector:
        arr = np.broadcast_to(arr, (dim,)).copy()

        def const_vec(t, *x):
            return np.stack([np.full(x[0].shape, c) for c in arr])
        return const_vec

    def const(*args):
        return np.full(args[-1].shape if len(args) > 1 else np.shape(args[0]), float(arr))
    return const


@dataclass
class ParabolicProblem:
    """Box ``prod [lower_d, upper_d]``, horizon ``T``, drift, initial and boundary data.

    ``drift(t, *x)`` returns an array of shape ``(dim, *x.shape)``; ``u0(*x)``
    and ``bc(t, *x)`` return arrays of ``x.shape``.  Constants are accepted in
    place of callables.  ``drift_bound`` is filled in by the solver with the
    measured ``max |a|``.
    """

    lower: Sequence[float]
    upper: Sequence[float]
    T: float
    u0: Callable | float = 0.0
    bc: Callable | float = 0.0
    drift: Drift | Sequence[float] | float | None = None
    drift_bound: float = field(default=float("nan"))

    def __post_init__(self):
        self.lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        self.upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(self.lower) != len(self.upper) or self.dim not in (1, 2):
            raise ValidationError("box must be 1D or 2D with matching bounds")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise GeometryError("box bounds must satisfy lower < upper")
        if not self.T > 0:
            raise ValidationError("horizon T must be positive")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def drift_fn(self) -> Callable:
        return _as_callable(0.0 if self.drift is None else self.drift, self.dim, vector=True)

    def u0_fn(self) -> Callable:
        return _as_callable(self.u0, self.dim, vector=False)

    def bc_fn(self) -> Callable:
        return _as_callable(self.bc, self.dim, vector=False)

    def with_data(self, u0, bc) -> "ParabolicProblem":
        return ParabolicProblem(self.lower, self.upper, self.T, u0, bc, self.drift)


@dataclass(frozen=True, eq=False)
class ScalarTrajectory:
    """Scalar snapshots on a box grid; ``values`` has shape ``(n_times, *grid)``."""

    axes: tuple
    times: np.ndarray
    values: np.ndarray
    boundary: np.ndarray
    scheme: str = "upwind-explicit/implicit-euler"
    dt: float | None = None

    def __post_init__(self):
        if self.values.shape[0] != self.times.size:
            raise ValidationError("one snapshot per time stamp required")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValidationError("times must be strictly increasing")

    @property
    def dim(self) -> int:
        return len(self.axes)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def interior(self) -> np.ndarray:
        return ~self.boundary


def _boundary_mask(shape: tuple[int, ...]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        mask[tuple(idx)] = True
        idx[ax] = -1
        mask[tuple(idx)] = True
    return mask


def _laplacian_matrix(shape: tuple[int, ...], spacing: Sequence[float]) -> sp.csr_matrix:
    """Dirichlet 5-point (or 3-point) Laplacian acting on interior nodes."""
    inner = [n - 2 for n in shape]
    mats = []
    for ax, (m, h) in enumerate(zip(inner, spacing)):
        d = sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h ** 2
        ops = [sp.identity(k) for k in inner]
        ops[ax] = d
        term = ops[0]
        for op in ops[1:]:
            term = sp.kron(term, op)
        mats.append(term)
    return sp.csr_matrix(sum(mats))


def _upwind(u: np.ndarray, a: np.ndarray, spacing: Sequence[float], dt: float) -> np.ndarray:
    """Explicit upwind update of ``u_t + a . grad u = 0`` at interior nodes."""
    out = u.copy()
    inner = tuple(slice(1, -1) for _ in u.shape)
    change = np.zeros(tuple(n - 2 for n in u.shape))
    for ax, h in enumerate(spacing):
        fwd = [slice(1, -1)] * u.ndim
        bwd = [slice(1, -1)] * u.ndim
        fwd[ax] = slice(2, None)
        bwd[ax] = slice(None, -2)
        ai = a[ax][inner]
        back = (u[inner] - u[tuple(bwd)]) / h
        ahead = (u[tuple(fwd)] - u[inner]) / h
        change += np.maximum(ai, 0.0) * back + np.minimum(ai, 0.0) * ahead
    out[inner] = u[inner] - dt * change
    return out


def parabolic_solve(p: ParabolicProblem, nx: int | Sequence[int], dt: float,
                    store_every: int = 1) -> ScalarTrajectory:
    """March the problem to ``T`` with ``nx`` nodes per direction (boundary included)."""
    nxs = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(nx), (p.dim,)))
    if min(nxs) < 3:
        raise ValidationError("need at least 3 nodes per direction")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    axes = tuple(np.linspace(lo, hi, n) for lo, hi, n in zip(p.lower, p.upper, nxs))
    spacing = tuple(ax[1] - ax[0] for ax in axes)
    mesh = tuple(np.meshgrid(*axes, indexing="ij"))
    steps = max(1, int(round(p.T / dt)))
    dt = p.T / steps
    times = np.linspace(0.0, p.T, steps + 1)
    drift, u0, bc = p.drift_fn(), p.u0_fn(), p.bc_fn()

    drifts = [np.asarray(drift(t, *mesh), dtype=float) for t in times[:-1]]
    bound = max(float(np.max(np.abs(a))) for a in drifts)
    cfl = max(dt * sum(float(np.max(np.abs(a[ax]))) / h for ax, h in enumerate(spacing)) for a in drifts)
    p.drift_bound = bound
    if cfl > 1.0 + 1e-12:
        raise ParameterError(f"upwind CFL number {cfl:.3g} > 1 (max |a| = {bound:.3g}); reduce dt")

    boundary = _boundary_mask(nxs)
    inner = tuple(slice(1, -1) for _ in nxs)
    A = (sp.identity(int(np.prod([n - 2 for n in nxs]))) - dt * _laplacian_matrix(nxs, spacing)).tocsc()
    lu = splu(A)

    u = np.asarray(u0(*mesh), dtype=float).copy()
    u = np.broadcast_to(u, nxs).copy()
    u[boundary] = np.broadcast_to(bc(0.0, *mesh), nxs)[boundary]
    if not np.all(np.isfinite(u)):
        raise ValidationError("initial or boundary data not finite")
    stored_t, stored_u = [0.0], [u.copy()]
    for n in range(steps):
        star = _upwind(u, drifts[n], spacing, dt) if bound > 0 else u
        new = np.empty_like(u)
        new[boundary] = np.broadcast_to(bc(times[n + 1], *mesh), nxs)[boundary]
        rhs = star[inner].copy()
        # Dirichlet neighbours move to the right-hand side
        for ax, h in enumerate(spacing):
            lo = [slice(1, -1)] * len(nxs)
            hi = [slice(1, -1)] * len(nxs)
            lo[ax] = 0
            hi[ax] = -1
            first = [slice(None)] * len(nxs)
            last = [slice(None)] * len(nxs)
            first[ax] = 0
            last[ax] = -1
            rhs[tuple(first)] += dt * new[tuple(lo)] / h ** 2
            rhs[tuple(last)] += dt * new[tuple(hi)] / h ** 2
        new[inner] = lu.solve(rhs.ravel()).reshape(rhs.shape)
        u = new
        if (n + 1) % store_every == 0 or n + 1 == steps:
            stored_t.append(times[n + 1])
            stored_u.append(u.copy())
    return ScalarTrajectory(axes, np.array(stored_t), np.stack(stored_u), boundary, dt=dt)


# ---------------------------------------------------------------------------
# Maximum principle monitoring
# ---------------------------------------------------------------------------

@dataclass
class Violation:
    step: int
    kind: str
    excess: float


@dataclass
class MaxPrincipleReport:
    sup: np.ndarray
    inf: np.ndarray
    violations: list[Violation]

    @property
    def count(self) -> int:
        return len(self.violations)


def max_principle_report(traj: ScalarTrajectory, tol: float = MP_TOL) -> MaxPrincipleReport:
    """Per-frame sup/inf and every interior value exceeding the previous frame's range.

    At each frame the interior values must lie within the range spanned by the
    previous frame (all nodes) and the current boundary values.  With one
    stored frame per step this is exactly the discrete maximum principle.
    """
    vals = traj.values
    flat = vals.reshape(vals.shape[0], -1)
    sup, inf = flat.max(axis=1), flat.min(axis=1)
    bmask = traj.boundary.ravel()
    violations = []
    for m in range(1, vals.shape[0]):
        hi = max(sup[m - 1], flat[m, bmask].max())
        lo = min(inf[m - 1], flat[m, bmask].min())
        inside = flat[m, ~bmask]
        if inside.size == 0:
            continue
        if inside.max() > hi + tol:
            violations.append(Violation(m, "max", float(inside.max() - hi)))
        if inside.min() < lo - tol:
            violations.append(Violation(m, "min", float(lo - inside.min())))
    return MaxPrincipleReport(sup, inf, violations)


# ---------------------------------------------------------------------------
# Stability probe
# ---------------------------------------------------------------------------

@dataclass
class HarnackProbe:
    """Probe geometry: points ``K`` inside the box ``Omega_prime`` inside the domain.

    ``omega_prime`` is ``(lower, upper)``; ``K`` is an ``(m, dim)`` array of
    points.  ``results`` maps each ``delta`` to the measured ``epsilon``.
    """

    K: np.ndarray
    omega_prime: tuple
    tau: float
    delta_grid: Sequence[float] = (0.5, 0.2, 0.1, 0.05)
    window_starts: int = 12
    plateau_widths: int = 8
    results: dict = field(default_factory=dict)

    def validate(self, p: ParabolicProblem) -> None:
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if K.shape[1] != p.dim:
            raise GeometryError("probe points have the wrong dimension")
        lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in self.omega_prime)
        if lo.size != p.dim or hi.size != p.dim or np.any(hi <= lo):
            raise GeometryError("Omega' must be a non-empty box of the problem dimension")
        if np.any(K < lo) or np.any(K > hi):
            raise GeometryError("K must lie inside Omega'")
        if np.any(lo <= np.array(p.lower)) or np.any(hi >= np.array(p.upper)):
            raise GeometryError("the closure of Omega' must lie inside the domain")
        if not 0 < self.tau < p.T:
            raise GeometryError("tau must satisfy 0 < tau < T")
        if any(not 0 < d < 1 for d in self.delta_grid):
            raise ValidationError("delta values must lie in (0, 1)")


@dataclass
class ProbeMember:
    label: str
    sup_K: float
    deficit: float
    mp_violations: int = 0


@dataclass
class ProbeTable:
    deltas: list[float]
    epsilon: list[float]
    constant_epsilon: list[float]
    members: list[ProbeMember]
    drift_bound: float

    @property
    def mp_violations(self) -> int:
        return sum(m.mp_violations for m in self.members)

    def monotone(self, tol: float = 0.0) -> bool:
        order = np.argsort(self.deltas)
        eps = np.asarray(self.epsilon)[order]
        return bool(np.all(np.diff(eps) >= -tol))

    def rows(self) -> list[tuple[str, float, float]]:
        out = [("family", d, e) for d, e in zip(self.deltas, self.epsilon)]
        out += [("constant", d, e) for d, e in zip(self.deltas, self.constant_epsilon)]
        return out


def _probe_family(p: ParabolicProblem, probe: HarnackProbe):
    """Data family scaled to ``M = 1``: boundary value 1 from a window start on, initial plateau of 1."""
    centre = np.array([(lo + hi) / 2 for lo, hi in zip(p.lower, p.upper)])
    half = min((hi - lo) / 2 for lo, hi in zip(p.lower, p.upper))
    starts = np.linspace(0.0, p.T, probe.window_starts, endpoint=False)
    widths = np.linspace(0.0, half, probe.plateau_widths)
    for tw in starts:
        for a in widths:
            def u0(*x, a=a):
                r = np.sqrt(sum((xi - c) ** 2 for xi, c in zip(x, centre)))
                return (r <= a + 1e-12).astype(float)

            def bc(t, *x, tw=tw):
                return np.full(x[0].shape, 1.0 if t >= tw - 1e-14 else 0.0)
            yield f"window={tw:.6g},plateau={a:.6g}", u0, bc


def _evaluate_member(traj: ScalarTrajectory, probe: HarnackProbe) -> tuple[float, float]:
    K = np.atleast_2d(np.asarray(probe.K, dtype=float))
    if traj.dim == 1:
        sup_K = float(np.max(np.interp(K[:, 0], traj.axes[0], traj.values[-1])))
    else:
        interp = RegularGridInterpolator(traj.axes, traj.values[-1])
        sup_K = float(np.max(interp(K)))
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in probe.omega_prime)
    mesh = traj.mesh()
    inside = np.ones(traj.values.shape[1:], dtype=bool)
    for d, x in enumerate(mesh):
        inside &= (x >= lo[d] - 1e-12) & (x <= hi[d] + 1e-12)
    frames = traj.times > probe.tau
    if not np.any(frames) or not np.any(inside):
        raise GeometryError("Omega' x (tau, T) contains no grid samples; refine the grid")
    deficit = 1.0 - float(np.min(traj.values[frames][:, inside]))
    return sup_K, deficit


def harnack_stability_probe(p: ParabolicProblem, probe: HarnackProbe, nx: int = 81,
                            dt: float | None = None, jobs: int = 1) -> ProbeTable:
    """Measure ``epsilon(delta)`` over the probe family.

    For every member with ``sup_K u(., T) >= 1 - delta`` the deficit
    ``1 - min u`` over ``Omega' x (tau, T)`` is recorded; ``epsilon(delta)`` is
    the worst deficit.  Qualifying sets grow with ``delta``, so the table is
    non-decreasing in ``delta``.  A separate row uses the constant solution
    ``u = 1`` alone.
    """
    probe.validate(p)
    if dt is None:
        h = min((hi - lo) / (nx - 1) for lo, hi in zip(p.lower, p.upper))
        dt = min(p.T / 200, 0.5 * h)
    members = list(_probe_family(p, probe))

    def run(member):
        label, u0, bc = member
        traj = parabolic_solve(p.with_data(u0, bc), nx, dt)
        report = max_principle_report(traj)
        if report.count:
            logger.warning("maximum principle violated for member %s", label)
        return ProbeMember(label, *_evaluate_member(traj, probe), report.count)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, members))
    else:
        results = [run(m) for m in members]

    const_problem = p.with_data(1.0, 1.0)
    const_traj = parabolic_solve(const_problem, nx, dt)
    const_sup, const_deficit = _evaluate_member(const_traj, probe)

    deltas = [float(d) for d in probe.delta_grid]
    eps, const_eps = [], []
    for d in deltas:
        qual = [m.deficit for m in results if m.sup_K >= 1.0 - d]
        if not qual:
            raise DataError(f"no probe member reaches sup_K u >= {1 - d:g}")
        eps.append(max(0.0, max(qual)))
        const_eps.append(max(0.0, const_deficit) if const_sup >= 1.0 - d else float("nan"))
    probe.results = dict(zip(deltas, eps))
    return ProbeTable(deltas, eps, const_eps, results, const_problem.drift_bound)
