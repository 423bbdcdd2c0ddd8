"""Mild solutions on the torus: heat semigroup, the bilinear form B, Picard iteration.

Everything is carried out mode by mode.  The Duhamel integral

    B(u, v)(t) = -int_0^t exp((t - s) Laplace) P div(u (x) v)(s) ds

is accumulated step by step with a product trapezoid rule: on each snapshot
interval the forcing is interpolated linearly in time and integrated exactly
against the semigroup.  For a zero wavenumber the weights reduce to the
ordinary trapezoid rule.
"""

from __future__ import annotations

import io
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DecompositionError, DomainError, ValidationError
from .fields import (
    TorusGrid,
    VectorField,
    ScalarField,
    _require_torus,
    project_hat,
    read_csv,
    write_csv,
)

logger = logging.getLogger(__name__)

PICARD_TOL = 1e-10
PICARD_MAX_ITER = 50
DEFAULT_STEPS = 128
_CHUNK = 16  # snapshots per vectorized FFT batch


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-ordered snapshots of a vector field on one torus grid.

    ``data`` has shape ``(n_times, dim, *grid.shape)``.  Times must be strictly
    increasing; they may be negative for rescaled trajectories.
    """

    grid: TorusGrid
    times: np.ndarray
    data: np.ndarray
    scheme: str = "unspecified"
    dt: float | None = None
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).ravel()
        data = np.asarray(self.data, dtype=float)
        if data.shape != (times.size, self.grid.dim) + self.grid.shape:
            raise ValidationError(f"data shape {data.shape} inconsistent with {times.size} snapshots on {self.grid}")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValidationError("trajectory times must be strictly increasing")
        if not np.all(np.isfinite(data)):
            raise ValidationError("trajectory contains non-finite samples")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    def __len__(self) -> int:
        return self.times.size

    def snapshot(self, m: int) -> VectorField:
        return VectorField(self.grid, self.data[m], float(self.times[m]))

    @property
    def fields(self) -> list[VectorField]:
        return [self.snapshot(m) for m in range(len(self))]

    def with_data(self, data: np.ndarray, scheme: str | None = None) -> "Trajectory":
        return Trajectory(self.grid, self.times, data, scheme or self.scheme, self.dt, dict(self.tolerances))

    @classmethod
    def from_fields(cls, fields: Sequence[VectorField], **kw) -> "Trajectory":
        if not fields:
            raise DataError("empty trajectory")
        grid = fields[0].grid
        if any(f.grid != grid for f in fields):
            raise ValidationError("all snapshots must share one grid")
        return cls(grid, np.array([f.time for f in fields]), np.stack([f.components for f in fields]), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        dt = "auto" if self.dt is None else f"{self.dt:.17g}"
        buf.write(f"# trajectory: scheme={self.scheme}, dt={dt}, snapshots={len(self)}\n")
        for f in self.fields:
            write_csv(f, buf)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        fields = read_csv(text)
        if not fields or not all(isinstance(f, VectorField) for f in fields):
            raise DataError("trajectory CSV must contain vector field blocks")
        m = re.search(r"#\s*trajectory:\s*scheme=([^,]+),\s*dt=([^,]+)", text)
        scheme = m.group(1).strip() if m else "unspecified"
        dt = None
        if m and m.group(2).strip() != "auto":
            dt = float(m.group(2))
        return cls.from_fields(fields, scheme=scheme, dt=dt)


def check_compatible(u: Trajectory, v: Trajectory) -> None:
    if u.grid != v.grid or u.times.shape != v.times.shape or not np.array_equal(u.times, v.times):
        raise ValidationError("trajectories must share grid and time stamps")


# ---------------------------------------------------------------------------
# Heat semigroup
# ---------------------------------------------------------------------------

def heat_extend(u0: VectorField, t: float) -> VectorField:
    """``S(t) u0`` via the multiplier ``exp(-|k|^2 t)``."""
    if t < 0:
        raise DomainError("heat extension requires t >= 0")
    g = _require_torus(u0.grid)
    mult = np.exp(-g.k2 * t)
    comps = np.stack([g.ifft(mult * g.fft(c)) for c in u0.components])
    return VectorField(g, comps, u0.time + t)


def _spectral(grid: TorusGrid, data: np.ndarray) -> np.ndarray:
    return np.fft.rfftn(data, axes=grid.axes)


def _physical(grid: TorusGrid, data_hat: np.ndarray) -> np.ndarray:
    return np.fft.irfftn(data_hat, s=grid.shape, axes=grid.axes)


def heat_trajectory(u0: VectorField, times: np.ndarray, scheme: str = "heat") -> Trajectory:
    g = u0.grid
    times = np.asarray(times, dtype=float)
    u0_hat = _spectral(g, u0.components)
    data = np.stack([_physical(g, np.exp(-g.k2 * (t - times[0])) * u0_hat) for t in times])
    dt = float(times[1] - times[0]) if times.size > 1 else None
    return Trajectory(g, times, data, scheme, dt)


def time_grid(T: float, dt: float | None = None) -> tuple[np.ndarray, float]:
    if not T > 0:
        raise DomainError("T must be positive")
    if dt is None:
        dt = T / DEFAULT_STEPS
    if not dt > 0:
        raise DomainError("dt must be positive")
    steps = max(1, int(round(T / dt)))
    return np.linspace(0.0, T, steps + 1), T / steps


# ---------------------------------------------------------------------------
# Product trapezoid weights
# ---------------------------------------------------------------------------

def duhamel_weights(k2: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(E, w0, w1)`` with ``int_0^h e^{-k2 (h-s)} [F0 (1 - s/h) + F1 s/h] ds = w0 F0 + w1 F1``."""
    x = k2 * h
    E = np.exp(-x)
    small = x < 1e-3
    xs = np.where(small, 1.0, x)
    phi1 = np.where(small, 1.0 - x / 2.0 + x * x / 6.0 - x ** 3 / 24.0, -np.expm1(-xs) / xs)
    # (1 - e^{-x}(1 + x)) / x^2
    phi2 = np.where(small, 0.5 - x / 3.0 + x * x / 8.0 - x ** 3 / 30.0,
                    (1.0 - np.exp(-xs) * (1.0 + xs)) / (xs * xs))
    w0 = h * phi2
    w1 = h * (phi1 - phi2)
    return E, w0, w1


# ---------------------------------------------------------------------------
# Nonlinear term and B
# ---------------------------------------------------------------------------

def nonlinear_hat(grid: TorusGrid, u: np.ndarray, v: np.ndarray, dealias: bool = True) -> np.ndarray:
    """Spectral ``-P div(u (x) v)`` for stacks of snapshots.

    ``u`` and ``v`` have shape ``(..., dim, *grid)``; component ``j`` of the
    divergence is ``d_k (u_k v_j)``.  With ``dealias`` the two-thirds rule is
    applied to the inputs and the output.
    """
    if u.ndim == grid.dim + 2 and u.shape[0] > _CHUNK:
        return np.concatenate([nonlinear_hat(grid, u[i:i + _CHUNK], v[i:i + _CHUNK], dealias)
                               for i in range(0, u.shape[0], _CHUNK)])
    dim = grid.dim
    ks = grid.wavenumbers_odd
    mask = grid.dealias_mask if dealias else None
    if dealias:
        u = _physical(grid, _spectral(grid, u) * mask)
        v = _physical(grid, _spectral(grid, v) * mask)
    ax = -dim - 1
    div = []
    for j in range(dim):
        vj = np.take(v, j, axis=ax)
        acc = 0.0
        for k in range(dim):
            acc = acc + 1j * ks[k] * _spectral(grid, np.take(u, k, axis=ax) * vj)
        div.append(acc)
    div = np.stack(div, axis=-dim - 1)
    out = -_project_stack(grid, div)
    if dealias:
        out = out * mask
    return out


def _project_stack(grid: TorusGrid, v_hat: np.ndarray) -> np.ndarray:
    """Leray projection applied to ``(..., dim, *spectral)`` arrays."""
    ks = grid.wavenumbers_odd
    k2 = sum(k * k for k in ks)
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    dim = grid.dim
    comps = [np.take(v_hat, a, axis=-dim - 1) for a in range(dim)]
    kdotv = sum(ks[a] * comps[a] for a in range(dim))
    return np.stack([comps[a] - ks[a] * kdotv * inv for a in range(dim)], axis=-dim - 1)


def duhamel_accumulate(grid: TorusGrid, times: np.ndarray, forcing_hat: np.ndarray) -> np.ndarray:
    """``int_0^t_m S(t_m - s) F(s) ds`` at every snapshot (spectral in, physical out)."""
    out_hat = np.zeros_like(forcing_hat)
    cache: dict[float, tuple] = {}
    for m in range(1, times.size):
        h = float(times[m] - times[m - 1])
        key = round(h, 15)
        if key not in cache:
            cache[key] = duhamel_weights(grid.k2, h)
        E, w0, w1 = cache[key]
        out_hat[m] = E * out_hat[m - 1] + w0 * forcing_hat[m - 1] + w1 * forcing_hat[m]
    return _physical(grid, out_hat)


def bilinear_B(u: Trajectory, v: Trajectory, dealias: bool = True) -> Trajectory:
    """The bilinear form ``B(u, v)`` evaluated on the shared snapshot times."""
    check_compatible(u, v)
    g = u.grid
    F = nonlinear_hat(g, u.data, v.data, dealias)
    data = duhamel_accumulate(g, u.times, F)
    return Trajectory(g, u.times, data, "bilinear-B/product-trapezoid", u.dt)


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------

@dataclass
class PicardReport:
    iterations: int
    increments: list[float]
    ratios: list[float]
    defect: float
    converged: bool
    message: str
    datum_norm: float
    T: float
    dt: float

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "increments": self.increments,
            "ratios": self.ratios,
            "defect": self.defect,
            "converged": self.converged,
            "message": self.message,
            "datum_norm": self.datum_norm,
            "T": self.T,
            "dt": self.dt,
        }


def sup_over_trajectory(data: np.ndarray) -> float:
    """``max_t max_x |u(x, t)|`` for ``(n_times, dim, *grid)`` arrays."""
    return float(np.max(np.sqrt(np.sum(data ** 2, axis=1))))


def picard_solve(u0: VectorField, T: float, dt: float | None = None, tol: float = PICARD_TOL,
                 max_iter: int = PICARD_MAX_ITER, dealias: bool = True) -> tuple[Trajectory, PicardReport]:
    """Solve ``u = U + B(u, u)`` on ``[0, T]`` by fixed-point iteration from ``u^0 = U``.

    Failure to contract is reported, not raised: the report carries the
    measured ratios and ``converged = False``.
    """
    g = _require_torus(u0.grid)
    datum_norm = float(np.max(u0.magnitude()))
    if not math.isfinite(datum_norm):
        raise ValidationError("datum must be bounded")
    times, dt = time_grid(T, dt)
    U = heat_trajectory(VectorField(g, u0.components, 0.0), times)
    u = U.data
    increments: list[float] = []
    ratios: list[float] = []
    converged = False
    for it in range(1, max_iter + 1):
        F = nonlinear_hat(g, u, u, dealias)
        new = U.data + duhamel_accumulate(g, times, F)
        inc = sup_over_trajectory(new - u)
        increments.append(inc)
        if len(increments) > 1 and increments[-2] > 0:
            ratios.append(inc / increments[-2])
        u = new
        if not np.all(np.isfinite(u)):
            break
        if inc <= tol:
            converged = True
            break
        if len(ratios) >= 3 and all(r >= 1.0 for r in ratios[-3:]):
            break
    iterations = len(increments)
    if converged:
        F = nonlinear_hat(g, u, u, dealias)
        defect = sup_over_trajectory(u - U.data - duhamel_accumulate(g, times, F))
        message = f"converged in {iterations} iterations"
    else:
        defect = float("nan")
        last = ratios[-1] if ratios else float("nan")
        message = (f"no contraction within {iterations} iterations (last ratio {last:.3g}); "
                   f"T = {T:g} too large for datum norm {datum_norm:.3g}")
        logger.warning(message)
        if not np.all(np.isfinite(u)):
            u = U.data
    traj = Trajectory(g, times, u, "picard/product-trapezoid", dt, {"tol": tol, "max_iter": max_iter})
    return traj, PicardReport(iterations, increments, ratios, defect, converged, message, datum_norm, T, dt)


def mild_defect(traj: Trajectory, dealias: bool = True) -> float:
    """``sup |u - U - B(u, u)|`` for a trajectory starting at its first snapshot."""
    g = traj.grid
    U = heat_trajectory(traj.snapshot(0), traj.times)
    F = nonlinear_hat(g, traj.data, traj.data, dealias)
    return sup_over_trajectory(traj.data - U.data - duhamel_accumulate(g, traj.times, F))


# ---------------------------------------------------------------------------
# Smoothing diagnostics
# ---------------------------------------------------------------------------

def _gradient_power(grid: TorusGrid, data: np.ndarray, k: int) -> np.ndarray:
    """Pointwise Frobenius norm of ``grad^k u`` for ``(n_times, dim, *grid)`` data."""
    if data.shape[0] > _CHUNK:
        return np.concatenate([_gradient_power(grid, data[i:i + _CHUNK], k)
                               for i in range(0, data.shape[0], _CHUNK)])
    if k == 0:
        return np.sqrt(np.sum(data ** 2, axis=1))
    ks = grid.wavenumbers_odd if k == 1 else grid.wavenumbers
    u_hat = _spectral(grid, data)
    total = 0.0
    for idx in np.ndindex(*(grid.dim,) * k):
        mult = 1.0
        for a in idx:
            mult = mult * (1j * ks[a])
        total = total + np.sum(_physical(grid, mult * u_hat) ** 2, axis=1)
    return np.sqrt(total)


def smoothing_series(traj: Trajectory, k: int, l: int) -> tuple[np.ndarray, np.ndarray]:
    """``(t, t^{k/2+l} ||grad^k d_t^l u(t)||_inf / ||u(0)||_inf)`` for ``t > 0``."""
    if k not in (0, 1, 2) or l not in (0, 1):
        raise ValidationError("k must be 0, 1 or 2 and l must be 0 or 1")
    if len(traj) < 2 or (l == 1 and len(traj) < 3):
        raise DataError("not enough snapshots for the requested time derivative")
    data = traj.data
    if l == 1:
        data = np.gradient(data, traj.times, axis=0, edge_order=2)
    norms = np.max(_gradient_power(traj.grid, data, k).reshape(len(traj), -1), axis=1)
    u0 = sup_over_trajectory(traj.data[:1])
    if u0 == 0:
        raise DataError("initial datum vanishes; smoothing ratio undefined")
    t = traj.times - traj.times[0]
    keep = t > 0
    return t[keep], t[keep] ** (k / 2 + l) * norms[keep] / u0


def smoothing_diagnostic(traj: Trajectory, k: int, l: int) -> float:
    _, vals = smoothing_series(traj, k, l)
    return float(np.max(vals))


# ---------------------------------------------------------------------------
# Weak-solution decomposition u = v + w + b(t)
# ---------------------------------------------------------------------------

@dataclass
class Decomposition:
    v: Trajectory
    w: Trajectory
    b: np.ndarray
    b_prime: np.ndarray
    heat_residual: float
    reconstruction_error: float


def heat_step_residual(traj: Trajectory) -> float:
    """``max_m |w_{m+1} - S(t_{m+1} - t_m) w_m|_inf``."""
    g = traj.grid
    w_hat = _spectral(g, traj.data)
    worst = 0.0
    for m in range(len(traj) - 1):
        h = traj.times[m + 1] - traj.times[m]
        diff = traj.data[m + 1] - _physical(g, np.exp(-g.k2 * h) * w_hat[m])
        worst = max(worst, float(np.max(np.sqrt(np.sum(diff ** 2, axis=0)))))
    return worst


def decompose(u: Trajectory, f_from_u: bool = False, tol: float = 1e-8, dealias: bool = True) -> Decomposition:
    """Split ``u`` into forced part ``v``, caloric part ``w`` and spatially constant drift ``b``.

    ``v`` solves the linear problem with zero datum and forcing ``-u_k u``
    (or no forcing); ``b`` is the drift of the spatial mean of ``u - v`` with
    ``b(0) = 0``; ``w = u - v - b``.
    """
    if len(u) < 3:
        raise DataError("decomposition needs at least 3 snapshots")
    g = u.grid
    if f_from_u:
        v = bilinear_B(u, u, dealias)
    else:
        v = u.with_data(np.zeros_like(u.data), scheme="zero-forcing")
    r = u.data - v.data
    means = r.reshape(len(u), g.dim, -1).mean(axis=2)
    b = means - means[0]
    bfield = b.reshape(b.shape + (1,) * g.dim)
    w = u.with_data(r - bfield, scheme="caloric-part")
    b_prime = np.gradient(b, u.times, axis=0, edge_order=2)
    residual = heat_step_residual(w)
    recon = sup_over_trajectory(u.data - (v.data + w.data + bfield))
    if residual > tol:
        raise DecompositionError(
            f"caloric part violates the heat equation: residual {residual:.3e} > {tol:.1e}", residual)
    return Decomposition(v, w, b, b_prime, residual, recon)


# ---------------------------------------------------------------------------
# Equation residuals
# ---------------------------------------------------------------------------

def vorticity_trajectory(traj: Trajectory) -> np.ndarray:
    """Vorticity snapshots: ``(n_times, *grid)`` in 2D, ``(n_times, 3, *grid)`` in 3D."""
    g = traj.grid
    ks = g.wavenumbers_odd
    h = _spectral(g, traj.data)
    if g.dim == 2:
        return _physical(g, 1j * ks[0] * h[:, 1] - 1j * ks[1] * h[:, 0])
    d = lambda c, a: 1j * ks[a] * h[:, c]  # noqa: E731
    w = np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)], axis=1)
    return _physical(g, w)


def _vorticity_forcing_hat(grid: TorusGrid, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    ks = grid.wavenumbers_odd
    if grid.dim == 2:
        return -sum(1j * ks[j] * _spectral(grid, u[:, j] * w) for j in range(2))
    out = []
    for i in range(3):
        acc = 0.0
        for j in range(3):
            acc = acc + 1j * ks[j] * _spectral(grid, w[:, j] * u[:, i] - w[:, i] * u[:, j])
        out.append(acc)
    return np.stack(out, axis=1)


def vorticity_residual(traj: Trajectory) -> float:
    """Sup over steps of the one-step defect of the vorticity equation, per unit time.

    The defect is ``w_{m+1} - S(h) w_m - int_0^h S(h - s) N(s) ds`` with the
    nonlinearity ``N`` interpolated linearly (product trapezoid), divided by ``h``.
    """
    if len(traj) < 2:
        raise DataError("vorticity residual needs at least 2 snapshots")
    g = traj.grid
    w = vorticity_trajectory(traj)
    N = _vorticity_forcing_hat(g, traj.data, w)
    w_hat = _spectral(g, w)
    worst = 0.0
    for m in range(len(traj) - 1):
        h = float(traj.times[m + 1] - traj.times[m])
        E, w0, w1 = duhamel_weights(g.k2, h)
        pred = E * w_hat[m] + w0 * N[m] + w1 * N[m + 1]
        diff = w[m + 1] - _physical(g, pred)
        worst = max(worst, float(np.max(np.abs(diff))) / h)
    return worst


def nse_residual(traj: Trajectory) -> float:
    """Sup over interior snapshots of ``|d_t u + P div(u (x) u) - Laplace u|``.

    Time derivative by second-order differences, space derivatives spectral,
    no dealiasing.
    """
    if len(traj) < 3:
        raise DataError("NSE residual needs at least 3 snapshots")
    g = traj.grid
    dudt = np.gradient(traj.data, traj.times, axis=0, edge_order=2)
    u_hat = _spectral(g, traj.data)
    rhs = _physical(g, nonlinear_hat(g, traj.data, traj.data, dealias=False) - g.k2 * u_hat)
    res = dudt - rhs
    mag = np.sqrt(np.sum(res[1:-1] ** 2, axis=1))
    return float(np.max(mag))


def divergence_sup(traj: Trajectory) -> float:
    g = traj.grid
    ks = g.wavenumbers_odd
    h = _spectral(g, traj.data)
    div = _physical(g, sum(1j * ks[a] * h[:, a] for a in range(g.dim)))
    return float(np.max(np.abs(div)))


def vorticity_sup_series(traj: Trajectory) -> np.ndarray:
    """Refined ``sup |omega|`` per snapshot (2D), using the spectral interpolant."""
    from .fields import spectral_sup_abs
    if traj.grid.dim != 2:
        raise ValidationError("vorticity sup series is defined for 2D trajectories")
    w = vorticity_trajectory(traj)
    return np.array([spectral_sup_abs(ScalarField(traj.grid, w[m])) for m in range(len(traj))])
