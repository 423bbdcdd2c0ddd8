"""Blow-up diagnostics: sup-norm traces, rate classification, rescaling, tail integral.

A trace is the series ``h(t) = sup_x |u(x, t)|`` with its running maximum
``H``.  Rescaling follows the Navier-Stokes symmetry

    v(y, s) = u(x_k + y / M, t_k + s / M^2) / M

which maps a period-``L`` torus to a period-``L M`` torus.  The rescaled grid
nodes are the source nodes shifted by ``x_k``, so the default interpolation
is an exact spectral shift; cubic spline interpolation is available for
comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.ndimage import map_coordinates

from .errors import AccuracyError, DataError, DomainError, FitError, GeometryError, ValidationError
from .fields import TorusGrid, VectorField, evaluate, locate_max, lp_norm, shift_samples
from .mild import Trajectory, nse_residual

logger = logging.getLogger(__name__)

CLASSIFY_WINDOW = 16
CLASSIFY_MIN_SAMPLES = 8
SLOPE_TOL = 0.05


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlowupTrace:
    times: np.ndarray
    h: np.ndarray
    H: np.ndarray
    T_candidate: float | None = None

    def __post_init__(self):
        if self.times.size == 0:
            raise DataError("empty trace")
        if self.times.shape != self.h.shape or self.h.shape != self.H.shape:
            raise ValidationError("times, h and H must have equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("trace times must be strictly increasing")
        if self.T_candidate is not None and self.times[-1] >= self.T_candidate:
            raise DomainError("trace times must precede the candidate blow-up time")

    @classmethod
    def from_series(cls, times, h, T_candidate: float | None = None) -> "BlowupTrace":
        times = np.asarray(times, dtype=float)
        h = np.asarray(h, dtype=float)
        if h.size == 0:
            raise DataError("empty trace")
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValidationError("h must be finite and non-negative")
        return cls(times, h, np.maximum.accumulate(h), T_candidate)


def trace_from(traj: Trajectory) -> BlowupTrace:
    """Sup-norm trace of a trajectory, sampled at the grid nodes."""
    if len(traj) < 2:
        raise DataError("trace needs at least 2 snapshots")
    h = np.sqrt(np.sum(traj.data ** 2, axis=1)).reshape(len(traj), -1).max(axis=1)
    return BlowupTrace.from_series(traj.times, h)


def _remaining(trace: BlowupTrace, T: float) -> np.ndarray:
    if np.any(trace.times >= T):
        raise DomainError(f"trace times must be < T = {T:g}")
    return T - trace.times


def leray_rate(trace: BlowupTrace, T: float) -> float:
    """``inf_t h(t) sqrt(T - t)`` over the recorded times."""
    return float(np.min(trace.h * np.sqrt(_remaining(trace, T))))


@dataclass
class Classification:
    kind: str
    slope: float
    C_fit: float | None
    C_sup: float | None
    window: int
    leray_rate_inf: float
    fit_residual: float
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "type": self.kind,
            "slope": self.slope,
            "C_fit": self.C_fit,
            "C_sup": self.C_sup,
            "window": self.window,
            "leray_rate_inf": self.leray_rate_inf,
            "fit_residual": self.fit_residual,
            "flags": list(self.flags),
        }


def classify(trace: BlowupTrace, T: float, window: int = CLASSIFY_WINDOW,
             slope_tol: float = SLOPE_TOL) -> Classification:
    """Type I / Type II / no blow-up from the growth exponent on the last ``window`` samples.

    The exponent is the least-squares slope of ``log h`` against
    ``-log(T - t)``.  Slopes below ``slope_tol`` mean bounded growth, slopes
    above ``1/2 + slope_tol`` mean faster than the self-similar rate.  For
    Type I, ``C_fit`` is the fitted constant with the exponent pinned at 1/2
    (a geometric mean, insensitive to multiplicative noise) and ``C_sup`` the
    largest ``h sqrt(T - t)`` in the window.
    """
    rem = _remaining(trace, T)
    n = min(window, trace.times.size)
    if n < CLASSIFY_MIN_SAMPLES:
        raise FitError(f"classification window has {n} samples; at least {CLASSIFY_MIN_SAMPLES} needed")
    h = trace.h[-n:]
    if np.any(h <= 0):
        raise FitError("h must be positive on the fit window")
    x = -np.log(rem[-n:])
    y = np.log(h)
    if np.ptp(x) == 0:
        raise FitError("degenerate fit window")
    A = np.stack([x, np.ones_like(x)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ np.array([slope, intercept]) - y) ** 2)))
    rate = leray_rate(trace, T)
    flags = []
    if slope < slope_tol:
        kind, c_fit, c_sup = "NoBlowup", None, None
        flags.append("no Leray-consistent blow-up")
    elif slope > 0.5 + slope_tol:
        kind, c_fit, c_sup = "TypeII", None, None
    else:
        kind = "TypeI"
        scaled = h * np.sqrt(rem[-n:])
        c_fit = float(np.exp(np.mean(np.log(scaled))))
        c_sup = float(np.max(scaled))
    return Classification(kind, float(slope), c_fit, c_sup, n, rate, resid, flags)


# ---------------------------------------------------------------------------
# Rescaling
# ---------------------------------------------------------------------------

def gamma_schedule(k: int) -> float:
    return 1.0 + 2.0 ** (-k)


@dataclass(frozen=True)
class RescaleStep:
    x_k: tuple
    t_k: float
    M_k: float
    gamma_k: float = 1.0
    lambda_k: float | None = None

    def __post_init__(self):
        if not self.M_k > 0:
            raise ValidationError("M_k must be positive")
        if self.gamma_k < 1:
            raise ValidationError("gamma_k must be >= 1")
        object.__setattr__(self, "x_k", tuple(float(v) for v in self.x_k))

    def map_point(self, x: Sequence[float]) -> np.ndarray:
        """Image of a source point in rescaled coordinates."""
        return self.M_k * (np.asarray(x, dtype=float) - np.asarray(self.x_k))

    def map_time(self, t: float) -> float:
        return self.M_k ** 2 * (t - self.t_k)


def _snapshot_at(traj: Trajectory, t: float) -> np.ndarray:
    """Snapshot at ``t``, linear in time between stored snapshots."""
    times = traj.times
    if t < times[0] - 1e-14 or t > times[-1] + 1e-14:
        raise GeometryError(f"time {t:g} outside [{times[0]:g}, {times[-1]:g}]")
    m = int(np.searchsorted(times, t))
    if m < times.size and abs(times[m] - t) <= 1e-14 * max(1.0, abs(t)):
        return traj.data[m]
    if m > 0 and abs(times[m - 1] - t) <= 1e-14 * max(1.0, abs(t)):
        return traj.data[m - 1]
    w = (t - times[m - 1]) / (times[m] - times[m - 1])
    return (1 - w) * traj.data[m - 1] + w * traj.data[m]


def _sample_shifted(grid: TorusGrid, comps: np.ndarray, offset: np.ndarray, method: str) -> np.ndarray:
    if method == "spectral":
        return np.stack([shift_samples(grid, c, offset) for c in comps])
    if method == "cubic":
        idx = np.indices(grid.shape, dtype=float)
        coords = [idx[a] + offset[a] / grid.spacing for a in range(grid.dim)]
        return np.stack([map_coordinates(c, coords, order=3, mode="grid-wrap") for c in comps])
    raise ValidationError(f"unknown interpolation {method!r}")


def point_value(grid: TorusGrid, comps: np.ndarray, x: Sequence[float], method: str = "spectral") -> np.ndarray:
    """Velocity vector at one point, with the interpolation used by :func:`rescale`."""
    x = np.asarray(x, dtype=float)
    if method == "spectral":
        return np.array([evaluate(grid, c, x[None])[0] for c in comps])
    node = np.zeros(grid.dim)
    vals = _sample_shifted(grid, comps, x - node, method)
    return vals[(slice(None),) + (0,) * grid.dim]


def make_rescale_step(traj: Trajectory, index: int, k: int = 0, method: str = "spectral") -> RescaleStep:
    """Centre at the refined argmax of ``|u|`` in snapshot ``index``; ``M_k = |u(x_k, t_k)|``."""
    snap = traj.snapshot(index)
    ext = locate_max(snap)
    M = float(np.linalg.norm(point_value(traj.grid, snap.components, ext.point, method)))
    H = float(np.max(np.sqrt(np.sum(traj.data[: index + 1] ** 2, axis=1))))
    gamma = gamma_schedule(k)
    if M < H / gamma:
        logger.info("M_k = %.6g below H/gamma_k = %.6g; snapshot is not near-maximal", M, H / gamma)
    return RescaleStep(tuple(ext.point), float(traj.times[index]), M, gamma)


def admissible_M(traj: Trajectory, step: RescaleStep, window: tuple[float, float, float] | None) -> float:
    """Smallest ``M`` for which the requested window ``(half_width, s_lo, s_hi)`` fits the source."""
    if window is None:
        return 0.0
    half, s_lo, s_hi = window
    t0, t1 = traj.times[0], traj.times[-1]
    need = [2.0 * half / traj.grid.length]
    if s_lo < 0:
        need.append(math.inf if step.t_k <= t0 else math.sqrt(-s_lo / (step.t_k - t0)))
    if s_hi > 0:
        need.append(math.inf if step.t_k >= t1 else math.sqrt(s_hi / (t1 - step.t_k)))
    return max(need)


def rescale(traj: Trajectory, step: RescaleStep, method: str = "spectral",
            window: tuple[float, float, float] | None = None) -> Trajectory:
    """``v(y, s) = u(x_k + y / M, t_k + s / M^2) / M`` on the torus of period ``L M``.

    Output times are the images of the source times, with a snapshot at
    ``s = 0`` inserted (linear in time) when ``t_k`` is not stored.  A
    ``window`` of ``(half_width, s_lo, s_hi)`` must fit inside the source;
    otherwise ``GeometryError`` reports the admissible range of ``M``.
    """
    grid = traj.grid
    if len(step.x_k) != grid.dim:
        raise ValidationError("x_k has the wrong dimension")
    if not traj.times[0] - 1e-14 <= step.t_k <= traj.times[-1] + 1e-14:
        raise GeometryError(f"t_k = {step.t_k:g} outside the trajectory")
    M_min = admissible_M(traj, step, window)
    if step.M_k < M_min:
        raise GeometryError(f"rescaled window escapes the source domain; need M_k >= {M_min:.6g} "
                            f"(got {step.M_k:.6g}); admissible range [{M_min:.6g}, inf)")
    M = step.M_k
    out_grid = TorusGrid(grid.dim, grid.n, grid.length * M)
    offset = np.asarray(step.x_k)
    times = list(traj.times)
    frames = list(traj.data)
    if not np.any(np.abs(traj.times - step.t_k) <= 1e-14 * max(1.0, abs(step.t_k))):
        m = int(np.searchsorted(traj.times, step.t_k))
        times.insert(m, step.t_k)
        frames.insert(m, _snapshot_at(traj, step.t_k))
    data = np.stack([_sample_shifted(grid, f, offset, method) / M for f in frames])
    s = M ** 2 * (np.asarray(times) - step.t_k)
    return Trajectory(out_grid, s, data, f"rescaled/{method}", None if traj.dt is None else traj.dt * M ** 2)


def second_rescale(v: Trajectory, s_k: float, M_k: float | None = None, method: str = "spectral",
                   window: tuple[float, float, float] | None = None) -> tuple[Trajectory, RescaleStep]:
    """``w(x, tau) = v(e_1 + x / M, s_k + tau / M^2) / M``; ``M`` defaults to ``|v(e_1, s_k)|``."""
    grid = v.grid
    e1 = np.zeros(grid.dim)
    e1[0] = 1.0
    if M_k is None:
        frame = _snapshot_at(v, s_k)
        M_k = float(np.linalg.norm(point_value(grid, frame, e1, method)))
    step = RescaleStep(tuple(e1), s_k, M_k)
    return rescale(v, step, method, window), step


def excluded_cylinder(grid: TorusGrid, M: float) -> np.ndarray:
    """Mask of ``sqrt((x_1 + M)^2 + x_2^2) <= M / 2`` with minimal-image coordinates."""
    pts = [np.mod(x + grid.length / 2, grid.length) - grid.length / 2 for x in grid.mesh()]
    return np.hypot(pts[0] + M, pts[1]) <= M / 2


def rescale_residuals(source: Trajectory, rescaled: Trajectory) -> tuple[float, float]:
    """Relative NSE residuals (residual over the largest term) of source and rescaled runs."""
    return relative_nse_residual(source), relative_nse_residual(rescaled)


def relative_nse_residual(traj: Trajectory) -> float:
    """``nse_residual`` divided by ``sup |Laplace u| + sup |d_t u|``; invariant under rescaling."""
    g = traj.grid
    lap = np.fft.irfftn(-g.k2 * np.fft.rfftn(traj.data, axes=g.axes), s=g.shape, axes=g.axes)
    dudt = np.gradient(traj.data, traj.times, axis=0, edge_order=2)
    scale = float(np.max(np.abs(lap[1:-1]))) + float(np.max(np.abs(dudt[1:-1])))
    res = nse_residual(traj)
    return res / scale if scale > 0 else res


# ---------------------------------------------------------------------------
# Scale-invariant monitors
# ---------------------------------------------------------------------------

@dataclass
class MonitorReport:
    times: np.ndarray
    sup_rho_u: np.ndarray | None
    sup_sqrt_u: np.ndarray | None
    applicable: dict
    plateau: tuple[float, float] | None = None

    def as_dict(self) -> dict:
        def lst(a):
            return None if a is None else [float(v) for v in a]
        return {
            "times": lst(self.times),
            "sup_rho_u": lst(self.sup_rho_u),
            "sup_sqrt_T_minus_t_u": lst(self.sup_sqrt_u),
            "applicable": dict(self.applicable),
            "plateau": None if self.plateau is None else list(self.plateau),
        }


def axis_distance(grid: TorusGrid, axis_point: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """Minimal-image distance to the vertical line through ``axis_point`` (3D grids)."""
    x, y = grid.mesh()[:2]
    L = grid.length
    dx = np.mod(x - axis_point[0] + L / 2, L) - L / 2
    dy = np.mod(y - axis_point[1] + L / 2, L) - L / 2
    return np.hypot(dx, dy)


def scale_invariant_monitors(traj: Trajectory, T: float | None = None,
                             axis_point: Sequence[float] = (0.0, 0.0), plateau_tol: float = 1e-3) -> MonitorReport:
    """``sup rho |u|`` (3D only) and ``sup sqrt(T - t) |u|`` (when ``T`` is given) per snapshot."""
    mag = np.sqrt(np.sum(traj.data ** 2, axis=1))
    applicable = {"rho_u": traj.grid.dim == 3, "sqrt_T_minus_t_u": T is not None}
    rho_u = None
    plateau = None
    if applicable["rho_u"]:
        rho = axis_distance(traj.grid, axis_point)
        weighted = rho[None] * mag
        rho_u = weighted.reshape(len(traj), -1).max(axis=1)
        last = weighted[-1]
        near = last >= (1 - plateau_tol) * rho_u[-1]
        plateau = (float(rho[near].min()), float(rho[near].max()))
    sq = None
    if T is not None:
        if np.any(traj.times >= T):
            raise DomainError("monitor times must precede T")
        sq = np.sqrt(T - traj.times) * mag.reshape(len(traj), -1).max(axis=1)
    return MonitorReport(traj.times.copy(), rho_u, sq, applicable, plateau)


def capped_swirl(grid: TorusGrid, axis_point: Sequence[float] = (0.0, 0.0), inner: float = 1.0,
                 outer: float = 2.0, ramp: float = 1.0, filter_time: float | None = None) -> VectorField:
    """Swirl with ``rho |u| = 1`` for ``inner <= rho <= outer``, ``u_theta = 1 / rho`` there.

    The profile ``rho u_theta`` rises smoothly from 0 on the axis and falls
    back to 0 beyond ``outer``, so the field is smooth and periodic.  A short
    heat filter (default time ``dx^2``) removes the unresolved tail of the
    spectrum so that node values and the interpolant agree.
    """
    if grid.dim != 3:
        raise ValidationError("capped swirl is a 3D field")
    if outer + ramp >= grid.length / 2:
        raise GeometryError("profile does not fit inside half a period")
    rho = axis_distance(grid, axis_point)

    def smoothstep(s):
        s = np.clip(s, 0.0, 1.0)
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
        return a / (a + b)

    profile = smoothstep(rho / inner) * (1.0 - smoothstep((rho - outer) / ramp))
    x, y, _ = grid.mesh()
    L = grid.length
    dx = np.mod(x - axis_point[0] + L / 2, L) - L / 2
    dy = np.mod(y - axis_point[1] + L / 2, L) - L / 2
    safe = np.where(rho > 0, rho, 1.0) ** 2
    # u = profile / rho * e_theta with e_theta = (-dy, dx) / rho
    comps = np.stack([-dy * profile / safe, dx * profile / safe, np.zeros(grid.shape)])
    comps[:, rho == 0] = 0.0
    if filter_time is None:
        filter_time = grid.spacing ** 2
    damp = np.exp(-grid.k2 * filter_time)
    comps = np.stack([grid.ifft(damp * grid.fft(c)) for c in comps])
    return VectorField(grid, comps, 0.0)


# ---------------------------------------------------------------------------
# Mixed norms and the tail integral
# ---------------------------------------------------------------------------

def lpq_norm(traj: Trajectory, p: float, q: float) -> float:
    """``( int ||u(t)||_{L^p}^q dt )^{1/q}`` with the trapezoid rule in time; ``q = inf`` allowed."""
    norms = np.array([lp_norm(f, p) for f in traj.fields])
    if math.isinf(q):
        return float(np.max(norms))
    if len(traj) < 2:
        raise DataError("time integral needs at least 2 snapshots")
    return float(integrate.trapezoid(norms ** q, traj.times) ** (1.0 / q))


def _tail_radial(a: float) -> float:
    """``int_0^1 ds / (sqrt(s) + a)^2``, in closed form."""
    if a == 0:
        return math.inf
    return 2.0 * (math.log1p(1.0 / a) + a / (1.0 + a) - 1.0)


def tail_integral_I(M: float, rel_tol: float = 1e-10) -> float:
    """The tail integral ``I(M)`` over ``(-1, 0) x R x {|x'| <= M/2}``.

    The ``x_3`` integral equals ``4 pi / M^3``; with ``x' = M a`` the
    remaining integral is ``2 pi M^2 int_0^{1/2} a g(a) da`` where ``g`` is the
    closed-form time integral.  Hence ``I(M) = 8 pi^2 J / M``.
    """
    if not M >= 1:
        raise DomainError("M must be >= 1")
    val, err = integrate.quad(lambda a: a * _tail_radial(a), 0.0, 0.5, epsabs=0.0, epsrel=rel_tol, limit=200)
    if not err <= 1e-6 * abs(val):
        raise AccuracyError(f"radial quadrature error {err:.2e} too large", err)
    return (4.0 * math.pi / M ** 3) * 2.0 * math.pi * M ** 2 * val


def tail_integral_oracle(M: float) -> float:
    """Independent evaluation: 2D quadrature over ``(tau, |x'|)`` times a numerical ``x_3`` integral."""
    inner, _ = integrate.dblquad(
        lambda tau, rho: 2.0 * math.pi * rho / (math.sqrt(-tau) + rho / M) ** 2,
        0.0, M / 2, -1.0, 0.0, epsabs=0.0, epsrel=1e-11)
    x3, _ = integrate.quad(lambda x: 1.0 / (M * M / 4 + x * x) ** 2, -np.inf, np.inf, epsabs=0.0, epsrel=1e-12)
    return inner * x3
