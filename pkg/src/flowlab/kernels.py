"""Heat kernel, Laplace fundamental solution, generating function and Oseen kernels.

Sign convention: ``-Laplace(G) = delta``, so that ``G = 1/(4 pi |x|)`` in 3D and
``G = -log|x| / (2 pi)`` in 2D.  With it, ``Phi(., t) = S(t) G`` satisfies
``Laplace(Phi) = -Gamma`` and the Oseen kernel simplifies to

    K_ij = (-delta_ij Laplace + d_i d_j) Phi = delta_ij Gamma + d_i d_j Phi.

``Phi`` is radial, ``Phi = phi(r)``.  Writing ``b = phi'/r``, ``a = b'/r`` and
``c = a'/r`` gives

    K_ij  = delta_ij (Gamma + b) + a x_i x_j
    K_ijk = delta_ij d_k Gamma + a (delta_ik x_j + delta_jk x_i + delta_ij x_k) + c x_i x_j x_k

``phi'`` is available in closed form in both dimensions from the flux identity
``r^(n-1) phi'(r) = -int_0^r rho^(n-1) Gamma d(rho)`` (per unit sphere area),
so no derivative is ever taken numerically.  ``b, a, c`` are evaluated in the
similarity variable ``q = r / (2 sqrt t)``: by power series for small ``q``
and by closed forms otherwise.
"""

from __future__ import annotations

import itertools
import math
import threading
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate
from scipy.special import erf, i0e

from .errors import DomainError, FitError, SingularityError, ValidationError

SERIES_CUTOFF = 1.0
SERIES_TERMS = 40
NEAR_SINGULAR = 1e-12


class AccuracyWarning(UserWarning):
    pass


def _as_point(x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValidationError("x must be a single point")
    return x


def _check_dim(n: int, x: np.ndarray) -> None:
    if n not in (2, 3):
        raise ValidationError(f"n must be 2 or 3, got {n}")
    if x.size != n:
        raise ValidationError(f"point has {x.size} coordinates, expected {n}")


# ---------------------------------------------------------------------------
# Gamma and G
# ---------------------------------------------------------------------------

def heat_kernel(x, t: float, n: int) -> float:
    x = _as_point(x)
    _check_dim(n, x)
    if not t > 0:
        raise DomainError("heat kernel requires t > 0")
    return float((4.0 * math.pi * t) ** (-n / 2) * math.exp(-float(x @ x) / (4.0 * t)))


def laplace_green(x, n: int) -> float:
    x = _as_point(x)
    _check_dim(n, x)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise SingularityError("Laplace fundamental solution is singular at x = 0")
    if n == 3:
        return 1.0 / (4.0 * math.pi * r)
    return -math.log(r) / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# Generating function Phi = S(t) G
# ---------------------------------------------------------------------------

def _phi3(r: float, t: float) -> float:
    if t == 0.0:
        return 1.0 / (4.0 * math.pi * r)
    s = 0.5 / math.sqrt(t)
    q = s * r
    if q < 1e-8:
        # erf(q)/q -> 2/sqrt(pi) (1 - q^2/3)
        return s / (4.0 * math.pi) * (2.0 / math.sqrt(math.pi)) * (1.0 - q * q / 3.0)
    return math.erf(q) / (4.0 * math.pi * r)


_phi2_lock = threading.Lock()


@lru_cache(maxsize=4096)
def _phi2_cached(r: float, t: float) -> float:
    return _phi2_quadrature(r, t)


def _phi2_quadrature(r: float, t: float, rtol: float = 1e-10) -> float:
    """Radial quadrature of ``int G(y) Gamma(x - y, t) dy`` in 2D.

    The angular integral of the heat kernel is ``exp(-(r - rho)^2 / 4t) i0e(r rho / 2t) / (2t)``.
    """
    def integrand(rho):
        if rho == 0.0:
            return 0.0
        ang = math.exp(-(r - rho) ** 2 / (4.0 * t)) * i0e(r * rho / (2.0 * t)) / (2.0 * t)
        return -math.log(rho) / (2.0 * math.pi) * ang * rho

    width = math.sqrt(t)
    hi = r + 40.0 * width
    breaks = sorted({b for b in (1.0, r, max(r - 10 * width, 0.0), r + 10 * width) if 0.0 < b < hi})
    edges = [0.0] + breaks + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=rtol, limit=400)
        total += val
    return total


def generating_phi(x, t: float, n: int) -> float:
    """``Phi(x, t)``: closed form in 3D, cached radial quadrature in 2D."""
    x = _as_point(x)
    _check_dim(n, x)
    if t < 0:
        raise DomainError("generating function requires t >= 0")
    r = float(np.linalg.norm(x))
    if r == 0.0 and t == 0.0:
        raise SingularityError("Phi is singular at (x, t) = (0, 0)")
    if t == 0.0:
        return laplace_green(x, n)
    if n == 3:
        return _phi3(r, t)
    with _phi2_lock:
        return _phi2_cached(r, t)


def phi2_closed_form(r: float, t: float) -> float:
    """``-(log r + E1(r^2/4t)/2) / (2 pi)``; used only as a cross-check in tests."""
    from scipy.special import exp1
    return -(math.log(r) + 0.5 * exp1(r * r / (4.0 * t))) / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# Radial derivative profiles
# ---------------------------------------------------------------------------

def _series_coefficients(n: int) -> np.ndarray:
    """Coefficients of beta(q) = sum_m c_m q^(2m) (without the dimensional prefactor)."""
    m = np.arange(SERIES_TERMS + 3, dtype=float)
    fact = np.array([math.factorial(int(k)) for k in m], dtype=float)
    if n == 2:
        # (1 - e^{-q^2}) / q^2 = sum (-1)^m q^{2m} / (m+1)!
        fact1 = np.array([math.factorial(int(k) + 1) for k in m], dtype=float)
        return (-1.0) ** m / fact1
    # erf(q)/q = 2/sqrt(pi) sum (-1)^k q^{2k} / (k! (2k+1)); beta = (1/q) d/dq of that
    k = m + 1
    factk = np.array([math.factorial(int(v)) for v in k], dtype=float)
    return 2.0 / math.sqrt(math.pi) * 2.0 * k * (-1.0) ** k / (factk * (2.0 * k + 1.0))


_COEFFS = {2: _series_coefficients(2), 3: _series_coefficients(3)}


def _series_D(coeffs: np.ndarray) -> np.ndarray:
    """Apply D = (1/q) d/dq to a series in q^2."""
    m = np.arange(1, coeffs.size)
    return 2.0 * m * coeffs[1:]


def _eval_series(coeffs: np.ndarray, q: float) -> float:
    q2 = q * q
    return float(np.polynomial.polynomial.polyval(q2, coeffs[:SERIES_TERMS]))


def _profiles_closed(n: int, q: float) -> tuple[float, float, float]:
    if n == 2:
        w = math.exp(-q * q)
        om = -math.expm1(-q * q)
        beta = -om / q ** 2
        d1 = -(2.0 * w / q ** 2 - 2.0 * om / q ** 4)
        d2 = -(-4.0 * w / q ** 2 - 8.0 * w / q ** 4 + 8.0 * om / q ** 6)
        return beta, d1, d2
    g = 2.0 / math.sqrt(math.pi) * math.exp(-q * q)
    e = math.erf(q)
    beta = g / q ** 2 - e / q ** 3
    d1 = -2.0 * g / q ** 2 - 3.0 * g / q ** 4 + 3.0 * e / q ** 5
    d2 = 4.0 * g / q ** 2 + 10.0 * g / q ** 4 + 15.0 * g / q ** 6 - 15.0 * e / q ** 7
    return beta, d1, d2


def _profiles_series(n: int, q: float) -> tuple[float, float, float]:
    c0 = _COEFFS[n]
    c1 = _series_D(c0)
    c2 = _series_D(c1)
    sign = -1.0 if n == 2 else 1.0
    return sign * _eval_series(c0, q), sign * _eval_series(c1, q), sign * _eval_series(c2, q)


def radial_profiles(r: float, t: float, n: int) -> tuple[float, float, float]:
    """``(b, a, c)`` with ``b = phi'/r``, ``a = b'/r``, ``c = a'/r``."""
    norm = 1.0 / (2.0 * math.pi) if n == 2 else 1.0 / (4.0 * math.pi)
    if t == 0.0:
        if n == 2:
            return -norm / r ** 2, 2.0 * norm / r ** 4, -8.0 * norm / r ** 6
        return -norm / r ** 3, 3.0 * norm / r ** 5, -15.0 * norm / r ** 7
    s = 0.5 / math.sqrt(t)
    q = s * r
    if q < SERIES_CUTOFF:
        beta, d1, d2 = _profiles_series(n, q)
    else:
        beta, d1, d2 = _profiles_closed(n, q)
    return norm * s ** n * beta, norm * s ** (n + 2) * d1, norm * s ** (n + 4) * d2


# ---------------------------------------------------------------------------
# Oseen kernels
# ---------------------------------------------------------------------------

def _validate_singular(x: np.ndarray, t: float) -> float:
    if t < 0:
        raise DomainError("kernels require t >= 0")
    r2 = float(x @ x)
    if r2 == 0.0 and t == 0.0:
        raise SingularityError("kernel is singular at (x, t) = (0, 0)")
    return r2


def _check_indices(n: int, *idx: int) -> None:
    for i in idx:
        if not 1 <= i <= n:
            raise ValidationError(f"index {i} outside 1..{n}")


def _gamma_or_zero(r2: float, t: float, n: int) -> float:
    if t == 0.0:
        return 0.0
    return (4.0 * math.pi * t) ** (-n / 2) * math.exp(-r2 / (4.0 * t))


def oseen_kij(i: int, j: int, x, t: float, n: int) -> float:
    x = _as_point(x)
    _check_dim(n, x)
    _check_indices(n, i, j)
    r2 = _validate_singular(x, t)
    b, a, _ = radial_profiles(math.sqrt(r2), t, n)
    i0, j0 = i - 1, j - 1
    val = a * (x[i0] * x[j0])  # grouped so that K_ij == K_ji exactly
    if i0 == j0:
        val += _gamma_or_zero(r2, t, n) + b
    return float(val)


def oseen_kijk(i: int, j: int, k: int, x, t: float, n: int) -> float:
    x = _as_point(x)
    _check_dim(n, x)
    _check_indices(n, i, j, k)
    r2 = _validate_singular(x, t)
    _, a, c = radial_profiles(math.sqrt(r2), t, n)
    i0, j0, k0 = i - 1, j - 1, k - 1
    d = lambda p, q: 1.0 if p == q else 0.0  # noqa: E731
    val = a * (d(i0, k0) * x[j0] + d(j0, k0) * x[i0] + d(i0, j0) * x[k0]) + c * (x[i0] * x[j0]) * x[k0]
    if i0 == j0 and t > 0:
        val += -x[k0] / (2.0 * t) * _gamma_or_zero(r2, t, n)
    return float(val)


def oseen_tensor(x, t: float, n: int) -> np.ndarray:
    """Full ``K_ij`` matrix at one point."""
    return np.array([[oseen_kij(i, j, x, t, n) for j in range(1, n + 1)] for i in range(1, n + 1)])


# ---------------------------------------------------------------------------
# Query interface
# ---------------------------------------------------------------------------

KINDS = ("Gamma", "G", "Phi", "Kij", "Kijk")


@dataclass(frozen=True)
class KernelQuery:
    kind: str
    x: Sequence[float]
    t: float = 0.0
    n: int = 3
    indices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        need = {"Kij": 2, "Kijk": 3}.get(self.kind, 0)
        if len(self.indices) != need:
            raise ValidationError(f"{self.kind} needs {need} indices, got {len(self.indices)}")


@dataclass
class KernelResult:
    value: float
    warnings: list[str] = field(default_factory=list)


def evaluate_query(q: KernelQuery) -> KernelResult:
    """Evaluate a query; near-singular points attach an accuracy warning."""
    x = _as_point(q.x)
    notes = []
    if q.kind in ("Phi", "Kij", "Kijk") and float(x @ x) + q.t < NEAR_SINGULAR:
        notes.append(f"near-singular point: |x|^2 + t = {float(x @ x) + q.t:.3e}; relative accuracy not guaranteed")
    if q.kind == "Gamma":
        v = heat_kernel(x, q.t, q.n)
    elif q.kind == "G":
        v = laplace_green(x, q.n)
    elif q.kind == "Phi":
        v = generating_phi(x, q.t, q.n)
    elif q.kind == "Kij":
        v = oseen_kij(*q.indices, x, q.t, q.n)
    else:
        v = oseen_kijk(*q.indices, x, q.t, q.n)
    if not math.isfinite(v):
        notes.append("non-finite value")
    for note in notes:
        warnings.warn(note, AccuracyWarning, stacklevel=2)
    return KernelResult(v, notes)


# ---------------------------------------------------------------------------
# Finite-difference helpers (used only for independent checks)
# ---------------------------------------------------------------------------

def fd_step(x, t: float) -> float:
    x = np.asarray(x, dtype=float)
    return max(1e-4, 1e-3 * math.sqrt(float(x @ x) + t))


def fd_partial(fn, x, axis: int, h: float | None = None, t: float = 0.0) -> float:
    """Fourth-order central difference of ``fn(point)`` along ``axis``."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x, t) if h is None else h
    e = np.zeros_like(x)
    e[axis] = h
    return (-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12.0 * h)


def kij_divergence(i: int, x, t: float, n: int, h: float | None = None) -> float:
    """``sum_j d_j K_ij`` by finite differences."""
    return sum(fd_partial(lambda p: oseen_kij(i, j, p, t, n), x, j - 1, h, t) for j in range(1, n + 1))


# ---------------------------------------------------------------------------
# Decay fits
# ---------------------------------------------------------------------------

class DecayFit(NamedTuple):
    slope: float
    residual: float
    scales: np.ndarray
    max_abs: np.ndarray
    bound_ratio: np.ndarray


def _sphere_directions(n: int, count: int) -> np.ndarray:
    if n == 2:
        th = np.linspace(0.0, math.pi, count, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci points on a hemisphere plus coordinate axes
    i = np.arange(count) + 0.5
    zc = 1.0 - i / count
    ph = math.pi * (1.0 + 5 ** 0.5) * i
    rr = np.sqrt(1.0 - zc ** 2)
    pts = np.stack([rr * np.cos(ph), rr * np.sin(ph), zc], axis=1)
    return np.vstack([np.eye(3), pts])


def max_over_sphere(kind: str, n: int, s: float, n_dirs: int = 24, n_angles: int = 9) -> float:
    """``max |kernel|`` over ``|x|^2 + t = s^2`` (all index combinations)."""
    if kind == "Gamma":
        return heat_kernel(np.zeros(n), s * s, n)
    order = {"Kij": 2, "Kijk": 3}.get(kind)
    if order is None:
        raise ValidationError(f"decay fits support Gamma, Kij, Kijk; got {kind!r}")
    best = 0.0
    alphas = np.linspace(0.0, 0.5 * math.pi, n_angles)
    fn = oseen_kij if order == 2 else oseen_kijk
    for alpha in alphas:
        rad, t = s * math.sin(alpha), (s * math.cos(alpha)) ** 2
        dirs = _sphere_directions(n, n_dirs) if rad > 0 else np.zeros((1, n))
        for d in dirs:
            x = rad * d
            for idx in itertools.product(range(1, n + 1), repeat=order):
                best = max(best, abs(fn(*idx, x, t, n)))
    return best


def verify_decay(kind: str, n: int, samples: Sequence[float]) -> DecayFit:
    """Least-squares slope of ``log max|kernel|`` against ``log s``.

    For ``Gamma`` the probe is the ray ``x = 0, t = s^2``.
    """
    scales = np.asarray(sorted(set(float(s) for s in samples)))
    if scales.size < 2 or np.any(scales <= 0) or scales[-1] / scales[0] < 1.0 + 1e-9:
        raise FitError("decay fit needs at least two distinct positive scales")
    vals = np.array([max_over_sphere(kind, n, s) for s in scales])
    if np.any(vals <= 0):
        raise FitError("kernel vanished on a probe sphere")
    A = np.vstack([np.log(scales), np.ones_like(scales)]).T
    coef, res, *_ = np.linalg.lstsq(A, np.log(vals), rcond=None)
    resid = float(np.sqrt(res[0] / scales.size)) if res.size else 0.0
    power = {"Gamma": n, "Kij": n, "Kijk": n + 1}[kind]
    return DecayFit(float(coef[0]), resid, scales, vals, vals * scales ** power)


def parse_scales(text: str) -> np.ndarray:
    """``"lo:hi:count"`` -> geometric sequence."""
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise ValidationError(f"scales must look like lo:hi:count, got {text!r}") from exc
    if lo <= 0 or hi <= lo or count < 2:
        raise ValidationError(f"invalid scale range {text!r}")
    return np.geomspace(lo, hi, count)
