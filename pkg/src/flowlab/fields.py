"""Grid containers, spectral operators, norms and coordinate transforms.

Periodic fields live on a :class:`TorusGrid` and are differentiated
spectrally with real-to-complex FFTs over the trailing ``dim`` axes.
Axisymmetric fields live on an :class:`AxisymGrid` covering the meridional
half-plane ``0 <= r <= r_max``; their operators are in :mod:`flowlab.axisym`.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import roots_legendre

from .errors import DataError, DimensionError, GeometryError, ValidationError

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``[0, length)^dim`` with ``n`` nodes per axis."""

    dim: int
    n: int
    length: float = TWO_PI

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise DimensionError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2:
            raise ValidationError(f"n must be even and >= 4, got {self.n}")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ValidationError(f"length must be positive, got {self.length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @cached_property
    def coords(self) -> np.ndarray:
        return np.arange(self.n) * self.spacing

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.coords] * self.dim), indexing="ij"))

    def points(self) -> np.ndarray:
        """All nodes as an ``(n**dim, dim)`` array in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    # -- spectral layout -------------------------------------------------
    @cached_property
    def _k1d(self) -> tuple[np.ndarray, np.ndarray]:
        scale = TWO_PI / self.length
        full = np.fft.fftfreq(self.n, d=1.0 / self.n) * scale
        half = np.fft.rfftfreq(self.n, d=1.0 / self.n) * scale
        return full, half

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable wavenumber arrays in rfftn layout (Nyquist included)."""
        full, half = self._k1d
        ks = []
        for ax in range(self.dim):
            k = half if ax == self.dim - 1 else full
            shape = [1] * self.dim
            shape[ax] = k.size
            ks.append(k.reshape(shape))
        return tuple(ks)

    @cached_property
    def wavenumbers_odd(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers with the Nyquist entry zeroed, for odd-order derivatives."""
        nyq = self.n // 2 * TWO_PI / self.length
        return tuple(np.where(np.isclose(np.abs(k), nyq), 0.0, k) for k in self.wavenumbers)

    @cached_property
    def k2(self) -> np.ndarray:
        return sum(k * k for k in self.wavenumbers)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule mask in rfftn layout."""
        cut = (2.0 / 3.0) * (self.n // 2) * TWO_PI / self.length
        mask = np.ones(self.spectral_shape, dtype=bool)
        for k in self.wavenumbers:
            mask &= np.abs(k) < cut
        return mask

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.dim - 1) + (self.n // 2 + 1,)

    def fft(self, a: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(a, axes=self.axes)

    def ifft(self, a_hat: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(a_hat, s=self.shape, axes=self.axes)

    def header(self, t: float) -> str:
        return f"# grid: dim={self.dim}, N={self.n}, L={self.length:.17g}, t={t:.17g}"


@dataclass(frozen=True)
class AxisymGrid:
    """Meridional ``(r, z)`` rectangle; the first radial line is the axis ``r = 0``."""

    r_max: float
    z_min: float
    z_max: float
    nr: int
    nz: int

    def __post_init__(self):
        if not self.r_max > 0:
            raise ValidationError("r_max must be positive")
        if not self.z_max > self.z_min:
            raise ValidationError("z_max must exceed z_min")
        if self.nr < 8 or self.nz < 8:
            raise ValidationError("nr and nz must be >= 8")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nr, self.nz)

    @property
    def dr(self) -> float:
        return self.r_max / (self.nr - 1)

    @property
    def dz(self) -> float:
        return (self.z_max - self.z_min) / (self.nz - 1)

    @cached_property
    def r(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.nr)

    @cached_property
    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.nz)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.r, self.z, indexing="ij")


# ---------------------------------------------------------------------------
# Field containers
# ---------------------------------------------------------------------------

def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{what} contains non-finite samples")


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid | AxisymGrid
    samples: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != tuple(self.grid.shape):
            raise ValidationError(f"samples shape {samples.shape} != grid shape {self.grid.shape}")
        _check_finite(samples, "scalar field")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    components: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        comps = np.asarray(self.components, dtype=float)
        expected = (self.grid.dim,) + self.grid.shape
        if comps.shape != expected:
            raise ValidationError(f"components shape {comps.shape} != {expected}")
        _check_finite(comps, "vector field")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        return self.grid.dim

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.components ** 2, axis=0))

    def with_components(self, comps: np.ndarray, time: float | None = None) -> "VectorField":
        return VectorField(self.grid, comps, self.time if time is None else time)


@dataclass(frozen=True, eq=False)
class AxisymField:
    grid: AxisymGrid
    u_r: np.ndarray
    u_theta: np.ndarray
    u_z: np.ndarray
    time: float = 0.0
    axis_tol: float = field(default=1e-12, repr=False)

    def __post_init__(self):
        for name in ("u_r", "u_theta", "u_z"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != self.grid.shape:
                raise ValidationError(f"{name} shape {a.shape} != grid shape {self.grid.shape}")
            _check_finite(a, name)
            object.__setattr__(self, name, a)
        if np.max(np.abs(self.u_r[0])) > self.axis_tol or np.max(np.abs(self.u_theta[0])) > self.axis_tol:
            raise ValidationError("u_r and u_theta must vanish on the axis r = 0")


# ---------------------------------------------------------------------------
# Spectral operators on the torus
# ---------------------------------------------------------------------------

def _require_torus(grid) -> TorusGrid:
    if not isinstance(grid, TorusGrid):
        raise ValidationError("operation requires a TorusGrid field")
    return grid


def derivative_hat(grid: TorusGrid, a_hat: np.ndarray, axis: int) -> np.ndarray:
    return 1j * grid.wavenumbers_odd[axis] * a_hat


def divergence(v: VectorField) -> ScalarField:
    g = _require_torus(v.grid)
    _check_finite(v.components, "vector field")
    div_hat = sum(derivative_hat(g, g.fft(v.components[a]), a) for a in range(g.dim))
    return ScalarField(g, g.ifft(div_hat), v.time)


def gradient(s: ScalarField) -> VectorField:
    g = _require_torus(s.grid)
    s_hat = g.fft(s.samples)
    comps = np.stack([g.ifft(derivative_hat(g, s_hat, a)) for a in range(g.dim)])
    return VectorField(g, comps, s.time)


def laplacian(s: ScalarField) -> ScalarField:
    g = _require_torus(s.grid)
    return ScalarField(g, g.ifft(-g.k2 * g.fft(s.samples)), s.time)


def velocity_gradient(v: VectorField) -> np.ndarray:
    """Array ``G[i, j] = d_j v_i`` of shape ``(dim, dim, *grid)``."""
    g = v.grid
    out = np.empty((g.dim, g.dim) + g.shape)
    for i in range(g.dim):
        vi_hat = g.fft(v.components[i])
        for j in range(g.dim):
            out[i, j] = g.ifft(derivative_hat(g, vi_hat, j))
    return out


def curl2d(v: VectorField) -> ScalarField:
    """Scalar vorticity ``d_1 v_2 - d_2 v_1``."""
    g = _require_torus(v.grid)
    if g.dim != 2:
        raise DimensionError("curl2d requires a 2D field")
    w_hat = derivative_hat(g, g.fft(v.components[1]), 0) - derivative_hat(g, g.fft(v.components[0]), 1)
    return ScalarField(g, g.ifft(w_hat), v.time)


def curl(v: VectorField) -> ScalarField | VectorField:
    """Scalar vorticity in 2D, vector vorticity in 3D."""
    if v.grid.dim == 2:
        return curl2d(v)
    g = v.grid
    h = [g.fft(c) for c in v.components]
    d = lambda comp, ax: derivative_hat(g, h[comp], ax)  # noqa: E731
    w = np.stack([g.ifft(d(2, 1) - d(1, 2)), g.ifft(d(0, 2) - d(2, 0)), g.ifft(d(1, 0) - d(0, 1))])
    return VectorField(g, w, v.time)


def project_hat(grid: TorusGrid, v_hat: np.ndarray) -> np.ndarray:
    """Leray projection in spectral space; the mean mode passes through unchanged."""
    ks = grid.wavenumbers_odd
    k2 = sum(k * k for k in ks)
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    kdotv = sum(ks[a] * v_hat[a] for a in range(grid.dim))
    return np.stack([v_hat[a] - ks[a] * kdotv * inv for a in range(grid.dim)])


def helmholtz_project(v: VectorField) -> VectorField:
    g = _require_torus(v.grid)
    v_hat = np.stack([g.fft(c) for c in v.components])
    p_hat = project_hat(g, v_hat)
    return v.with_components(np.stack([g.ifft(c) for c in p_hat]))


# ---------------------------------------------------------------------------
# Off-grid spectral evaluation
# ---------------------------------------------------------------------------

def _spectral_coefficients(grid: TorusGrid, samples: np.ndarray) -> np.ndarray:
    """Normalized rfft coefficients with Nyquist modes dropped and half-spectrum weights."""
    c = grid.fft(samples) / grid.n ** grid.dim
    nyq = grid.n // 2 * TWO_PI / grid.length
    for k in grid.wavenumbers:
        c = np.where(np.isclose(np.abs(k), nyq), 0.0, c)
    weights = np.full(grid.n // 2 + 1, 2.0)
    weights[0] = 1.0
    return c * weights


def evaluate(grid: TorusGrid, samples: np.ndarray, points: np.ndarray,
             derivative: Sequence[int] | None = None, chunk: int = 2048) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``samples`` at arbitrary points.

    ``derivative`` gives the derivative order per axis, e.g. ``(1, 0)`` for d/dx1.
    Nyquist modes are dropped, so node values are reproduced exactly only for
    fields without Nyquist content.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != grid.dim:
        raise DimensionError(f"points must have {grid.dim} columns")
    c = _spectral_coefficients(grid, samples)
    full, half = grid._k1d
    ks = [full] * (grid.dim - 1) + [half]
    if derivative is not None:
        for ax, order in enumerate(derivative):
            if order:
                shape = [1] * grid.dim
                shape[ax] = ks[ax].size
                c = c * ((1j * ks[ax]) ** order).reshape(shape)
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], chunk):
        p = points[lo:lo + chunk]
        acc = c.reshape(c.shape[0], -1)
        e0 = np.exp(1j * np.outer(p[:, 0], ks[0]))
        acc = (e0 @ acc).reshape((p.shape[0],) + c.shape[1:])
        for ax in range(1, grid.dim):
            e = np.exp(1j * np.outer(p[:, ax], ks[ax]))
            acc = np.einsum("pk,pk...->p...", e, acc)
        out[lo:lo + chunk] = acc.real
    return out


def shift_samples(grid: TorusGrid, samples: np.ndarray, offset: Sequence[float]) -> np.ndarray:
    """Samples of the interpolant at ``nodes + offset`` (Nyquist dropped, as in :func:`evaluate`)."""
    c = grid.fft(samples)
    nyq = grid.n // 2 * TWO_PI / grid.length
    phase = np.ones(grid.spectral_shape, dtype=complex)
    for ax, k in enumerate(grid.wavenumbers):
        c = np.where(np.isclose(np.abs(k), nyq), 0.0, c)
        phase = phase * np.exp(1j * k * offset[ax])
    return grid.ifft(c * phase)


class Extremum(NamedTuple):
    value: float
    point: np.ndarray


def spectral_max(s: ScalarField, upsample: int = 4, candidates: int = 4,
                 newton_steps: int = 8) -> Extremum:
    """Maximum of the trigonometric interpolant, refined by Newton iteration.

    Candidates come from a zero-padded upsampling; each is polished with exact
    spectral gradients and Hessians.
    """
    g = _require_torus(s.grid)
    fine = TorusGrid(g.dim, g.n * upsample, g.length)
    c = g.fft(s.samples)
    pad = np.zeros(fine.spectral_shape, dtype=complex)
    half = g.n // 2
    idx = []
    for ax in range(g.dim - 1):
        idx.append(np.r_[0:half, fine.n - half:fine.n])
    idx.append(np.arange(half + 1))
    pad[np.ix_(*idx)] = c
    nyq = g.n // 2 * TWO_PI / g.length
    for k in fine.wavenumbers:
        pad = np.where(np.isclose(np.abs(k), nyq), 0.0, pad)
    up = fine.ifft(pad) * upsample ** g.dim
    flat = np.argsort(up.ravel())[::-1][:candidates]
    pts = np.stack(np.unravel_index(flat, up.shape), axis=1) * fine.spacing
    best = Extremum(-np.inf, pts[0])
    eye = np.eye(g.dim, dtype=int)
    for p in pts:
        x = p.astype(float)
        for _ in range(newton_steps):
            grad = np.array([evaluate(g, s.samples, x[None], eye[a])[0] for a in range(g.dim)])
            hess = np.empty((g.dim, g.dim))
            for a in range(g.dim):
                for b in range(a, g.dim):
                    hess[a, b] = hess[b, a] = evaluate(g, s.samples, x[None], eye[a] + eye[b])[0]
            try:
                step = np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                break
            if np.linalg.norm(step) > g.spacing:
                break
            x = x - step
            if np.linalg.norm(step) < 1e-13:
                break
        val = evaluate(g, s.samples, x[None])[0]
        val0 = evaluate(g, s.samples, p[None])[0]
        if val0 > val:
            val, x = val0, p
        if val > best.value:
            best = Extremum(val, np.mod(x, g.length))
    return best


def spectral_sup_abs(s: ScalarField) -> float:
    """``sup |s|`` of the interpolant (both signs refined)."""
    hi = spectral_max(s).value
    lo = spectral_max(ScalarField(s.grid, -s.samples, s.time)).value
    return max(hi, lo)


def locate_max(v: VectorField | ScalarField) -> Extremum:
    """Argmax node of ``|v|`` refined by one quadratic-interpolation pass per axis."""
    mag = v.magnitude() if isinstance(v, VectorField) else np.abs(v.samples)
    g = v.grid
    node = np.array(np.unravel_index(np.argmax(mag), mag.shape))
    point = node * g.spacing
    for ax in range(g.dim):
        idx = [int(i) for i in node]
        vals = []
        for off in (-1, 0, 1):
            j = list(idx)
            j[ax] = (idx[ax] + off) % g.n
            vals.append(mag[tuple(j)])
        fm, f0, fp = vals
        denom = fm - 2.0 * f0 + fp
        if denom < 0:
            delta = 0.5 * (fm - fp) / denom
            point[ax] += float(np.clip(delta, -0.5, 0.5)) * g.spacing
    return Extremum(float(mag[tuple(node)]), np.mod(point, g.length))


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

def _pointwise_abs(f: ScalarField | VectorField | AxisymField) -> np.ndarray:
    if isinstance(f, VectorField):
        return f.magnitude()
    if isinstance(f, AxisymField):
        return np.sqrt(f.u_r ** 2 + f.u_theta ** 2 + f.u_z ** 2)
    return np.abs(f.samples)


def sup_norm(f: ScalarField | VectorField | AxisymField) -> float:
    return float(np.max(_pointwise_abs(f)))


def lp_norm(f: ScalarField | VectorField, p: float) -> float:
    """Discrete L^p norm with the torus cell volume; summed with ``math.fsum`` in C order."""
    if math.isinf(p):
        return sup_norm(f)
    if p < 1:
        raise ValidationError("p must be >= 1")
    a = _pointwise_abs(f).ravel()
    vol = f.grid.cell_volume if isinstance(f.grid, TorusGrid) else 1.0
    return (math.fsum((a ** p).tolist()) * vol) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Cylindrical coordinates
# ---------------------------------------------------------------------------

class CylindricalComponents(NamedTuple):
    r: np.ndarray
    z: np.ndarray
    u_r: np.ndarray
    u_theta: np.ndarray
    u_z: np.ndarray


def to_cylindrical(points: np.ndarray, vectors: np.ndarray,
                   axis_point: Sequence[float] = (0.0, 0.0)) -> CylindricalComponents:
    """Project Cartesian vectors onto ``(e_r, e_theta, e_z)`` about a vertical axis.

    On the axis itself the angular frame is undefined; there ``u_r = u_theta = 0``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float))
    if points.shape[1] != 3 or vectors.shape != points.shape:
        raise DimensionError("points and vectors must be (m, 3) arrays")
    _check_finite(vectors, "vectors")
    x = points[:, 0] - axis_point[0]
    y = points[:, 1] - axis_point[1]
    r = np.hypot(x, y)
    on_axis = r == 0.0
    safe = np.where(on_axis, 1.0, r)
    c, s = x / safe, y / safe
    u_r = np.where(on_axis, 0.0, c * vectors[:, 0] + s * vectors[:, 1])
    u_t = np.where(on_axis, 0.0, -s * vectors[:, 0] + c * vectors[:, 1])
    return CylindricalComponents(r, points[:, 2].copy(), u_r, u_t, vectors[:, 2].copy())


def from_cylindrical(points: np.ndarray, u_r, u_theta, u_z,
                     axis_point: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x = points[:, 0] - axis_point[0]
    y = points[:, 1] - axis_point[1]
    r = np.hypot(x, y)
    safe = np.where(r == 0.0, 1.0, r)
    c, s = x / safe, y / safe
    u_r = np.where(r == 0.0, 0.0, u_r)
    u_theta = np.where(r == 0.0, 0.0, u_theta)
    return np.stack([c * u_r - s * u_theta, s * u_r + c * u_theta, np.asarray(u_z, dtype=float) * np.ones_like(r)], axis=1)


def axisym_from_cartesian(grid: AxisymGrid, velocity, time: float = 0.0) -> AxisymField:
    """Sample a Cartesian velocity ``velocity(points) -> (m, 3)`` on the half-plane ``theta = 0``."""
    rr, zz = grid.mesh()
    pts = np.stack([rr.ravel(), np.zeros(rr.size), zz.ravel()], axis=1)
    cyl = to_cylindrical(pts, np.asarray(velocity(pts), dtype=float))
    shape = grid.shape
    return AxisymField(grid, cyl.u_r.reshape(shape), cyl.u_theta.reshape(shape), cyl.u_z.reshape(shape), time)


# ---------------------------------------------------------------------------
# Green identity on a disc
# ---------------------------------------------------------------------------

class GreenIdentity(NamedTuple):
    area: float
    boundary: float
    n_radial: int
    n_angular: int


def disc_integral(func, center: Sequence[float], radius: float,
                  n_radial: int = 48, n_angular: int = 128) -> float:
    """Gauss-Legendre in r times the periodic trapezoid rule in theta."""
    xg, wg = roots_legendre(n_radial)
    rho = 0.5 * radius * (xg + 1.0)
    w_rho = 0.5 * radius * wg * rho
    theta = np.arange(n_angular) * TWO_PI / n_angular
    R, TH = np.meshgrid(rho, theta, indexing="ij")
    pts = np.stack([center[0] + R.ravel() * np.cos(TH.ravel()),
                    center[1] + R.ravel() * np.sin(TH.ravel())], axis=1)
    vals = np.asarray(func(pts), dtype=float).reshape(R.shape)
    return float(np.sum(w_rho[:, None] * vals) * TWO_PI / n_angular)


def green_identity_check(v: VectorField, center: Sequence[float], radius: float,
                         n_radial: int = 48, n_angular: int = 128) -> GreenIdentity:
    """Return the disc integral of the vorticity and the boundary circulation.

    The area term integrates ``d_1 v_2 - d_2 v_1`` over ``B(center, radius)``;
    the boundary term integrates ``v_2 n_1 - v_1 n_2`` over its circle.
    """
    g = _require_torus(v.grid)
    if g.dim != 2:
        raise DimensionError("green_identity_check requires a 2D field")
    c = np.asarray(center, dtype=float)
    if radius <= 0 or np.any(c - radius < 0) or np.any(c + radius > g.length):
        raise GeometryError(f"disc B({c.tolist()}, {radius}) leaves the fundamental domain [0, {g.length})^2")
    omega = curl2d(v).samples
    area = disc_integral(lambda p: evaluate(g, omega, p), c, radius, n_radial, n_angular)
    theta = np.arange(n_angular) * TWO_PI / n_angular
    pts = np.stack([c[0] + radius * np.cos(theta), c[1] + radius * np.sin(theta)], axis=1)
    u1 = evaluate(g, v.components[0], pts)
    u2 = evaluate(g, v.components[1], pts)
    integrand = u2 * np.cos(theta) - u1 * np.sin(theta)
    boundary = float(np.sum(integrand) * radius * TWO_PI / n_angular)
    return GreenIdentity(area, boundary, n_radial, n_angular)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_HEADER = re.compile(r"#\s*grid:\s*dim=(\d+),\s*N=(\d+),\s*L=([^,]+),\s*t=([^,\s]+)")


def _field_rows(f: ScalarField | VectorField) -> np.ndarray:
    g = f.grid
    idx = np.stack(np.unravel_index(np.arange(int(np.prod(g.shape))), g.shape), axis=1)
    if isinstance(f, VectorField):
        vals = f.components.reshape(g.dim, -1).T
    else:
        vals = f.samples.reshape(-1, 1)
    return idx, vals


def write_csv(f: ScalarField | VectorField, fh) -> None:
    """Write one field block: grid header line, then ``i, j[, k], values...`` rows."""
    g = _require_torus(f.grid)
    idx, vals = _field_rows(f)
    fh.write(g.header(f.time) + "\n")
    for row_i, row_v in zip(idx, vals):
        fh.write(",".join(str(int(i)) for i in row_i) + "," + ",".join(f"{x:.17g}" for x in row_v) + "\n")


def field_to_csv(f: ScalarField | VectorField) -> str:
    buf = io.StringIO()
    write_csv(f, buf)
    return buf.getvalue()


def read_csv(text: str) -> list[ScalarField | VectorField]:
    """Parse one or more field blocks written by :func:`write_csv`."""
    fields = []
    header = None
    rows: list[list[float]] = []

    def flush():
        if header is None:
            return
        dim, n, length, t = header
        g = TorusGrid(dim, n, length)
        arr = np.array(rows, dtype=float)
        if arr.shape[0] != n ** dim:
            raise DataError(f"block at t={t} has {arr.shape[0]} rows, expected {n ** dim}")
        idx = arr[:, :dim].astype(int)
        vals = arr[:, dim:]
        order = np.ravel_multi_index(idx.T, g.shape)
        data = np.empty((vals.shape[1], n ** dim))
        data[:, order] = vals.T
        if vals.shape[1] == 1:
            fields.append(ScalarField(g, data[0].reshape(g.shape), t))
        elif vals.shape[1] == dim:
            fields.append(VectorField(g, data.reshape((dim,) + g.shape), t))
        else:
            raise DataError(f"block has {vals.shape[1]} value columns; expected 1 or {dim}")

    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _HEADER.match(line)
            if m is None:
                continue
            flush()
            header = (int(m.group(1)), int(m.group(2)), float(m.group(3)), float(m.group(4)))
            rows = []
        else:
            if header is None:
                raise DataError("data row before grid header")
            rows.append([float(x) for x in line.split(",")])
    flush()
    return fields


def write_binary(f: ScalarField | VectorField, fh) -> None:
    """Grid header line followed by little-endian float64 samples (component-major, C order)."""
    g = _require_torus(f.grid)
    data = f.components if isinstance(f, VectorField) else f.samples[None]
    fh.write((g.header(f.time) + f", components={data.shape[0]}\n").encode())
    fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def read_binary(blob: bytes) -> ScalarField | VectorField:
    nl = blob.index(b"\n")
    head = blob[:nl].decode()
    m = _HEADER.match(head)
    mc = re.search(r"components=(\d+)", head)
    if m is None or mc is None:
        raise DataError("missing grid header")
    dim, n, length, t = int(m.group(1)), int(m.group(2)), float(m.group(3)), float(m.group(4))
    ncomp = int(mc.group(1))
    g = TorusGrid(dim, n, length)
    data = np.frombuffer(blob[nl + 1:], dtype="<f8").reshape((ncomp,) + g.shape)
    if ncomp == 1:
        return ScalarField(g, data[0].copy(), t)
    return VectorField(g, data.copy(), t)
