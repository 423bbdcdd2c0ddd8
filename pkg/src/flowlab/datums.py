"""Initial data on the torus used by the solvers, tests and CLI."""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .fields import TorusGrid, VectorField, project_hat

DATUMS = ("taylor-green", "random", "erf-profile", "zero")


def taylor_green(grid: TorusGrid, t: float = 0.0) -> VectorField:
    """2D Taylor-Green vortex ``(-cos x sin y, sin x cos y) e^{-2t}``; in 3D the third component is zero."""
    x, y = grid.mesh()[:2]
    decay = np.exp(-2.0 * t)
    comps = [-np.cos(x) * np.sin(y) * decay, np.sin(x) * np.cos(y) * decay]
    if grid.dim == 3:
        comps.append(np.zeros(grid.shape))
    return VectorField(grid, np.stack(comps), t)


def taylor_green_vorticity(grid: TorusGrid, t: float = 0.0) -> np.ndarray:
    x, y = grid.mesh()[:2]
    return 2.0 * np.cos(x) * np.cos(y) * np.exp(-2.0 * t)


RANDOM_KMAX = 2.0


def random_band_limited(grid: TorusGrid, seed: int = 0, kmax: float = RANDOM_KMAX,
                        slope: float = 0.0, norm: float = 1.0) -> VectorField:
    """Divergence-free random field with ``0 < |k| <= kmax`` and amplitude ``|k|^slope``.

    Scaled to sup norm ``norm``.  The default band keeps the datum scale near
    the parabolic scale of unit-order times, where the Picard contraction ratio
    grows like the square root of the horizon.  Much wider bands are dominated
    by fast-decaying modes and show almost no dependence on the horizon.
    """
    if kmax * grid.length / (2 * np.pi) >= grid.n // 3:
        raise ValidationError("kmax exceeds the dealiased band of the grid")
    rng = np.random.default_rng(seed)
    ks = grid.wavenumbers
    kmag = np.sqrt(sum(k * k for k in ks))
    band = (kmag > 0) & (kmag <= kmax)
    amp = np.zeros_like(kmag)
    amp[band] = kmag[band] ** slope
    coeffs = []
    for _ in range(grid.dim):
        noise = rng.standard_normal(grid.spectral_shape) + 1j * rng.standard_normal(grid.spectral_shape)
        coeffs.append(noise * amp)
    u_hat = project_hat(grid, np.stack(coeffs))
    comps = np.stack([grid.ifft(c) for c in u_hat])
    # irfft discards the imaginary part of self-conjugate modes; re-projecting keeps the field solenoidal
    comps = np.stack([grid.ifft(c) for c in project_hat(grid, np.stack([grid.fft(c) for c in comps]))])
    sup = float(np.max(np.sqrt(np.sum(comps ** 2, axis=0))))
    if sup == 0:
        raise ValidationError("band is empty; increase kmax")
    return VectorField(grid, comps * (norm / sup), 0.0)


def erf_profile(grid: TorusGrid, width: float | None = None) -> VectorField:
    """Shear flow ``(0, s(x))`` where ``s`` is a square wave smoothed by a short heat flow.

    ``s`` jumps from -1 to 1 at ``x = L/4`` and back at ``3L/4``; ``width`` is the
    heat time used for smoothing, defaulting to ``(2 dx)^2``.  The flow is an
    exact divergence-free solution of the heat and Navier-Stokes equations.
    """
    if width is None:
        width = (2.0 * grid.spacing) ** 2
    x = grid.coords
    L = grid.length
    square = np.where((x > L / 4) & (x < 3 * L / 4), 1.0, -1.0)
    square[np.isclose(x, L / 4) | np.isclose(x, 3 * L / 4)] = 0.0
    k = np.fft.rfftfreq(grid.n, d=grid.spacing) * 2 * np.pi
    s = np.fft.irfft(np.fft.rfft(square) * np.exp(-k * k * width), n=grid.n)
    s /= np.max(np.abs(s))
    profile = np.broadcast_to(s.reshape((-1,) + (1,) * (grid.dim - 1)), grid.shape)
    comps = np.zeros((grid.dim,) + grid.shape)
    comps[1] = profile
    return VectorField(grid, comps, 0.0)


def make_datum(name: str, grid: TorusGrid, seed: int = 0, **kw) -> VectorField:
    if name == "taylor-green":
        return taylor_green(grid)
    if name == "random":
        return random_band_limited(grid, seed=seed, **kw)
    if name == "erf-profile":
        return erf_profile(grid, **kw)
    if name == "zero":
        return VectorField(grid, np.zeros((grid.dim,) + grid.shape), 0.0)
    raise ValidationError(f"unknown datum {name!r}; choose from {', '.join(DATUMS)}")
