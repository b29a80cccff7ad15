"""Periodic cubic grid, FFTs and Fourier multipliers.

Fields are plain complex (or real) numpy arrays of shape ``(n, n, n)``, or
``(N, n, n, n)`` for a stack of orbitals.  Storage is C order with the first
coordinate ``x1`` running along the last axis, so a flattened field is
row-major with x fastest.  All quadratures are rectangle rules with weight
``dV = (L/n)**3``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

MAX_POINTS = 256

_AXES = (-3, -2, -1)


def fft_workers() -> int:
    """Worker count for the FFTs, overridable with ``PRHF_WORKERS``.

    Each 1D transform is computed by a single thread, so results do not
    depend on this number.
    """
    return max(1, int(os.environ.get("PRHF_WORKERS", "1")))


@dataclass(frozen=True)
class Grid:
    """Periodic box ``[-L/2, L/2)**3`` sampled with ``n`` points per axis."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n % 2:
            raise ValueError(f"n must be an even integer, got {self.n!r}")
        if not 8 <= self.n <= MAX_POINTS:
            raise ValueError(f"n must lie in [8, {MAX_POINTS}], got {self.n}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError(f"L must be a positive length, got {self.L!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dV(self) -> float:
        return self.dx**3

    @cached_property
    def k_axis(self) -> np.ndarray:
        """Axis wavenumbers in FFT order, ``(2*pi/L) * {-n/2, ..., n/2-1}``."""
        return (2.0 * np.pi / self.L) * np.fft.fftfreq(self.n, d=1.0 / self.n)

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -0.5 * self.L + self.dx * np.arange(self.n)

    @cached_property
    def k2(self) -> np.ndarray:
        k = self.k_axis
        return k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @property
    def k_nyquist(self) -> float:
        """Largest radius of a sphere inside the wavenumber lattice."""
        return np.pi / self.dx

    @cached_property
    def r(self) -> np.ndarray:
        x1, x2, x3 = position_coordinates(self)
        return np.sqrt(x1**2 + x2**2 + x3**2)


def make_grid(n: int, L: float) -> Grid:
    return Grid(n, L)


def fft(f: np.ndarray) -> np.ndarray:
    return sfft.fftn(f, axes=_AXES, workers=fft_workers())


def ifft(F: np.ndarray) -> np.ndarray:
    return sfft.ifftn(F, axes=_AXES, workers=fft_workers())


def check_symbol(symbol: np.ndarray) -> np.ndarray:
    symbol = np.asarray(symbol)
    if not np.all(np.isfinite(symbol)):
        raise ValueError("multiplier symbol has non-finite values")
    return symbol


def apply_multiplier(f: np.ndarray, symbol: np.ndarray) -> np.ndarray:
    """Return ``ifft(symbol * fft(f))`` over the last three axes."""
    symbol = check_symbol(symbol)
    if not np.all(np.isfinite(f)):
        raise ValueError("field has non-finite values")
    return ifft(symbol * fft(f))


def inner(u: np.ndarray, v: np.ndarray, grid: Grid) -> complex:
    """Discrete L2 inner product, antilinear in ``u``."""
    return complex(np.sum(np.conj(u) * v) * grid.dV)


def norm_sq(f: np.ndarray, grid: Grid) -> float:
    return float(np.sum(f.real**2 + f.imag**2) * grid.dV)


def spectral_quadratic(f: np.ndarray, symbol: np.ndarray, grid: Grid) -> float:
    """``<f, s(D) f>`` for a real symbol, evaluated in Fourier space."""
    F = fft(f)
    w = F.real**2 + F.imag**2
    axes = tuple(range(w.ndim - 3, w.ndim))
    total = np.sum(np.broadcast_to(symbol, w.shape[-3:]) * w, axis=axes)
    return total * (grid.dV / grid.n**3)


def position_coordinates(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centred coordinates ``x_j = -L/2 + i*dx`` as broadcastable arrays.

    ``x1`` varies along the last axis, ``x3`` along the first.
    """
    x = grid.x_axis
    return x[None, None, :], x[None, :, None], x[:, None, None]


def spectral_gradient(f: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(d/dx1, d/dx2, d/dx3) f`` by spectral differentiation.

    The Nyquist wavenumber is kept as for every other multiplier; it makes
    the derivative of a real field slightly complex only when the field has
    Nyquist content.
    """
    F = fft(f)
    k = grid.k_axis
    return (
        ifft(1j * k[None, None, :] * F),
        ifft(1j * k[None, :, None] * F),
        ifft(1j * k[:, None, None] * F),
    )


class AliasingError(ValueError):
    """Resampling would move field content outside the representable band or box."""


def _stretch_matrix(grid: Grid, scale: float) -> np.ndarray:
    # E[a, b]: trigonometric interpolant evaluated at x_a / scale from samples b
    x = grid.x_axis
    n = grid.n
    j = np.fft.fftfreq(n, d=1.0 / n)
    k = (2.0 * np.pi / grid.L) * j
    x0 = grid.x_axis[0]
    t = (x / scale - x0)[:, None]
    # symmetric split of the Nyquist mode keeps real data real
    modes = np.exp(1j * k[None, :] * t)
    nyq = j == -n // 2
    modes[:, nyq] = np.cos(k[nyq][None, :] * t)
    samples = np.exp(-1j * k[:, None] * (x - x0)[None, :]) / n
    return modes @ samples


def band_limited_resample(
    f: np.ndarray, grid: Grid, scale: float, tol: float = 1e-8
) -> np.ndarray:
    """Return ``scale**-1.5 * f(x / scale)`` by trigonometric interpolation.

    Raises :class:`AliasingError` when more than ``tol`` of the L2 mass of
    ``f`` would be lost: for ``scale > 1`` the part of ``f`` outside the box
    ``|x_j| < L/(2*scale)``, for ``scale < 1`` the spectral content above
    ``scale * k_nyquist`` on any axis.  Output cells whose preimage
    ``x / scale`` lies outside the box are set to zero.
    """
    if not (np.isfinite(scale) and scale > 0):
        raise ValueError(f"scale must be positive, got {scale!r}")
    if scale == 1.0:
        return np.array(f, dtype=complex, copy=True)
    total = norm_sq(f, grid)
    if total > 0:
        if scale > 1.0:
            x = np.abs(grid.x_axis)
            inside = x < grid.L / (2.0 * scale)
            mask = inside[:, None, None] & inside[None, :, None] & inside[None, None, :]
            lost = norm_sq(np.where(mask, 0.0, f), grid)
        else:
            k = np.abs(grid.k_axis)
            keep = k <= scale * grid.k_nyquist
            mask = keep[:, None, None] & keep[None, :, None] & keep[None, None, :]
            F = fft(f)
            lost = float(np.sum(np.abs(F[..., ~mask]) ** 2) * grid.dV / grid.n**3)
        if lost > tol * total:
            raise AliasingError(
                f"resampling by {scale:g} loses a fraction {lost / total:.3e} of the mass"
            )
    E = _stretch_matrix(grid, scale)
    out = np.asarray(f, dtype=complex)
    out = np.einsum("ai,...ijk->...ajk", E, out)
    out = np.einsum("bj,...ajk->...abk", E, out)
    out = np.einsum("ck,...abk->...abc", E, out)
    if scale < 1.0:
        # preimages outside the box would read periodic images; the field is
        # taken to vanish there instead
        outside = np.abs(grid.x_axis) / scale >= 0.5 * grid.L
        mask = outside[:, None, None] | outside[None, :, None] | outside[None, None, :]
        out[..., mask] = 0.0
    return out * scale**-1.5
