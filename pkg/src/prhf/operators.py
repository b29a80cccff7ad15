"""Mean-field operators and energy functionals.

The Newtonian interaction ``1/|x|`` is a free-space convolution evaluated on
the doubled grid (zero padding).  Two tabulations of the kernel are offered:

``"spectral"`` (default)
    The kernel truncated at radius ``sqrt(3)*L`` has the closed-form
    transform ``8*pi*sin(|k|R/2)**2/|k|**2``.  Sampling it on a 4x padded
    lattice and folding back to the 2x lattice gives a discrete kernel that
    is exact for band-limited densities supported in the box.  The fold is a
    type-I DCT, so the set-up is cheap.

``"hockney"``
    ``1/|x|`` off the origin and the cell mean of ``1/|x|`` at the origin.
    Second-order accurate; kept for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.fft as sfft
from scipy import integrate

from . import _kernels
from .grid import Grid, fft_workers, norm_sq, spectral_quadratic

KERNELS = ("spectral", "hockney")


@dataclass(frozen=True, eq=False)
class OrbitalSet:
    """``N`` orbitals on one grid plus the rest mass ``m`` and coupling ``kappa``.

    ``psi`` has shape ``(N, n, n, n)``.
    """

    psi: np.ndarray
    grid: Grid
    m: float = 0.0
    kappa: float = 1.0

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=np.complex128)
        if psi.ndim == 3:
            psi = psi[None]
        if psi.ndim != 4 or psi.shape[1:] != self.grid.shape:
            raise ValueError(f"orbitals of shape {psi.shape} do not fit grid {self.grid.shape}")
        if psi.shape[0] < 1:
            raise ValueError("need at least one orbital")
        if self.m < 0:
            raise ValueError(f"rest mass must be nonnegative, got {self.m}")
        if not self.kappa >= 0:
            raise ValueError(f"coupling must be nonnegative, got {self.kappa}")
        object.__setattr__(self, "psi", psi)

    @property
    def N(self) -> int:
        return self.psi.shape[0]

    def with_psi(self, psi: np.ndarray) -> "OrbitalSet":
        return replace(self, psi=psi)

    def with_kappa(self, kappa: float) -> "OrbitalSet":
        return replace(self, kappa=float(kappa))

    def transform(self, T: np.ndarray) -> "OrbitalSet":
        """Gauge transform ``psi_k -> sum_l T[k, l] psi_l``."""
        return self.with_psi(np.tensordot(np.asarray(T), self.psi, axes=(1, 0)))


# --------------------------------------------------------------------------
# kinetic part
# --------------------------------------------------------------------------


def kinetic_symbol(grid: Grid, m: float) -> np.ndarray:
    if m < 0:
        raise ValueError(f"rest mass must be nonnegative, got {m}")
    return np.sqrt(grid.k2 + m * m)


def kinetic_apply(f: np.ndarray, grid: Grid, m: float) -> np.ndarray:
    """``sqrt(-Laplace + m**2) f``."""
    from .grid import apply_multiplier

    return apply_multiplier(f, kinetic_symbol(grid, m))


def half_norm_sq(f: np.ndarray, grid: Grid):
    """Homogeneous H^1/2 seminorm squared, ``<f, |D| f>``.

    For a stack of fields the result has one entry per field.
    """
    return spectral_quadratic(f, grid.kabs, grid)


def kinetic_energy(psi: OrbitalSet) -> float:
    """``sum_k <psi_k, sqrt(-Laplace + m**2) psi_k>``."""
    per = spectral_quadratic(psi.psi, kinetic_symbol(psi.grid, psi.m), psi.grid)
    return float(np.sum(per))


# --------------------------------------------------------------------------
# densities and the Coulomb convolution
# --------------------------------------------------------------------------


def density(psi: OrbitalSet) -> np.ndarray:
    """Particle density ``sum_k |psi_k|**2``."""
    return _kernels.abs2_sum(psi.psi)


def particle_number(psi: OrbitalSet) -> float:
    return float(np.sum(density(psi)) * psi.grid.dV)


def _unit_cube_mean_inverse_distance() -> float:
    # mean of 1/|x| over [-1/2, 1/2]**3; div(x/|x|) = 2/|x| turns it into
    # (3/2) * integral over one face of 1/sqrt(1/4 + u**2 + v**2)
    val, _ = integrate.dblquad(
        lambda v, u: 1.0 / np.sqrt(0.25 + u * u + v * v),
        -0.5, 0.5, -0.5, 0.5, epsabs=1e-12, epsrel=1e-12,
    )
    return 1.5 * val


def _offsets(n: int, dx: float) -> np.ndarray:
    # |offset| per axis on the doubled lattice: 0, 1, ..., n, n-1, ..., 1
    i = np.arange(2 * n)
    return dx * np.minimum(i, 2 * n - i)


@lru_cache(maxsize=8)
def _kernel_hat(n: int, L: float, kind: str) -> np.ndarray:
    """Real-to-complex transform of the doubled-grid kernel (times dV)."""
    dx = L / n
    if kind == "hockney":
        d = _offsets(n, dx)
        r = np.sqrt(d[:, None, None] ** 2 + d[None, :, None] ** 2 + d[None, None, :] ** 2)
        with np.errstate(divide="ignore"):
            ker = 1.0 / r
        ker[0, 0, 0] = _unit_cube_mean_inverse_distance() / dx
    elif kind == "spectral":
        R = np.sqrt(3.0) * L
        # wavenumbers of the 4x padded box, nonnegative half plus the end point
        kk = (2.0 * np.pi / (4.0 * L)) * np.arange(2 * n + 1)
        k = np.sqrt(kk[:, None, None] ** 2 + kk[None, :, None] ** 2 + kk[None, None, :] ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            ghat = 8.0 * np.pi * np.sin(0.5 * k * R) ** 2 / k**2
        ghat[0, 0, 0] = 2.0 * np.pi * R * R
        # even-symmetric inverse DFT of length 4n == DCT-I of length 2n+1
        folded = sfft.dctn(ghat, type=1, workers=fft_workers()) / (4.0 * L) ** 3
        half = folded[: n + 1, : n + 1, : n + 1]
        idx = np.minimum(np.arange(2 * n), 2 * n - np.arange(2 * n))
        ker = half[np.ix_(idx, idx, idx)]
    else:
        raise ValueError(f"unknown Coulomb kernel {kind!r}; choose from {KERNELS}")
    return np.ascontiguousarray(
        sfft.rfftn(ker * dx**3, workers=fft_workers()).real
    )


def coulomb_convolve(rho: np.ndarray, grid: Grid, kernel: str = "spectral") -> np.ndarray:
    """Free-space ``(1/|x|) * rho`` on the grid.

    ``rho`` may be real or complex; complex input is handled by linearity.
    """
    rho = np.asarray(rho)
    if np.iscomplexobj(rho):
        return coulomb_convolve(rho.real, grid, kernel) + 1j * coulomb_convolve(
            rho.imag, grid, kernel
        )
    n = grid.n
    khat = _kernel_hat(n, grid.L, kernel)
    pad = np.zeros((2 * n, 2 * n, 2 * n))
    pad[:n, :n, :n] = rho
    F = sfft.rfftn(pad, workers=fft_workers())
    F *= khat
    out = sfft.irfftn(F, s=pad.shape, workers=fft_workers())
    return np.ascontiguousarray(out[:n, :n, :n])


def direct_potential(psi: OrbitalSet, kernel: str = "spectral") -> np.ndarray:
    """``kappa * (1/|x|) * rho``, the attractive Hartree potential (sign +)."""
    return psi.kappa * coulomb_convolve(density(psi), psi.grid, kernel)


def hartree_term(psi: OrbitalSet, kernel: str = "spectral") -> tuple[np.ndarray, np.ndarray]:
    """Return ``(V, -V * psi_k)`` with ``V = kappa (1/|x|) * rho``."""
    V = direct_potential(psi, kernel)
    return V, -V[None] * psi.psi


def pair_potentials(psi: OrbitalSet, kernel: str = "spectral") -> np.ndarray:
    """``P[l, k] = (1/|x|) * (conj(psi_l) psi_k)``; Hermitian in ``(l, k)``."""
    N = psi.N
    out = np.empty((N, N) + psi.grid.shape, dtype=np.complex128)
    for k in range(N):
        for l in range(k + 1):
            pair = np.conj(psi.psi[l]) * psi.psi[k]
            if l == k:
                out[k, k] = coulomb_convolve(pair.real, psi.grid, kernel)
            else:
                out[l, k] = coulomb_convolve(pair, psi.grid, kernel)
                out[k, l] = np.conj(out[l, k])
    return out


def exchange_from_pairs(psi: OrbitalSet, pairs: np.ndarray) -> np.ndarray:
    # out[k] = kappa * sum_l psi_l * P[l, k]
    return psi.kappa * np.einsum("lxyz,lkxyz->kxyz", psi.psi, pairs)


def exchange_term(psi: OrbitalSet, kernel: str = "spectral") -> np.ndarray:
    """``kappa * sum_l psi_l (1/|x|) * (conj(psi_l) psi_k)`` for every ``k``."""
    return exchange_from_pairs(psi, pair_potentials(psi, kernel))


def direct_energy(rho: np.ndarray, rho2: np.ndarray, grid: Grid, kernel: str = "spectral") -> float:
    """``D(rho, rho2) = int int rho(x) rho2(y) / |x - y|``."""
    return float(np.sum(rho * coulomb_convolve(rho2, grid, kernel)) * grid.dV)


def exchange_energy_from_pairs(psi: OrbitalSet, pairs: np.ndarray) -> float:
    # sum_{k,l} int psi_l conj(psi_k) P[l, k]
    tot = np.einsum("lxyz,kxyz,lkxyz->", psi.psi, np.conj(psi.psi), pairs)
    return float(tot.real * psi.grid.dV)


def exchange_energy(psi: OrbitalSet, kernel: str = "spectral") -> float:
    """``int int |rho(x, y)|**2 / |x - y|`` without forming ``rho(x, y)``."""
    return exchange_energy_from_pairs(psi, pair_potentials(psi, kernel))


def hartree_energy(psi: OrbitalSet, kernel: str = "spectral") -> float:
    rho = density(psi)
    return kinetic_energy(psi) - 0.5 * psi.kappa * direct_energy(rho, rho, psi.grid, kernel)


def hartree_fock_energy(psi: OrbitalSet, kernel: str = "spectral") -> float:
    return hartree_energy(psi, kernel) + 0.5 * psi.kappa * exchange_energy(psi, kernel)


def boundary_mass(f: np.ndarray, grid: Grid, shell: float = 0.1) -> float:
    """L2 mass of ``f`` (summed over a leading stack axis) in the outer shell.

    The shell is the set of cells with ``max_j |x_j| >= (1 - shell) * L/2``.
    """
    x = np.abs(grid.x_axis)
    outer = x >= (1.0 - shell) * 0.5 * grid.L
    mask = outer[:, None, None] | outer[None, :, None] | outer[None, None, :]
    sel = f[..., mask]
    return float(np.sum(sel.real**2 + sel.imag**2) * grid.dV)


__all__ = [
    "OrbitalSet",
    "KERNELS",
    "kinetic_symbol",
    "kinetic_apply",
    "half_norm_sq",
    "kinetic_energy",
    "density",
    "particle_number",
    "coulomb_convolve",
    "direct_potential",
    "hartree_term",
    "pair_potentials",
    "exchange_term",
    "direct_energy",
    "exchange_energy",
    "hartree_energy",
    "hartree_fock_energy",
    "boundary_mass",
    "norm_sq",
]
