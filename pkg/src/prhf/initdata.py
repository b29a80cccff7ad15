"""Initial orbital sets: Dirichlet ball shells, Gaussians, Loewdin orthonormalisation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import spherical_jn, sph_harm_y

from .diagnostics import gram
from .grid import Grid, position_coordinates
from .operators import OrbitalSet, density, direct_energy, kinetic_energy

# largest condition number of the Gram matrix accepted by loewdin_orthonormalize
MAX_CONDITION = 1e8


class ShellError(ValueError):
    """Requested orbital count does not fill complete shells."""


class RankDeficientError(ValueError):
    """Orbitals are (numerically) linearly dependent."""


# --------------------------------------------------------------------------
# spherical Bessel zeros and the shell plan
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def bessel_zeros(ell: int, count: int) -> tuple[float, ...]:
    """First ``count`` positive zeros of the spherical Bessel function ``j_ell``.

    Sign changes are bracketed on a fine scan and polished with Brent's
    method to ``xtol=1e-14``.
    """
    if ell < 0 or count < 1:
        raise ValueError("need ell >= 0 and count >= 1")

    def f(x):
        return spherical_jn(ell, x)

    zeros = []
    h = 0.05
    a = ell + 0.5 if ell > 0 else h
    fa = f(a)
    while len(zeros) < count:
        b = a + h
        fb = f(b)
        if fa == 0.0:
            zeros.append(a)
        elif fa * fb < 0:
            zeros.append(brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200))
        a, fa = b, fb
    return tuple(zeros[:count])


@dataclass(frozen=True)
class Shell:
    ell: int
    n: int
    alpha: float

    @property
    def degeneracy(self) -> int:
        return 2 * self.ell + 1


def shell_plan(max_orbitals: int = 200) -> list[Shell]:
    """Dirichlet shells of the unit ball ordered by ``alpha**2``.

    Ties are broken by ascending ``ell`` then ``n``.  Enough shells are
    returned to hold at least ``max_orbitals`` orbitals.
    """
    # every shell with alpha below the cap is included, so the ordering is exact
    cap = 0.0
    shells: list[Shell] = []
    while sum(s.degeneracy for s in shells) < max_orbitals:
        cap += 5.0
        shells = []
        for ell in range(int(cap) + 1):
            zs = [z for z in bessel_zeros(ell, int(cap / np.pi) + 2) if z < cap]
            shells.extend(Shell(ell, i + 1, z) for i, z in enumerate(zs))
        shells.sort(key=lambda s: (s.alpha, s.ell, s.n))
    return shells


def complete_shell_counts(limit: int = 200) -> list[int]:
    counts, tot = [], 0
    for s in shell_plan(limit):
        tot += s.degeneracy
        if tot > limit:
            break
        counts.append(tot)
    return counts


def select_shells(N: int) -> list[Shell]:
    """Lowest shells holding exactly ``N`` orbitals, or :class:`ShellError`."""
    if N < 1:
        raise ShellError(f"N must be positive, got {N}")
    chosen, tot = [], 0
    for s in shell_plan(N + 50):
        if tot >= N:
            break
        chosen.append(s)
        tot += s.degeneracy
    if tot != N:
        counts = complete_shell_counts(N + 50)
        below = max((c for c in counts if c < N), default=None)
        above = min(c for c in counts if c > N)
        raise ShellError(
            f"N={N} splits a shell; nearest complete-shell counts are {below} and {above}"
        )
    return chosen


@dataclass(frozen=True)
class BallShellSpec:
    N_requested: int
    R_ball: float
    epsilon: float | None = None

    @property
    def eps(self) -> float:
        return 0.1 * self.R_ball if self.epsilon is None else self.epsilon

    @property
    def shells(self) -> list[Shell]:
        return select_shells(self.N_requested)


# --------------------------------------------------------------------------
# angular and radial factors
# --------------------------------------------------------------------------


def real_spherical_harmonic(ell: int, m: int, theta, phi):
    """Orthonormal real harmonics built from the complex ``Y_ell^|m|``."""
    if m == 0:
        return sph_harm_y(ell, 0, theta, phi).real
    y = sph_harm_y(ell, abs(m), theta, phi)
    sign = (-1) ** abs(m)
    if m > 0:
        return np.sqrt(2.0) * sign * y.real
    return np.sqrt(2.0) * sign * y.imag


def smooth_cutoff(r, R: float, eps: float):
    """Quintic step: 1 for ``r <= R - eps``, 0 for ``r >= R``, C^2 in between."""
    t = np.clip((np.asarray(r) - (R - eps)) / eps, 0.0, 1.0)
    return (1.0 - t) ** 3 * (1.0 + 3.0 * t + 6.0 * t * t)


def _angles(grid: Grid):
    x, y, z = position_coordinates(grid)
    r = grid.r
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = np.arccos(np.clip(np.where(r > 0, z / np.where(r > 0, r, 1.0), 1.0), -1.0, 1.0))
    phi = np.mod(np.arctan2(np.broadcast_to(y, r.shape), np.broadcast_to(x, r.shape)), 2 * np.pi)
    return r, theta, phi


def ball_shell_orbitals(spec: BallShellSpec, grid: Grid) -> np.ndarray:
    """Raw (not orthonormalised) shell orbitals on ``grid``."""
    if spec.R_ball + 3 * spec.eps >= 0.5 * grid.L:
        raise ValueError(
            f"ball radius {spec.R_ball} plus 3*eps={3 * spec.eps} must stay inside L/2={0.5 * grid.L}"
        )
    r, theta, phi = _angles(grid)
    cut = smooth_cutoff(r, spec.R_ball, spec.eps)
    out = []
    for sh in spec.shells:
        radial = spherical_jn(sh.ell, sh.alpha * r / spec.R_ball) * cut
        for m in range(-sh.ell, sh.ell + 1):
            out.append(radial * real_spherical_harmonic(sh.ell, m, theta, phi))
    return np.array(out, dtype=np.complex128)


def ball_shell_eigenstates(
    spec: BallShellSpec, grid: Grid, m: float = 0.0, kappa: float = 1.0
) -> OrbitalSet:
    """Lowest Dirichlet eigenfunctions of a ball, cut off smoothly and orthonormalised."""
    raw = OrbitalSet(ball_shell_orbitals(spec, grid), grid, m, kappa)
    return loewdin_orthonormalize(raw)


# --------------------------------------------------------------------------
# Gaussians
# --------------------------------------------------------------------------


def gaussian(grid: Grid, center=(0.0, 0.0, 0.0), width: float = 1.0) -> np.ndarray:
    """``(pi w**2)**(-3/4) exp(-|x - c|**2 / (2 w**2))``, unit L2 norm on R^3."""
    x1, x2, x3 = position_coordinates(grid)
    c = np.asarray(center, dtype=float)
    r2 = (x1 - c[0]) ** 2 + (x2 - c[1]) ** 2 + (x3 - c[2]) ** 2
    return (np.pi * width**2) ** -0.75 * np.exp(-r2 / (2.0 * width**2))


def gaussian_family(
    N: int,
    centers,
    widths,
    grid: Grid,
    m: float = 0.0,
    kappa: float = 1.0,
    orthonormalize: bool = True,
) -> OrbitalSet:
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (N,))
    if centers.shape != (N, 3):
        raise ValueError(f"need {N} centres of dimension 3, got shape {centers.shape}")
    if np.any(widths < 3 * grid.dx):
        raise ValueError(f"widths {widths} under-resolved: need >= 3*dx = {3 * grid.dx}")
    if np.any(np.abs(centers) >= 0.5 * grid.L):
        raise ValueError("Gaussian centres must lie inside the box")
    psi = np.array([gaussian(grid, c, w) for c, w in zip(centers, widths)], dtype=np.complex128)
    out = OrbitalSet(psi, grid, m, kappa)
    return loewdin_orthonormalize(out) if orthonormalize else out


# --------------------------------------------------------------------------
# orthonormalisation and coupling choice
# --------------------------------------------------------------------------


def loewdin_orthonormalize(psi: OrbitalSet) -> OrbitalSet:
    """Symmetric orthonormalisation ``psi' = G**-1/2 psi``."""
    G = gram(psi)
    w, U = np.linalg.eigh(G)
    if w[0] <= 0 or w[-1] > MAX_CONDITION * w[0]:
        raise RankDeficientError(
            f"Gram matrix is rank deficient: smallest eigenvalue {w[0]:.3e}, largest {w[-1]:.3e}"
        )
    S = (U * w**-0.5) @ U.conj().T
    # psi'_k = sum_l S[l, k] psi_l
    return psi.transform(S.T)


def choose_kappa_negative_energy(psi: OrbitalSet, margin: float = 0.5) -> float:
    """Coupling that puts the Hartree energy at ``-margin * kinetic``."""
    if not 0 <= margin < 1:
        raise ValueError(f"margin must lie in [0, 1), got {margin}")
    rho = density(psi)
    D = direct_energy(rho, rho, psi.grid)
    if not D > 0:
        raise ValueError("density vanishes; no coupling gives negative energy")
    return 2.0 * (1.0 + margin) * kinetic_energy(psi) / D
