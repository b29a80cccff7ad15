"""Scalar observables of an orbital set: Gram matrix, sigma, virial moments.

All functions are pure readers of an :class:`~prhf.operators.OrbitalSet`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    band_limited_resample,
    fft,
    ifft,
    position_coordinates,
    spectral_gradient,
    spectral_quadratic,
)
from .operators import (
    OrbitalSet,
    boundary_mass,
    density,
    direct_energy,
    exchange_energy,
    half_norm_sq,
    hartree_energy,
    hartree_fock_energy,
    kinetic_symbol,
)

# imaginary part of <psi, A psi> tolerated before a record is flagged
A_IMAG_TOL = 1e-8


def gram(psi: OrbitalSet) -> np.ndarray:
    """``G[k, l] = <psi_k, psi_l>``, Hermitian by construction."""
    N = psi.N
    dV = psi.grid.dV
    G = np.empty((N, N), dtype=np.complex128)
    for k in range(N):
        for l in range(k, N):
            G[k, l] = np.sum(np.conj(psi.psi[k]) * psi.psi[l]) * dV
            G[l, k] = np.conj(G[k, l])
        G[k, k] = G[k, k].real
    return G


def sigma(psi: OrbitalSet) -> float:
    """Total homogeneous H^1/2 energy ``sum_k <psi_k, |D| psi_k>``."""
    return float(np.sum(half_norm_sq(psi.psi, psi.grid)))


def spectral_tail_fraction(psi: OrbitalSet) -> float:
    """Share of ``sigma`` carried by ``|k| > k_nyquist / 2``."""
    g = psi.grid
    F = fft(psi.psi)
    w = np.sum(F.real**2 + F.imag**2, axis=0) * g.kabs
    total = float(np.sum(w))
    if total <= 0:
        return 0.0
    return float(np.sum(w[g.kabs > 0.5 * g.k_nyquist])) / total


def boundary_mass_fraction(psi: OrbitalSet) -> float:
    total = float(np.sum(density(psi)) * psi.grid.dV)
    if total <= 0:
        return 0.0
    return boundary_mass(psi.psi, psi.grid) / total


def _partial(f, g, j):
    k = g.k_axis
    shape = [1, 1, 1]
    shape[2 - j] = g.n
    return ifft(1j * k.reshape(shape) * fft(f))


@dataclass
class DilationResult:
    value: float
    imag_residue: float
    ordering_discrepancy: float


def dilation_detail(psi: OrbitalSet) -> DilationResult:
    """Expectation of ``A = -(i/2)(x.grad + grad.x)`` summed over orbitals.

    ``a = sum_k Im <psi_k, x . grad psi_k>``.  The same number is also
    computed with the opposite ordering, ``Im <psi_k, div(x psi_k)>``; the
    two agree exactly in the continuum.
    """
    g = psi.grid
    xs = position_coordinates(g)
    a = 0.0
    a_alt = 0.0
    resid = 0.0
    for f in psi.psi:
        grads = spectral_gradient(f, g)
        xgrad = sum(x * d for x, d in zip(xs, grads))
        z = np.sum(np.conj(f) * xgrad) * g.dV
        nrm = np.sum(f.real**2 + f.imag**2) * g.dV
        a += z.imag
        resid += -z.real - 1.5 * nrm
        div = sum(_partial(x * f, g, j) for j, x in enumerate(xs))
        a_alt += (np.sum(np.conj(f) * div) * g.dV).imag
    return DilationResult(float(a), float(abs(resid)), float(abs(a - a_alt)))


def dilation_a(psi: OrbitalSet) -> float:
    return dilation_detail(psi).value


def moment_m(psi: OrbitalSet) -> float:
    """``sum_k sum_j <x_j psi_k, sqrt(-Laplace + m**2) x_j psi_k>``."""
    g = psi.grid
    sym = kinetic_symbol(g, psi.m)
    total = 0.0
    for x in position_coordinates(g):
        total += float(np.sum(spectral_quadratic(x[None] * psi.psi, sym, g)))
    return total


def mass_in_ball(psi: OrbitalSet, R: float) -> float:
    """Particles in the open ball ``|x| < R`` (cell-centre rule)."""
    g = psi.grid
    if not 0 < R < 0.5 * g.L:
        raise ValueError(f"radius must lie in (0, L/2), got {R}")
    rho = density(psi)
    return float(np.sum(rho[g.r < R]) * g.dV)


def default_radii(L: float) -> list[float]:
    return [0.25 * L / 4, 0.5 * L / 4, L / 4]


def rescaled_profile(psi: OrbitalSet) -> OrbitalSet:
    """``sigma**-1.5 psi_k(x / sigma)`` for every orbital, ``sigma = sigma(psi)``.

    The result has unit ``sigma`` up to resampling error.
    """
    s = sigma(psi)
    if not s > 0:
        raise ValueError("rescaling needs sigma > 0")
    return psi.with_psi(band_limited_resample(psi.psi, psi.grid, s))


def e_tilde(psi: OrbitalSet, kernel: str = "spectral") -> float:
    """Massless Hartree-Fock functional: ``sigma - kappa/2 (D - X)``."""
    rho = density(psi)
    D = direct_energy(rho, rho, psi.grid, kernel)
    X = exchange_energy(psi, kernel)
    return sigma(psi) - 0.5 * psi.kappa * (D - X)


def model_energy(psi: OrbitalSet, model: str, kernel: str = "spectral") -> float:
    if model == "hartree":
        return hartree_energy(psi, kernel)
    if model == "hartree_fock":
        return hartree_fock_energy(psi, kernel)
    raise ValueError(f"unknown model {model!r}")


CSV_COLUMNS = (
    "t",
    "E",
    "N_total",
    "sigma",
    "a_dilation",
    "m_moment",
    "gram_offdiag_max",
    "gram_diag_dev_max",
    "mass_R1",
    "mass_R2",
    "mass_R3",
    "boundary_mass_fraction",
    "spectral_tail_fraction",
)


@dataclass
class TimeSeriesRecord:
    t: float
    E: float
    N_total: float
    sigma: float
    a_dilation: float
    m_moment: float
    gram_offdiag_max: float
    gram_diag_dev_max: float
    mass_in_ball: tuple
    boundary_mass_fraction: float
    spectral_tail_fraction: float
    # sanity scalars, not part of the CSV row
    a_imag_residue: float = field(default=0.0, compare=False)
    a_ordering_discrepancy: float = field(default=0.0, compare=False)

    @property
    def flags(self) -> list[str]:
        out = []
        if self.boundary_mass_fraction > 1e-4:
            out.append("boundary_mass")
        if self.a_imag_residue > A_IMAG_TOL * max(1.0, self.N_total):
            out.append("dilation_imag_residue")
        if self.sigma <= 0:
            out.append("sigma_degenerate")
        return out

    def csv_values(self) -> list[float]:
        masses = list(self.mass_in_ball)[:3]
        masses += [float("nan")] * (3 - len(masses))
        return [
            self.t,
            self.E,
            self.N_total,
            self.sigma,
            self.a_dilation,
            self.m_moment,
            self.gram_offdiag_max,
            self.gram_diag_dev_max,
            *masses,
            self.boundary_mass_fraction,
            self.spectral_tail_fraction,
        ]


def record(
    psi: OrbitalSet,
    t: float,
    model: str,
    radii=None,
    kernel: str = "spectral",
) -> TimeSeriesRecord:
    """Evaluate every observable on one snapshot."""
    g = psi.grid
    if radii is None:
        radii = default_radii(g.L)
    G = gram(psi)
    N = psi.N
    off = np.abs(G - np.diag(np.diag(G)))
    dil = dilation_detail(psi)
    return TimeSeriesRecord(
        t=float(t),
        E=model_energy(psi, model, kernel),
        N_total=float(np.real(np.trace(G))),
        sigma=sigma(psi),
        a_dilation=dil.value,
        m_moment=moment_m(psi),
        gram_offdiag_max=float(off.max()) if N > 1 else 0.0,
        gram_diag_dev_max=float(np.max(np.abs(np.diag(G).real - 1.0))),
        mass_in_ball=tuple(mass_in_ball(psi, R) for R in radii),
        boundary_mass_fraction=boundary_mass_fraction(psi),
        spectral_tail_fraction=spectral_tail_fraction(psi),
        a_imag_residue=dil.imag_residue,
        a_ordering_discrepancy=dil.ordering_discrepancy,
    )


# --------------------------------------------------------------------------
# virial checks along a recorded trajectory
# --------------------------------------------------------------------------


@dataclass
class VirialReport:
    """Finite-difference check of ``da/dt <= E`` at every interior tick."""

    adot: np.ndarray
    t_mid: np.ndarray
    E0: float
    tol: float

    @property
    def excess(self) -> float:
        return float(np.max(self.adot - self.E0)) if self.adot.size else -np.inf

    @property
    def passed(self) -> bool:
        return self.excess <= self.tol


def virial_check(records, E0: float, rel_tol: float = 1e-2) -> VirialReport:
    """Centred differences of ``a(t)`` compared against the conserved energy."""
    t = np.array([r.t for r in records])
    a = np.array([r.a_dilation for r in records])
    if t.size < 3:
        raise ValueError("need at least three records")
    adot = (a[2:] - a[:-2]) / (t[2:] - t[:-2])
    return VirialReport(adot, t[1:-1], float(E0), rel_tol * (1.0 + abs(E0)))


@dataclass
class ParabolicFit:
    """Least-squares ``m(t) ~ c2 t**2 + c1 t + c0`` over all records.

    ``tol`` is ``rel_tol * (1 + |E|)`` plus twice the standard error of
    ``c2``.
    """

    coeffs: np.ndarray
    stderr: float
    E0: float
    tol: float
    mdot_minus_2a_max: float

    @property
    def quadratic(self) -> float:
        return float(self.coeffs[0])

    @property
    def passed(self) -> bool:
        return self.quadratic <= self.E0 + self.tol


def parabolic_fit(records, E0: float, rel_tol: float = 1e-2) -> ParabolicFit:
    t = np.array([r.t for r in records])
    mm = np.array([r.m_moment for r in records])
    a = np.array([r.a_dilation for r in records])
    if t.size < 4:
        raise ValueError("need at least four records")
    coeffs, cov = np.polyfit(t, mm, 2, cov="unscaled")
    resid = mm - np.polyval(coeffs, t)
    dof = max(t.size - 3, 1)
    stderr = float(np.sqrt(cov[0, 0] * np.sum(resid**2) / dof))
    mdot = (mm[2:] - mm[:-2]) / (t[2:] - t[:-2])
    bound = float(np.max(mdot - 2.0 * a[1:-1])) if t.size >= 3 else float("nan")
    return ParabolicFit(coeffs, stderr, float(E0), rel_tol * (1.0 + abs(E0)) + 2.0 * stderr, bound)
