"""Time integration of the Hartree and Hartree-Fock equations.

``i d/dt psi_k = sqrt(-Laplace + m**2) psi_k - V psi_k + [X psi]_k``

with ``V = kappa (1/|x|) * rho`` and the exchange term ``X`` (Hartree-Fock
only).  Two steppers share one interface:

* :func:`step_strang` -- kinetic half step, potential step, kinetic half
  step.  Every substep is an exact exponential; for Hartree-Fock the
  potential generator is taken at a predicted midpoint.
* :func:`step_rk4` -- classical explicit Runge-Kutta on the full right side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels
from .diagnostics import TimeSeriesRecord, record, sigma as sigma_of
from .grid import Grid, fft, ifft
from .operators import (
    OrbitalSet,
    coulomb_convolve,
    density,
    exchange_from_pairs,
    kinetic_symbol,
    pair_potentials,
)

MODELS = ("hartree", "hartree_fock")
SCHEMES = ("strang", "rk4")

# default c_stab in the explicit RK4 bound dt <= c_stab / (omega_max + |V|_max)
RK4_CSTAB = 2.8


class StepSizeError(ValueError):
    """Time step violates the stepper's step-size rule."""


@dataclass(frozen=True, eq=False)
class SimState:
    psi: OrbitalSet
    t: float = 0.0
    step_index: int = 0
    model: str = "hartree"

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")


class Outcome(enum.Enum):
    COMPLETED = ("completed", 0)
    BLOWUP = ("blowup_detected", 2)
    RESOLUTION_LOSS = ("resolution_loss", 3)
    BOUNDARY_LEAK = ("boundary_leak", 4)

    def __init__(self, label, exit_code):
        self.label = label
        self.exit_code = exit_code


@dataclass(frozen=True)
class TerminationReason:
    outcome: Outcome
    t: float
    value: float | None = None

    def describe(self) -> str:
        if self.outcome is Outcome.COMPLETED:
            return f"completed at t={self.t:.17g}"
        return f"{self.outcome.label} at t={self.t:.17g} (measurement {self.value:.17g})"


@dataclass(frozen=True)
class BlowUpPolicy:
    """Detector thresholds.

    ``sigma_ref`` defaults to sigma of the initial state of :func:`evolve`;
    a restarted run passes the original value through so that the detectors
    behave as in an uninterrupted run.
    """

    sigma_factor: float = 10.0
    tail_max: float = 0.1
    boundary_max: float = 1e-3
    sigma_ref: float | None = None

    def describe(self) -> str:
        return (
            f"blowup: sigma > {self.sigma_factor:g}*sigma_ref and tail > {self.tail_max:g}; "
            f"resolution_loss: tail > {self.tail_max:g}; "
            f"boundary_leak: boundary mass fraction > {self.boundary_max:g}"
        )


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _kinetic_phase(n: int, L: float, m: float, dt: float) -> np.ndarray:
    omega = kinetic_symbol(Grid(n, L), m)
    return np.exp(-1j * dt * omega)


def kinetic_flow(psi: np.ndarray, grid: Grid, m: float, dt: float) -> np.ndarray:
    """Exact free propagator ``exp(-i dt sqrt(-Laplace + m**2))``."""
    return ifft(_kinetic_phase(grid.n, grid.L, float(m), float(dt)) * fft(psi))


def potential_generator(psi: OrbitalSet, model: str, kernel: str = "spectral") -> np.ndarray:
    """Cellwise orbital-space generator ``H(x)`` of the potential substep.

    ``H[k, l](x) = -V(x) delta_kl + kappa * P[l, k](x)`` where ``P`` are the
    pair potentials; the second term is present for Hartree-Fock only.
    """
    N = psi.N
    V = psi.kappa * coulomb_convolve(density(psi), psi.grid, kernel)
    if model == "hartree":
        return -V
    H = psi.kappa * np.swapaxes(pair_potentials(psi, kernel), 0, 1)
    for k in range(N):
        H[k, k] -= V
    return H


def strang_dt_max(gen: np.ndarray) -> float:
    """Largest step keeping each cell's potential phase below pi.

    For a matrix generator the bound uses the largest 1-norm over cells.
    """
    if gen.ndim == 3:
        bound = float(np.max(np.abs(gen)))
    else:
        bound = float(np.max(np.sum(np.abs(gen), axis=0)))
    return math.inf if bound == 0 else math.pi / bound


def rk4_dt_max(psi: OrbitalSet, V: np.ndarray, c_stab: float = RK4_CSTAB) -> float:
    g = psi.grid
    omega_max = math.sqrt(float(np.max(g.k2)) + psi.m**2)
    return c_stab / (omega_max + float(np.max(np.abs(V))))


# --------------------------------------------------------------------------
# steppers
# --------------------------------------------------------------------------


def step_strang(
    state: SimState, dt: float, kernel: str = "spectral", potential: bool = True
) -> SimState:
    """One Strang step.  ``potential=False`` zeroes the interaction generator."""
    if not dt > 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    psi = state.psi
    g = psi.grid
    half = kinetic_flow(psi.psi, g, psi.m, 0.5 * dt)
    if potential and psi.kappa != 0:
        mid = psi.with_psi(half)
        gen = potential_generator(mid, state.model, kernel)
        dt_max = strang_dt_max(gen)
        if dt > dt_max:
            raise StepSizeError(f"dt={dt} exceeds the potential phase bound {dt_max:.4g}")
        if state.model == "hartree":
            # |psi| and hence V are constant along this substep
            half = _kernels.phase_multiply(half, -gen, dt)
        else:
            # the pair potentials do move along the substep; freezing them at
            # the start would cost an order, so use the exponential midpoint rule
            pred = _kernels.hermitian_expm_apply(gen, half, 0.5 * dt)
            gen = potential_generator(mid.with_psi(pred), state.model, kernel)
            dt_max = strang_dt_max(gen)
            if dt > dt_max:
                raise StepSizeError(f"dt={dt} exceeds the potential phase bound {dt_max:.4g}")
            half = _kernels.hermitian_expm_apply(gen, half, dt)
    new = kinetic_flow(half, g, psi.m, 0.5 * dt)
    return replace(state, psi=psi.with_psi(new), t=state.t + dt, step_index=state.step_index + 1)


def rhs(psi: OrbitalSet, model: str, kernel: str = "spectral") -> tuple[np.ndarray, np.ndarray]:
    """``(d psi/dt, V)`` for the full equation."""
    g = psi.grid
    F = fft(psi.psi)
    hpsi = ifft(kinetic_symbol(g, psi.m) * F)
    V = psi.kappa * coulomb_convolve(density(psi), g, kernel)
    hpsi -= V * psi.psi
    if model == "hartree_fock":
        hpsi += exchange_from_pairs(psi, pair_potentials(psi, kernel))
    return -1j * hpsi, V


def step_rk4(
    state: SimState, dt: float, kernel: str = "spectral", c_stab: float = RK4_CSTAB
) -> SimState:
    if not dt > 0:
        raise StepSizeError(f"dt must be positive, got {dt}")
    psi = state.psi
    k1, V = rhs(psi, state.model, kernel)
    dt_max = rk4_dt_max(psi, V, c_stab)
    if dt > dt_max:
        raise StepSizeError(f"dt={dt} exceeds the RK4 stability bound {dt_max:.4g}")
    y = psi.psi
    k2, _ = rhs(psi.with_psi(y + 0.5 * dt * k1), state.model, kernel)
    k3, _ = rhs(psi.with_psi(y + 0.5 * dt * k2), state.model, kernel)
    k4, _ = rhs(psi.with_psi(y + dt * k3), state.model, kernel)
    new = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return replace(state, psi=psi.with_psi(new), t=state.t + dt, step_index=state.step_index + 1)


STEPPERS = {"strang": step_strang, "rk4": step_rk4}


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------


def classify(rec: TimeSeriesRecord, policy: BlowUpPolicy, sigma_ref: float) -> TerminationReason | None:
    """Apply the detectors to one record; ``None`` means keep going."""
    tail = rec.spectral_tail_fraction
    if tail > policy.tail_max:
        if rec.sigma > policy.sigma_factor * sigma_ref:
            return TerminationReason(Outcome.BLOWUP, rec.t, rec.sigma)
        return TerminationReason(Outcome.RESOLUTION_LOSS, rec.t, tail)
    if rec.boundary_mass_fraction > policy.boundary_max:
        return TerminationReason(Outcome.BOUNDARY_LEAK, rec.t, rec.boundary_mass_fraction)
    return None


def steps_per_interval(interval: float, dt: float) -> int:
    ratio = interval / dt
    k = round(ratio)
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"dt={dt} must divide the diagnostic interval {interval}")
    return int(k)


@dataclass
class EvolveResult:
    records: list[TimeSeriesRecord]
    state: SimState
    reason: TerminationReason
    sigma_ref: float = field(default=0.0)


def evolve(
    state: SimState,
    T_end: float,
    dt: float,
    interval: float | None = None,
    policy: BlowUpPolicy | None = None,
    scheme: str = "strang",
    radii=None,
    kernel: str = "spectral",
    on_record=None,
) -> EvolveResult:
    """Advance ``state`` until ``t >= T_end`` or a detector fires.

    A record is taken at the start and after every ``interval`` of time;
    the detectors look at each record.  ``on_record(state, record)`` is
    called for every record, e.g. to write snapshots.
    """
    if scheme not in STEPPERS:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    policy = policy or BlowUpPolicy()
    stepper = STEPPERS[scheme]
    per_tick = steps_per_interval(interval if interval is not None else dt, dt)
    sigma_ref = policy.sigma_ref if policy.sigma_ref is not None else sigma_of(state.psi)
    n_steps = max(0, math.ceil((T_end - state.t) / dt - 1e-9))

    def take(s):
        rec = record(s.psi, s.t, s.model, radii, kernel)
        records.append(rec)
        if on_record is not None:
            on_record(s, rec)
        return classify(rec, policy, sigma_ref)

    records: list[TimeSeriesRecord] = []
    reason = take(state)
    done = 0
    while reason is None and done < n_steps:
        state = stepper(state, dt, kernel)
        done += 1
        if done % per_tick == 0 or done == n_steps:
            reason = take(state)
    if reason is None:
        reason = TerminationReason(Outcome.COMPLETED, state.t)
    return EvolveResult(records, state, reason, sigma_ref)
