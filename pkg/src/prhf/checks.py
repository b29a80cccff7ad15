"""The inequality / conservation / heuristic check suite behind ``prhf checks``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ConfigError, RunConfig
from .diagnostics import gram, model_energy
from .dynamics import SimState, step_strang
from .grid import Grid
from .initdata import gaussian, gaussian_family
from .operators import OrbitalSet, particle_number
from .variational import (
    HLS_ENVELOPE,
    HeuristicStarParams,
    InequalityReport,
    chandrasekhar_heuristic,
    daubechies_check,
    hls_check,
    hls_corpus,
    random_admissible_family,
)


@dataclass
class CheckRow:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28} {self.detail}"


@dataclass
class SuiteReport:
    rows: list[CheckRow] = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def table(self) -> str:
        return "\n".join(r.line() for r in self.rows) + "\n"


def lemma2_sweep(grid: Grid, rng: np.random.Generator, families: int, sizes) -> list[InequalityReport]:
    """Random admissible families, alternating orthonormal and sub-orthonormal."""
    out = []
    for j in range(families):
        N = int(sizes[j % len(sizes)])
        sub = bool(j % 2)
        psi = random_admissible_family(grid, rng, N, sub_orthonormal=sub)
        kind = "sub-orthonormal" if sub else "orthonormal"
        out.append(daubechies_check(psi, witness=f"family {j}: N={N} {kind}"))
    return out


def gaussian_lemma2(grid: Grid) -> InequalityReport:
    psi = OrbitalSet(gaussian(grid, (0, 0, 0), 1.0), grid)
    return daubechies_check(psi, witness="unit Gaussian")


def short_conservation_run(cfg: RunConfig, steps: int = 10) -> dict:
    """A few Strang steps of two Gaussians; drift of E, N and the Gram matrix."""
    g = Grid(cfg.grid.n, cfg.grid.L)
    w = max(3.0 * g.dx, g.L / 16.0)
    kappa = cfg.physics.kappa if cfg.physics.kappa is not None else 0.5
    psi = gaussian_family(2, [(-w, 0, 0), (w, 0.5 * w, 0)], [w, 1.2 * w], g, m=cfg.physics.m, kappa=kappa)
    state = SimState(psi, model=cfg.physics.model)
    E0 = model_energy(psi, state.model)
    N0 = particle_number(psi)
    for _ in range(steps):
        state = step_strang(state, cfg.integrator.dt)
    E1 = model_energy(state.psi, state.model)
    G = gram(state.psi)
    return {
        "energy_drift": abs(E1 - E0) / max(abs(E0), 1e-300),
        "number_drift": abs(particle_number(state.psi) - N0),
        "gram_offdiag": float(abs(G[0, 1])),
    }


def checks_suite(cfg: RunConfig) -> SuiteReport:
    ch = cfg.checks
    if ch.families == 0:
        raise ConfigError("checks.families", "the Lemma-2 corpus is empty")
    seed = ch.seed if ch.seed is not None else 0
    rng = np.random.default_rng(seed)
    g = Grid(cfg.grid.n, cfg.grid.L)
    rep = SuiteReport()

    sweep = lemma2_sweep(g, rng, ch.families, ch.family_size)
    worst = min(sweep, key=lambda r: r.ratio)
    fails = sum(not r.passed for r in sweep)
    rep.rows.append(CheckRow(
        "lemma2_random_families", fails == 0,
        f"{len(sweep)} families, {fails} violations, min ratio {worst.ratio:.6g} ({worst.witness})",
    ))
    gl = gaussian_lemma2(g)
    rep.rows.append(CheckRow("lemma2_gaussian", gl.passed, f"lhs={gl.lhs:.10g} rhs={gl.rhs:.10g}"))
    rep.measured["lemma2_min_ratio"] = worst.ratio

    corpus = hls_corpus(g, rng, ch.hls_corpus)
    reports = [hls_check(rho, g, witness=label) for label, rho in corpus]
    top = max(reports, key=lambda r: r.ratio)
    rep.rows.append(CheckRow(
        "hls_corpus", all(r.passed for r in reports),
        f"{len(reports)} densities, max ratio {top.ratio:.6g} ({top.witness}), envelope {HLS_ENVELOPE}",
    ))
    rep.measured["hls_max_ratio"] = top.ratio

    for kappa in ch.heuristic_kappas:
        N_cr = (2.0 / kappa) ** 1.5
        res = chandrasekhar_heuristic(HeuristicStarParams.from_kappa(N_cr, kappa))
        below = chandrasekhar_heuristic(HeuristicStarParams.from_kappa(N_cr * (1 - 1e-9), kappa))
        above = chandrasekhar_heuristic(HeuristicStarParams.from_kappa(N_cr * (1 + 1e-9), kappa))
        ok = math.isclose(res.N_cr, N_cr, rel_tol=1e-12) and below.bounded and not above.bounded
        rep.rows.append(CheckRow(
            f"heuristic kappa={kappa:g}", ok,
            f"N_cr={res.N_cr:.10g} M_cr={res.M_cr:.10g} printed-form N_cr={res.N_cr_printed:.10g}",
        ))
        rep.measured[f"N_cr[kappa={kappa:g}]"] = res.N_cr

    cons = short_conservation_run(cfg)
    ok = cons["energy_drift"] <= 1e-6 and cons["number_drift"] <= 1e-10 and cons["gram_offdiag"] <= 1e-10
    rep.rows.append(CheckRow(
        "conservation_short_run", ok,
        " ".join(f"{k}={v:.3e}" for k, v in cons.items()),
    ))
    rep.measured.update(cons)
    return rep
