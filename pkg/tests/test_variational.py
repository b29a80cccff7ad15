import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from prhf.grid import Grid, fft, ifft
from prhf.initdata import gaussian
from prhf.operators import OrbitalSet, density, kinetic_apply, coulomb_convolve
from prhf.variational import (
    DAUBECHIES_K,
    HLS_ENVELOPE,
    BisectionParams,
    BracketError,
    FlowParams,
    HeuristicStarParams,
    NotConvergedError,
    chandrasekhar_heuristic,
    critical_coupling,
    daubechies_check,
    gradient_flow_ground_state,
    heuristic_energy_function,
    hls_check,
    hls_corpus,
    hls_ratio,
    random_admissible_family,
    relativistic_lowest_eigenvalue,
    verdicts_monotone,
)

# D / (N^(2/3) int rho^(4/3)) for any Gaussian density: sqrt(2) / (3/4)^(3/2)
GAUSSIAN_HLS = math.sqrt(2) / 0.75**1.5


# -- heuristic star --------------------------------------------------------------


@pytest.mark.parametrize("kappa,N_cr", [(2.0, 1.0), (0.02, 1000.0), (0.5, 8.0)])
def test_heuristic_threshold_exact(kappa, N_cr):
    res = chandrasekhar_heuristic(HeuristicStarParams.from_kappa(N_cr, kappa))
    assert res.N_cr == pytest.approx(N_cr, rel=1e-12)
    assert res.bounded
    assert chandrasekhar_heuristic(HeuristicStarParams.from_kappa(N_cr * 1.001, kappa)).bounded is False


def test_heuristic_physical_magnitude():
    res = chandrasekhar_heuristic(HeuristicStarParams.from_kappa(1e50, 1e-38))
    assert 56 <= math.log10(res.N_cr) <= 58
    assert res.bounded and res.p_star > 0


@pytest.mark.parametrize("N", [0.1, 1.0, 5.0, 7.9])
def test_heuristic_matches_numerical_minimum(N):
    p = HeuristicStarParams.from_kappa(N, 0.5, m=1.3, m_Z=2.0)
    res = chandrasekhar_heuristic(p)
    opt = minimize_scalar(lambda q: heuristic_energy_function(p, q), bounds=(0, 1e3), method="bounded",
                          options={"xatol": 1e-12})
    assert res.energy == pytest.approx(opt.fun, rel=1e-9)
    assert res.p_star == pytest.approx(opt.x, rel=1e-4, abs=1e-6)


def test_heuristic_p_star_diverges_monotonically():
    kappa = 0.02
    Ns = 1000.0 * (1 - np.logspace(-1, -12, 12))
    ps = [chandrasekhar_heuristic(HeuristicStarParams.from_kappa(N, kappa)).p_star for N in Ns]
    assert all(b > a for a, b in zip(ps, ps[1:]))
    assert ps[-1] > 1e5
    edge = chandrasekhar_heuristic(HeuristicStarParams.from_kappa(1000.0, kappa))
    assert edge.p_star == math.inf or edge.p_star > 1e7


def test_heuristic_unbounded_above_threshold():
    p = HeuristicStarParams.from_kappa(2.0, 2.0)
    res = chandrasekhar_heuristic(p)
    assert res.energy == -math.inf and not res.bounded
    vals = heuristic_energy_function(p, [1e2, 1e4, 1e6])
    assert vals[0] > vals[1] > vals[2]


def test_heuristic_printed_form():
    p = HeuristicStarParams(N=1.0, Z=2.0, m=1.0, m_Z=3.0, G=1e-3)
    res = chandrasekhar_heuristic(p)
    assert res.N_cr_printed / res.N_cr == pytest.approx(p.m_Z**1.5 / 2**1.5, rel=1e-12)
    assert res.M_cr == pytest.approx(res.N_cr * p.m_Z / p.Z)


def test_heuristic_validation():
    with pytest.raises(ValueError):
        HeuristicStarParams(N=1.0, m=2.0, m_Z=1.0)
    with pytest.raises(ValueError):
        HeuristicStarParams(N=-1.0)


# -- kinetic lower bound -----------------------------------------------------------


def test_daubechies_gaussian_closed_form(g32):
    rep = daubechies_check(OrbitalSet(gaussian(g32, (0, 0, 0), 1.0), g32))
    assert rep.lhs == pytest.approx(2 / math.sqrt(math.pi), abs=2e-3)
    assert rep.rhs == pytest.approx(DAUBECHIES_K * 0.75**1.5 / math.sqrt(math.pi), rel=1e-6)
    assert rep.rhs == pytest.approx(0.597, abs=1e-3)
    assert rep.passed


def test_daubechies_zero_set(g16):
    rep = daubechies_check(OrbitalSet(np.zeros((2,) + g16.shape), g16))
    assert math.isnan(rep.ratio) and rep.passed


def test_daubechies_rejects_large_gram(g16):
    psi = OrbitalSet(gaussian(g16, (0, 0, 0), 1.5), g16)
    with pytest.raises(ValueError, match="0 <= G <= 1"):
        daubechies_check(psi.with_psi(2 * psi.psi))


@pytest.mark.parametrize("sub", [False, True])
def test_daubechies_random_families(g32, sub):
    rng = np.random.default_rng(11)
    for N in (1, 2, 3, 4):
        rep = daubechies_check(random_admissible_family(g32, rng, N, sub_orthonormal=sub))
        assert rep.passed, rep.line()


# -- HLS-type estimate -------------------------------------------------------------


def test_hls_gaussian_value(g32):
    for w in (1.5, 2.0):
        _, _, r = hls_ratio(np.abs(gaussian(g32, (0, 0, 0), w)) ** 2, g32)
        assert r == pytest.approx(GAUSSIAN_HLS, rel=1e-3)


@given(st.floats(0.01, 100.0), st.integers(-3, 3), st.integers(-3, 3))
def test_hls_scale_and_translation_invariant(c, s1, s2):
    g = Grid(32, 16.0)
    rho = np.abs(gaussian(g, (0.4, -0.3, 0.2), 1.6)) ** 2 + 0.5 * np.abs(gaussian(g, (-1, 1, 0), 1.8)) ** 2
    _, _, r0 = hls_ratio(rho, g)
    _, _, r1 = hls_ratio(c * np.roll(rho, (s1, s2), axis=(0, 2)), g)
    # np.roll wraps a ~1e-8 tail across the box while D is a free-space sum
    assert r1 == pytest.approx(r0, rel=1e-6)


def test_hls_corpus_below_envelope(g32):
    corpus = hls_corpus(g32, np.random.default_rng(0), 20)
    ratios = {label: hls_check(rho, g32, label).ratio for label, rho in corpus}
    top = max(ratios, key=ratios.get)
    assert ratios[top] <= HLS_ENVELOPE
    assert top.startswith("gaussian")
    assert ratios[top] == pytest.approx(GAUSSIAN_HLS, rel=2e-3)


def test_hls_rejects_bad_density(g16):
    with pytest.raises(ValueError):
        hls_ratio(-np.ones(g16.shape), g16)
    with pytest.raises(ValueError):
        hls_ratio(np.zeros(g16.shape), g16)


# -- lowest eigenvalue -------------------------------------------------------------


def test_eigenvalue_free_operator():
    g = Grid(8, 4.0)
    lam, v = relativistic_lowest_eigenvalue(np.zeros(g.shape), 1.0, g)
    assert abs(lam) <= 1e-8
    assert np.allclose(np.abs(v), np.abs(v).mean(), atol=1e-6)


def test_eigenvalue_dense_oracle():
    g = Grid(8, 4.0)
    U = np.exp(-g.r**2)
    c = 2.5
    eye = np.eye(g.n**3).reshape((g.n**3,) + g.shape)
    K = np.array([ifft(g.kabs * fft(e)).ravel() for e in eye]).T
    H = K - c * np.diag(U.ravel())
    want = np.linalg.eigvalsh((H + H.conj().T) / 2)[0]
    lam, _ = relativistic_lowest_eigenvalue(U, c, g)
    assert lam == pytest.approx(want, abs=1e-8)
    assert lam < 0


def test_eigenvalue_input_checks():
    g = Grid(8, 4.0)
    with pytest.raises(ValueError):
        relativistic_lowest_eigenvalue(-np.ones(g.shape), 1.0, g)
    with pytest.raises(NotConvergedError):
        relativistic_lowest_eigenvalue(np.exp(-g.r**2), 1.0, g, maxiter=1)


# -- gradient flow and critical coupling -----------------------------------------


@pytest.fixture(scope="module")
def g24():
    return Grid(24, 12.0)


def test_flow_converges_below_threshold(g24):
    res = gradient_flow_ground_state(1, 1.0, 1.0, g24, FlowParams(grad_tol=1e-5))
    assert res.converged and res.verdict == "converged"
    assert res.grad_norm <= 1e-5
    E = np.array(res.energies)
    assert np.all(np.diff(E) <= 1e-12 * (1 + np.abs(E[:-1])))
    # the limit is a critical point: (T + U) psi = lambda psi
    psi = res.psi
    f = psi.psi[0]
    hf = kinetic_apply(f, g24, psi.m) - psi.kappa * coulomb_convolve(density(psi), g24) * f
    lam = np.vdot(f, hf).real * g24.dV
    assert math.sqrt(np.sum(np.abs(hf - lam * f) ** 2) * g24.dV) <= 1e-5
    assert lam < psi.m


def test_flow_collapses_above_threshold(g24):
    res = gradient_flow_ground_state(1, 6.0, 1.0, g24)
    assert res.collapsed and not res.converged


def test_flow_hartree_fock_shells(g24):
    params = FlowParams(tau=2.0, grad_tol=1e-3, max_steps=600)
    res = gradient_flow_ground_state(4, 1.0, 1.0, g24, params, model="hartree_fock")
    assert res.converged and res.steps < 600
    assert np.all(np.diff(res.energies) <= 1e-12)
    assert np.allclose(np.eye(4), [[np.vdot(a, b) * g24.dV for b in res.psi.psi] for a in res.psi.psi], atol=1e-12)


def test_critical_coupling_small_grid(g24):
    res = critical_coupling(1, 1.0, g24, BisectionParams(lo=1.5, hi=4.0, rel_width=0.2))
    collapse_side, stable_side = res.bracket
    assert stable_side < res.kappa_cr_measured < collapse_side
    assert res.width <= 0.2
    assert verdicts_monotone(res.history)
    assert 1.5 < res.kappa_cr_measured < 4.0


def test_bracket_error(g24):
    with pytest.raises(BracketError):
        critical_coupling(1, 1.0, g24, BisectionParams(lo=0.5, hi=1.0))


def test_verdicts_monotone():
    assert verdicts_monotone([(1.0, "converged"), (3.0, "collapse"), (2.0, "max_steps")])
    assert not verdicts_monotone([(1.0, "collapse"), (2.0, "converged")])
    assert verdicts_monotone([])
