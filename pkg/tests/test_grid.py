import numpy as np
import pytest
from hypothesis import given, strategies as st

from prhf.grid import (
    AliasingError,
    Grid,
    apply_multiplier,
    band_limited_resample,
    fft,
    ifft,
    inner,
    make_grid,
    norm_sq,
    position_coordinates,
)
from prhf.initdata import gaussian

from conftest import random_field


def test_lattice_n8_L2pi():
    g = make_grid(8, 2 * np.pi)
    assert g.dx == pytest.approx(np.pi / 4)
    assert sorted(g.k_axis) == [-4, -3, -2, -1, 0, 1, 2, 3]


def test_smallest_wavenumber():
    g = make_grid(16, 1.0)
    nonzero = np.abs(g.k_axis[g.k_axis != 0])
    assert nonzero.min() == pytest.approx(2 * np.pi)


@pytest.mark.parametrize("n,L", [(7, 1.0), (2, 1.0), (6, 1.0), (16, 0.0), (16, -1.0), (512, 1.0)])
def test_bad_grid_rejected(n, L):
    with pytest.raises(ValueError):
        make_grid(n, L)


def test_wavenumbers_bit_reproducible():
    a = make_grid(24, 3.7).k_axis
    b = make_grid(24, 3.7).k_axis
    assert a.tobytes() == b.tobytes()


def test_position_coordinates_n8_L8():
    g = make_grid(8, 8.0)
    x1, x2, x3 = position_coordinates(g)
    assert list(x1.ravel()) == [-4, -3, -2, -1, 0, 1, 2, 3]
    assert x1.shape == (1, 1, 8) and x3.shape == (8, 1, 1)
    # brute-force sum of x1 over the whole grid
    total = sum(-4.0 + i for i in range(8)) * 64
    assert np.sum(np.broadcast_to(x1, g.shape)) == pytest.approx(total)
    assert total == pytest.approx(-(g.n**2) * g.L / 2 * g.dx)


def test_x_fastest_layout(g16):
    x1, _, _ = position_coordinates(g16)
    flat = np.broadcast_to(x1, g16.shape).ravel()
    assert flat[1] - flat[0] == pytest.approx(g16.dx)


@given(st.integers(0, 2**32 - 1))
def test_fft_round_trip(seed):
    g = Grid(16, 5.0)
    f = random_field(g, np.random.default_rng(seed), smooth=False)
    back = ifft(fft(f))
    assert np.linalg.norm(back - f) <= 1e-12 * np.linalg.norm(f)


def test_identity_symbol(g16, rng):
    f = random_field(g16, rng, smooth=False)
    out = apply_multiplier(f, np.ones(g16.shape))
    assert np.linalg.norm(out - f) <= 1e-12 * np.linalg.norm(f)


def test_nonfinite_symbol_rejected(g16, rng):
    s = np.ones(g16.shape)
    s[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        apply_multiplier(random_field(g16, rng), s)


def plane_wave(g, idx):
    x1, x2, x3 = position_coordinates(g)
    k = g.k_axis
    return np.exp(1j * (k[idx[0]] * x1 + k[idx[1]] * x2 + k[idx[2]] * x3)), np.sqrt(
        k[idx[0]] ** 2 + k[idx[1]] ** 2 + k[idx[2]] ** 2
    )


@given(st.tuples(st.integers(0, 15), st.integers(0, 15), st.integers(0, 15)), st.floats(0, 3))
def test_plane_wave_eigenrelation(idx, m):
    g = Grid(16, 4.0)
    f, kk = plane_wave(g, idx)
    out = apply_multiplier(f, np.sqrt(g.k2 + m * m))
    assert np.max(np.abs(out - np.sqrt(kk**2 + m * m) * f)) <= 1e-12 * (1 + kk)


@given(st.integers(0, 2**32 - 1))
def test_multiplier_self_adjoint_and_bounded(seed):
    g = Grid(16, 3.0)
    r = np.random.default_rng(seed)
    u, v = random_field(g, r, False), random_field(g, r, False)
    s = r.uniform(-2, 2, size=g.shape)
    lhs = inner(u, apply_multiplier(v, s), g)
    rhs = inner(apply_multiplier(u, s), v, g)
    scale = np.sqrt(norm_sq(u, g) * norm_sq(v, g))
    assert abs(lhs - rhs) <= 1e-10 * scale
    assert norm_sq(apply_multiplier(u, s), g) <= np.max(np.abs(s)) ** 2 * norm_sq(u, g) * (1 + 1e-12)


def test_multiplier_commutes_with_translation(g16, rng):
    f = random_field(g16, rng, False)
    s = np.sqrt(g16.k2 + 1.0)
    shifted = np.roll(f, 3, axis=2)
    assert np.allclose(apply_multiplier(shifted, s), np.roll(apply_multiplier(f, s), 3, axis=2), atol=1e-12)


def test_resample_identity(g16, rng):
    f = random_field(g16, rng)
    assert np.array_equal(band_limited_resample(f, g16, 1.0), f)


@pytest.mark.parametrize("scale", [0.8, 1.25, 1.6])
def test_resample_gaussian_closed_form(scale):
    g = Grid(48, 16.0)
    w = 1.0
    f = gaussian(g, (0, 0, 0), w)
    out = band_limited_resample(f, g, scale)
    expected = gaussian(g, (0, 0, 0), scale * w)
    assert np.max(np.abs(out - expected)) <= 1e-6 * np.max(np.abs(expected))
    assert norm_sq(out, g) == pytest.approx(norm_sq(f, g), rel=1e-8)


def test_resample_aliasing_errors():
    g = Grid(32, 8.0)
    with pytest.raises(AliasingError):
        band_limited_resample(gaussian(g, (0, 0, 0), 1.0), g, 3.0)
    with pytest.raises(AliasingError):
        band_limited_resample(gaussian(g, (0, 0, 0), 0.5), g, 0.3)
    with pytest.raises(ValueError):
        band_limited_resample(gaussian(g, (0, 0, 0), 1.0), g, 0.0)
