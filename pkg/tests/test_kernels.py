import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.linalg import expm

from prhf import _kernels as K

impls = [pytest.param(K.numpy_impl, id="numpy")]
if K.numba_impl is not None:
    impls.append(pytest.param(K.numba_impl, id="numba"))


def random_hermitian_field(rng, N, ncell, scale=1.0):
    a = rng.standard_normal((ncell, N, N)) + 1j * rng.standard_normal((ncell, N, N))
    h = scale * (a + np.conj(np.swapaxes(a, 1, 2))) / 2
    return np.ascontiguousarray(np.moveaxis(h, 0, 2))


def random_orbitals(rng, N, ncell):
    return rng.standard_normal((N, ncell)) + 1j * rng.standard_normal((N, ncell))


@pytest.mark.parametrize("impl", impls)
def test_phase_multiply(impl, rng):
    psi = random_orbitals(rng, 3, 50)
    V = rng.standard_normal(50)
    out = impl.phase_multiply(psi, V, 0.3)
    assert np.allclose(out, psi * np.exp(0.3j * V), rtol=0, atol=1e-14)
    assert np.allclose(np.abs(out), np.abs(psi), rtol=1e-14)


@pytest.mark.parametrize("impl", impls)
def test_abs2_sum(impl, rng):
    psi = random_orbitals(rng, 4, 40)
    assert np.allclose(impl.abs2_sum(psi), np.sum(np.abs(psi) ** 2, axis=0), rtol=1e-14)


@pytest.mark.parametrize("impl", impls)
@pytest.mark.parametrize("N", [1, 2, 4])
@pytest.mark.parametrize("scale", [0.01, 1.0, 40.0])
def test_expm_matches_scipy(impl, N, scale, rng):
    ncell = 30
    gen = random_hermitian_field(rng, N, ncell, scale)
    psi = random_orbitals(rng, N, ncell)
    dt = 0.37
    out = impl.hermitian_expm_apply(gen, psi, dt)
    for c in range(ncell):
        ref = expm(-1j * dt * gen[:, :, c]) @ psi[:, c]
        assert np.allclose(out[:, c], ref, rtol=0, atol=1e-12 * max(1.0, np.linalg.norm(psi[:, c])))


@pytest.mark.parametrize("impl", impls)
def test_expm_is_unitary(impl, rng):
    gen = random_hermitian_field(rng, 3, 200, 5.0)
    psi = random_orbitals(rng, 3, 200)
    out = impl.hermitian_expm_apply(gen, psi, 1.1)
    assert np.allclose(np.linalg.norm(out, axis=0), np.linalg.norm(psi, axis=0), rtol=1e-13)


@pytest.mark.parametrize("impl", impls)
def test_expm_zero_step(impl, rng):
    gen = random_hermitian_field(rng, 2, 10)
    psi = random_orbitals(rng, 2, 10)
    assert np.allclose(impl.hermitian_expm_apply(gen, psi, 0.0), psi, rtol=0, atol=1e-14)


@pytest.mark.skipif(K.numba_impl is None, reason="numba unavailable")
def test_backends_agree(rng):
    gen = random_hermitian_field(rng, 4, 500, 3.0)
    psi = random_orbitals(rng, 4, 500)
    a = K.numpy_impl.hermitian_expm_apply(gen, psi, 0.2)
    b = K.numba_impl.hermitian_expm_apply(gen, psi, 0.2)
    assert np.max(np.abs(a - b)) <= 5e-13


def test_public_wrappers_keep_shape(rng):
    psi = random_orbitals(rng, 2, 27).reshape(2, 3, 3, 3)
    gen = random_hermitian_field(rng, 2, 27).reshape(2, 2, 3, 3, 3)
    assert K.hermitian_expm_apply(gen, psi, 0.1).shape == psi.shape
    assert K.phase_multiply(psi, np.zeros((3, 3, 3)), 0.1).shape == psi.shape
    assert K.abs2_sum(psi).shape == (3, 3, 3)


def test_env_flag_forces_numpy():
    env = dict(os.environ, PRHF_NUMBA="0")
    code = "import prhf._kernels as k; print(k.USING_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
