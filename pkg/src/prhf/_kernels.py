"""Pointwise hot loops, compiled with numba when available.

Every kernel has a pure-numpy twin.  The active implementation is picked once
at import time:

* ``PRHF_NUMBA=0`` forces the numpy path,
* otherwise numba is used if it imports cleanly.

Both paths are exported explicitly (``numba_impl`` / ``numpy_impl``) so the
tests and the benchmark can compare them directly.  The two implementations
of :func:`hermitian_expm_apply` use different algorithms (truncated Taylor series
applied to the vector vs. batched eigendecomposition) and agree to roundoff.
"""

from __future__ import annotations

import os
import types

import numpy as np

__all__ = [
    "USING_NUMBA",
    "phase_multiply",
    "abs2_sum",
    "hermitian_expm_apply",
    "numpy_impl",
    "numba_impl",
]


# --------------------------------------------------------------------------
# numpy reference path
# --------------------------------------------------------------------------


def _phase_multiply_np(psi, potential, dt):
    """Return ``psi * exp(1j * dt * potential)``; ``psi`` is (N, ncell)."""
    return psi * np.exp(1j * dt * potential)[None, :]


def _abs2_sum_np(psi):
    return np.sum(psi.real**2 + psi.imag**2, axis=0)


def _hermitian_expm_apply_np(gen, psi, dt):
    """Apply ``exp(-1j*dt*gen[:, :, c]) @ psi[:, c]`` for every cell ``c``.

    ``gen`` has shape (N, N, ncell) and is Hermitian in its first two axes.
    """
    h = np.ascontiguousarray(np.moveaxis(gen, 2, 0))
    w, u = np.linalg.eigh(h)
    v = np.ascontiguousarray(psi.T)[:, :, None]
    coeff = np.matmul(np.conj(np.swapaxes(u, 1, 2)), v)[:, :, 0]
    coeff *= np.exp(-1j * dt * w)
    out = np.matmul(u, coeff[:, :, None])[:, :, 0]
    return np.ascontiguousarray(out.T)


numpy_impl = types.SimpleNamespace(
    phase_multiply=_phase_multiply_np,
    abs2_sum=_abs2_sum_np,
    hermitian_expm_apply=_hermitian_expm_apply_np,
)


# --------------------------------------------------------------------------
# numba path
# --------------------------------------------------------------------------

numba_impl = None

if os.environ.get("PRHF_NUMBA", "1") != "0":
    try:
        import numba as nb
    except ImportError:  # pragma: no cover - numba is a soft dependency
        nb = None

    if nb is not None:

        @nb.njit(cache=True)
        def _phase_multiply_nb(psi, potential, dt):
            norb, ncell = psi.shape
            out = np.empty_like(psi)
            for c in range(ncell):
                ph = dt * potential[c]
                z = complex(np.cos(ph), np.sin(ph))
                for k in range(norb):
                    out[k, c] = psi[k, c] * z
            return out

        @nb.njit(cache=True)
        def _abs2_sum_nb(psi):
            norb, ncell = psi.shape
            out = np.zeros(ncell)
            for k in range(norb):
                for c in range(ncell):
                    v = psi[k, c]
                    out[c] += v.real * v.real + v.imag * v.imag
            return out

        # at most this many Taylor terms per sub-application; with the scaled
        # 1-norm <= 0.5 the series is exhausted to roundoff well before
        _TAYLOR_MAX = 30

        @nb.njit(cache=True)
        def _hermitian_expm_apply_nb(gen, psi, dt):
            # exp(-i dt H) v = (exp(-i dt H / 2**s))**(2**s) v, each factor a
            # Taylor series applied to the vector and truncated adaptively
            norb, _, ncell = gen.shape
            out = np.empty_like(psi)
            v = np.empty(norb, dtype=np.complex128)
            term = np.empty(norb, dtype=np.complex128)
            nxt = np.empty(norb, dtype=np.complex128)
            for c in range(ncell):
                norm = 0.0
                for j in range(norb):
                    col = 0.0
                    for i in range(norb):
                        col += abs(gen[i, j, c])
                    if col > norm:
                        norm = col
                norm *= abs(dt)
                reps = 1
                while norm > 0.5:
                    norm *= 0.5
                    reps *= 2
                scale = dt / reps
                for i in range(norb):
                    v[i] = psi[i, c]
                for _ in range(reps):
                    vnorm = 0.0
                    for i in range(norb):
                        term[i] = v[i]
                        vnorm += abs(v[i])
                    for d in range(1, _TAYLOR_MAX + 1):
                        tnorm = 0.0
                        for i in range(norb):
                            acc = 0j
                            for q in range(norb):
                                acc += gen[i, q, c] * term[q]
                            nxt[i] = (-1j * scale / d) * acc
                            tnorm += abs(nxt[i])
                        for i in range(norb):
                            term[i] = nxt[i]
                            v[i] += nxt[i]
                        if tnorm <= 1e-18 * vnorm:
                            break
                for i in range(norb):
                    out[i, c] = v[i]
            return out

        numba_impl = types.SimpleNamespace(
            phase_multiply=_phase_multiply_nb,
            abs2_sum=_abs2_sum_nb,
            hermitian_expm_apply=_hermitian_expm_apply_nb,
        )


USING_NUMBA = numba_impl is not None
_active = numba_impl if USING_NUMBA else numpy_impl


def phase_multiply(psi: np.ndarray, potential: np.ndarray, dt: float) -> np.ndarray:
    """Multiply every orbital by the real phase ``exp(i dt V)`` cellwise."""
    norb = psi.shape[0]
    flat = np.ascontiguousarray(psi.reshape(norb, -1))
    out = _active.phase_multiply(flat, np.ascontiguousarray(potential.ravel()), float(dt))
    return out.reshape(psi.shape)


def abs2_sum(psi: np.ndarray) -> np.ndarray:
    """Sum of squared moduli over the leading (orbital) axis."""
    norb = psi.shape[0]
    flat = np.ascontiguousarray(psi.reshape(norb, -1))
    return _active.abs2_sum(flat).reshape(psi.shape[1:])


def hermitian_expm_apply(gen: np.ndarray, psi: np.ndarray, dt: float) -> np.ndarray:
    """Cellwise ``exp(-i dt G(x)) psi(x)`` for a Hermitian N x N field ``G``.

    ``gen`` has shape (N, N, *grid) and ``psi`` has shape (N, *grid).
    """
    norb = psi.shape[0]
    g = np.ascontiguousarray(gen.reshape(norb, norb, -1))
    flat = np.ascontiguousarray(psi.reshape(norb, -1))
    return _active.hermitian_expm_apply(g, flat, float(dt)).reshape(psi.shape)
