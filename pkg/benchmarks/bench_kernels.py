"""Numba vs numpy timings for the pointwise kernels and a full Strang step.

    python3 benchmarks/bench_kernels.py [--n 32] [--N 4] [--repeat 5]

The kernel table calls both implementations in-process.  The step table
runs each backend in a subprocess, because the backend is fixed at import.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from prhf import _kernels


def best_of(fn, repeat):
    fn()  # warm-up / JIT
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_table(n, N, repeat):
    rng = np.random.default_rng(0)
    c = n**3
    psi = rng.standard_normal((N, c)) + 1j * rng.standard_normal((N, c))
    V = rng.standard_normal(c)
    A = rng.standard_normal((N, N, c)) + 1j * rng.standard_normal((N, N, c))
    A = 0.5 * (A + np.conj(np.swapaxes(A, 0, 1)))
    cases = {
        "phase_multiply": (psi, V, 0.01),
        "abs2_sum": (psi,),
        "hermitian_expm_apply": (A, psi, 0.01),
    }
    rows = []
    for name, args in cases.items():
        t_np = best_of(lambda: getattr(_kernels.numpy_impl, name)(*args), repeat)
        if _kernels.numba_impl is not None:
            t_nb = best_of(lambda: getattr(_kernels.numba_impl, name)(*args), repeat)
        else:
            t_nb = float("nan")
        rows.append((name, t_np, t_nb))
    return rows


STEP_SNIPPET = """
import json, time
from prhf import _kernels
from prhf.grid import Grid
from prhf.initdata import BallShellSpec, ball_shell_eigenstates
from prhf.dynamics import SimState, step_strang
g = Grid({n}, 16.0)
psi = ball_shell_eigenstates(BallShellSpec({N}, 16.0 / 6), g, m=1.0, kappa=0.1)
s = SimState(psi, model="hartree_fock")
step_strang(s, 0.01)
best = 1e9
for _ in range({repeat}):
    t0 = time.perf_counter(); step_strang(s, 0.01); best = min(best, time.perf_counter() - t0)
print(json.dumps({{"numba": _kernels.USING_NUMBA, "seconds": best}}))
"""


def step_table(n, N, repeat):
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, PRHF_NUMBA=flag)
        code = STEP_SNIPPET.format(n=n, N=N, repeat=repeat)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        info = json.loads(res.stdout.strip().splitlines()[-1])
        out["numba" if info["numba"] else "numpy"] = info["seconds"]
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--N", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"kernels on {args.n}^3 cells, N={args.N} (best of {args.repeat})")
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, t_np, t_nb in kernel_table(args.n, args.N, args.repeat):
        print(f"{name:<24}{1e3 * t_np:12.2f}{1e3 * t_nb:12.2f}{t_np / t_nb:10.2f}")

    st = step_table(args.n, args.N, args.repeat)
    print(f"\nHartree-Fock Strang step, {args.n}^3, N={args.N}")
    for k, v in st.items():
        print(f"  {k:<6} {1e3 * v:8.1f} ms")


if __name__ == "__main__":
    main()
