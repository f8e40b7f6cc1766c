"""Compare the compiled and numpy assembly kernels.

    python3 benchmarks/bench_kernels.py [--n 64] [--repeat 5]

The second half times a full matrix assembly in a subprocess with
PLATEKIT_PURE_PYTHON set, so the fallback path is measured end to end.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from platekit import kernels

ASSEMBLE = """
import time
from platekit import get_problem, MethodSpec, DgConfig, assemble
from platekit.kernels import BACKEND
prob = get_problem("p1")
mesh = prob.mesh("unstructured", {n}, 0)
method = MethodSpec.from_name("fq")
assemble(mesh, method, prob.material, DgConfig(), load=prob.load)
best = min(
    (lambda t0: (assemble(mesh, method, prob.material, DgConfig(), load=prob.load), time.perf_counter() - t0)[1])(
        time.perf_counter())
    for _ in range({repeat})
)
print(BACKEND, best)
"""


def kernel_case(m, r, w, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, r, r))
    A = A + A.transpose(0, 2, 1)
    X = rng.standard_normal((m, r, w))
    dofs = rng.integers(0, 4 * m, size=(m, w))
    return A, X, dofs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64, help="mesh subdivisions for the assembly timing")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    for m, r, w in [(8192, 6, 6), (8192, 12, 12), (20000, 6, 12)]:
        A, X, dofs = kernel_case(m, r, w)
        t_np = min(timeit.repeat(lambda: kernels.conjugate_scatter_numpy(A, X, dofs), number=1, repeat=args.repeat))
        line = f"scatter m={m:6d} r={r:2d} w={w:2d}  numpy {t_np * 1e3:8.2f} ms"
        if kernels.BACKEND == "cython":
            ref = kernels.conjugate_scatter_numpy(A, X, dofs)[2]
            got = kernels.conjugate_scatter(A, X, dofs)[2]
            assert np.allclose(ref, got, rtol=1e-12, atol=1e-12)
            t_c = min(timeit.repeat(lambda: kernels.conjugate_scatter(A, X, dofs), number=1, repeat=args.repeat))
            line += f"  compiled {t_c * 1e3:8.2f} ms  speedup {t_np / t_c:5.2f}x"
        print(line)

    code = ASSEMBLE.format(n=args.n, repeat=args.repeat)
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("PLATEKIT_PURE_PYTHON", None)
        if pure:
            env["PLATEKIT_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"assembly n={args.n} (fq, unstructured) backend={backend:6s} {float(secs):.3f} s")


if __name__ == "__main__":
    main()
