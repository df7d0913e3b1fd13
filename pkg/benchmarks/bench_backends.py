"""Compare the numba and pure-numpy backends on the same workloads.

Each backend runs in a fresh interpreter, since ``LPMKL_DISABLE_JIT`` is read
at import time. A warm-up call keeps numba compilation out of the timings.

    python3 benchmarks/bench_backends.py [--repeats 3] [--n 300]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
import lpmkl
from lpmkl.kernels import KernelStack, rbf_kernel
from lpmkl.mkl import MklConfig, train
from lpmkl.svm import SvmConfig, solve_matrix

n, repeats = int(sys.argv[1]), int(sys.argv[2])
rng = np.random.default_rng(0)
y = np.where(rng.permutation(n) < n // 2, 1.0, -1.0)
X = rng.standard_normal((n, 5)) + 0.6 * y[:, None] * (np.arange(5) < 2)
stack = KernelStack([rbf_kernel(X, 5 * 2.0 ** k, name=f"rbf{k}") for k in range(-2, 3)])
K = stack.values.sum(axis=0)

jobs = {
    "svm": lambda: solve_matrix(K, y, SvmConfig(C=1.0, epsilon=1e-6)),
    "mkl_wrapper": lambda: train(stack, y, MklConfig(p=2.0, mode="wrapper")),
    "mkl_interleaved": lambda: train(stack, y, MklConfig(p=2.0, mode="interleaved")),
}
out = {"backend": lpmkl.backend_name()}
for name, job in jobs.items():
    job()  # warm-up, includes any JIT compilation
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        job()
        times.append(time.perf_counter() - t0)
    out[name] = min(times)
print(json.dumps(out))
"""


def run(disable_jit: bool, n: int, repeats: int) -> dict:
    env = dict(os.environ, LPMKL_DISABLE_JIT="1" if disable_jit else "0")
    res = subprocess.run([sys.executable, "-c", WORKER, str(n), str(repeats)], env=env,
                         capture_output=True, text=True)
    if res.returncode:
        sys.exit(f"benchmark worker failed:\n{res.stderr}")
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300, help="training points")
    ap.add_argument("--repeats", type=int, default=3, help="timed runs per job (best is kept)")
    args = ap.parse_args(argv)

    jit, plain = run(False, args.n, args.repeats), run(True, args.n, args.repeats)
    print(f"n = {args.n}, best of {args.repeats}")
    print(f"{'workload':<18}{jit['backend']:>10}{plain['backend']:>10}{'speed-up':>10}")
    for key in ("svm", "mkl_wrapper", "mkl_interleaved"):
        print(f"{key:<18}{jit[key]:>9.3f}s{plain[key]:>9.3f}s{plain[key] / jit[key]:>9.1f}x")


if __name__ == "__main__":
    main()
