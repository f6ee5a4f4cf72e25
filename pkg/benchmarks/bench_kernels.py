"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 20] [--no-end-to-end]

Kernel timings call both versions in one process. The end-to-end timing runs
the distributed fig1_left scenario twice in fresh interpreters, once with
L1FAULT_DISABLE_NUMBA=1.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from l1fault import _kernels as K
from l1fault.graph import grid_graph
from l1fault.plant import build_plant, double_integrator
from l1fault.solvers import AffineProjector


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rng):
    plant = build_plant(grid_graph(3, 3), double_integrator())
    C = plant.C(0)
    f = np.zeros(plant.dim)
    f[[10, 11, 18, 19]] = rng.uniform(-10, 10, 4)
    b = C @ f
    proj = AffineProjector(C)
    x_ls = proj.particular(b)
    q = C.shape[1]
    cases = {}

    def bp(fn):
        def run():
            z, u = proj.project(np.zeros(q), b), np.zeros(q)
            fn(proj.P, x_ls, C, b, np.zeros(q), 1.0, 1.6, 1e-9, 1e-10, 20000, z, u)
        return run

    Cn = rng.normal(size=(6, 16))
    yn, cn, vn = rng.normal(size=6), rng.normal(size=16), rng.normal(size=16)

    def newton(fn):
        def run():
            fn(Cn, yn, cn, vn, 1.5, 1.0 / 9, 1e-10, 200, np.zeros(6), np.zeros(16))
        return run

    cases["bp_admm (platoon, 36 vars)"] = (bp(K.bp_admm_np), bp(K.bp_admm_nb) if K.bp_admm_nb else None)
    cases["node_newton (6 x 16)"] = (newton(K.node_newton_np), newton(K.node_newton_nb) if K.node_newton_nb else None)
    return cases


def end_to_end(disable: bool) -> float:
    env = dict(os.environ)
    if disable:
        env[K.NUMBA_DISABLED_ENV] = "1"
    else:
        env.pop(K.NUMBA_DISABLED_ENV, None)
    code = (
        "import time\n"
        "from l1fault.scenario import load_scenario\n"
        "from l1fault.runner import simulate_distributed\n"
        "s = load_scenario('fig1_left')\n"
        "simulate_distributed(s.replace(horizon=2))\n"
        "t = time.perf_counter(); simulate_distributed(s); print(time.perf_counter() - t)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    if not K.USING_NUMBA:
        print("numba path unavailable (not installed or disabled); only numpy timings shown")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speed-up':>9s}")
    for name, (f_np, f_nb) in kernel_cases(rng).items():
        t_np = best_of(f_np, args.repeat) * 1e3
        if f_nb is None:
            print(f"{name:32s} {t_np:10.3f} {'-':>10s} {'-':>9s}")
            continue
        t_nb = best_of(f_nb, args.repeat) * 1e3
        print(f"{name:32s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}x")

    if not args.no_end_to_end:
        t_np, t_nb = end_to_end(True), end_to_end(False)
        print(f"{'fig1_left distributed run (s)':32s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
