"""Compiled kernels against the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Times Pólya-Gamma draws, subset sampling, the neighbourhood evaluation and a
short PG-wTGS chain with each implementation and prints the speed-up. The
chain comparison runs the fallback in a subprocess with
``BVSELECT_PURE_PYTHON=1`` so the whole sampler uses it.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bvselect.mll import Design, kappa_z
from bvselect.pg import kernels
from bvselect.synthetic import linear_planted

CHAIN_SNIPPET = """
import time
from bvselect import SamplerConfig, run_chain
from bvselect.pg import IMPLEMENTATION
from bvselect.synthetic import correlated_duo
ds = correlated_duo(0)
cfg = SamplerConfig(T={T}, T_burn={T} // 10, h=1 / 32, seed=1)
t = time.perf_counter()
out = run_chain(ds, cfg)
print(IMPLEMENTATION, (time.perf_counter() - t) / cfg.T, repr(float(out.pip[0])))
"""


def _best(fn, number, repeat):
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench_pg(impl, repeat):
    rng = np.random.default_rng(0)
    k = kernels(impl)
    out = {}
    for b in (1.0, 10.0, 7.3):
        bb = np.full(64, b)
        c = np.linspace(-3, 3, 64)
        out[f"pg_draw_vector b={b:g} (64 draws)"] = _best(lambda: k.pg_draw_vector(bb, c, rng), 20, repeat)
    return out


def bench_subset(impl, repeat):
    rng = np.random.default_rng(0)
    k = kernels(impl)
    P, S = 5000, 256
    forced = np.arange(0, 256, 2, dtype=np.int64)
    mask = np.zeros(P, dtype=np.uint8)
    return {f"sample_free_slots P={P} S={S}":
            _best(lambda: k.sample_free_slots(forced, P, S - forced.size, mask, rng), 200, repeat)}


def _neighbour_args(ds, n_active):
    design = Design(ds, 0.01)
    kz = kappa_z(design)
    active = np.arange(n_active, dtype=np.int64)
    idx = design.all_covariates
    on = np.zeros(ds.P, dtype=np.uint8)
    on[active] = 1
    return (design.Xf, design.ones, active, design.prec, kz.z_at(active), idx, kz.z_at(idx),
            kz.col_sq_at(idx), True, kz.yty, kz.quad_offset_terms,
            np.full(design.n_cols, -1, dtype=np.int64), on, np.log(0.1 / 0.9))


def bench_neighbour(impl, repeat):
    k = kernels(impl)
    out = {}
    for N, P, n_active in ((50, 10, 3), (64, 32, 6), (500, 300, 10)):
        args = _neighbour_args(linear_planted(0, N=N, P=P), n_active)
        out[f"neighbour_logliks N={N} P={P} |γ|={n_active}"] = _best(lambda: k.neighbour_logliks(*args), 50, repeat)
    return out


def bench_chain(T):
    rows = {}
    for pure in (False, True):
        env = dict(os.environ)
        if pure:
            env["BVSELECT_PURE_PYTHON"] = "1"
        else:
            env.pop("BVSELECT_PURE_PYTHON", None)
        res = subprocess.run([sys.executable, "-c", CHAIN_SNIPPET.format(T=T)], env=env,
                             capture_output=True, text=True, check=True)
        impl, per_it, pip0 = res.stdout.split()
        rows[impl] = (float(per_it), pip0)
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--chain-iterations", type=int, default=3000)
    args = parser.parse_args(argv)
    try:
        kernels("compiled")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    print(f"{'kernel':48s} {'compiled':>12s} {'python':>12s} {'speed-up':>9s}")
    for bench in (bench_pg, bench_subset, bench_neighbour):
        fast = bench("compiled", args.repeat)
        slow = bench("python", args.repeat)
        for name in fast:
            print(f"{name:48s} {fast[name] * 1e6:10.1f}us {slow[name] * 1e6:10.1f}us {slow[name] / fast[name]:8.1f}x")
    chain = bench_chain(args.chain_iterations)
    c, p = chain["compiled"], chain["python"]
    print(f"{'PG-wTGS iteration, N=P=32':48s} {c[0] * 1e6:10.1f}us {p[0] * 1e6:10.1f}us {p[0] / c[0]:8.1f}x")
    print(f"PIP(x1) compiled {c[1]}  python {p[1]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
