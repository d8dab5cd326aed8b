"""Timing comparison of the tree-recursion backends.

Runs the full pass (forward + upward + path products) on batches of
random effective potentials with both the compiled kernel and the numpy
fallback, and reports wall time per pass plus the speedup.

Usage: python benchmarks/bench_tree_kernel.py [--depth D] [--batch B] [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np


def _load_backends():
    from rslab import _tree_numpy

    try:
        from rslab import _tree_core
    except ImportError:
        _tree_core = None
    return _tree_core, _tree_numpy


def run_pass(impl, pot, z, offsets, branching, max_depth):
    nb, n = pot.shape
    n_cut = int(offsets[max_depth + 1])
    gamma = np.empty((nb, n), dtype=np.complex128)
    impl.forward_pass(pot, complex(z), offsets, branching, gamma)
    up = np.empty((nb, n_cut), dtype=np.complex128)
    impl.upward_pass(gamma, offsets, branching, max_depth, up)
    pref = np.empty((nb, n_cut), dtype=np.complex128)
    impl.products_pass(gamma, offsets, branching, max_depth, pref)
    return gamma, up, pref


def bench(impl, pot, z, offsets, branching, max_depth, repeat):
    run_pass(impl, pot, z, offsets, branching, max_depth)  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        run_pass(impl, pot, z, offsets, branching, max_depth)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--branching", type=int, default=2)
    ap.add_argument("--depth", type=int, default=14)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    from rslab.topology import build_tree

    g = build_tree(args.branching, args.depth)
    rng = np.random.default_rng(0)
    pot = rng.uniform(-1.0, 1.0, size=(args.batch, g.n))
    z = 0.1 + 1e-6j
    max_depth = args.depth

    compiled, fallback = _load_backends()
    print(
        f"tree K={args.branching} depth={args.depth} "
        f"({g.n} vertices), batch={args.batch}, best of {args.repeat}"
    )
    t_np = bench(fallback, pot, z, g.shell_offsets, args.branching, max_depth, args.repeat)
    print(f"numpy fallback : {t_np * 1e3:9.2f} ms/pass")
    if compiled is None:
        print("compiled kernel: not built (pip install -e . to build it)")
        return
    t_cy = bench(compiled, pot, z, g.shell_offsets, args.branching, max_depth, args.repeat)
    print(f"compiled kernel: {t_cy * 1e3:9.2f} ms/pass")
    print(f"speedup        : {t_np / t_cy:9.2f}x")

    a = run_pass(compiled, pot, z, g.shell_offsets, args.branching, max_depth)
    b = run_pass(fallback, pot, z, g.shell_offsets, args.branching, max_depth)
    worst = max(
        float(np.max(np.abs(x - y) / np.maximum(np.abs(y), 1e-300)))
        for x, y in zip(a, b)
    )
    print(f"max rel diff   : {worst:9.2e}")


if __name__ == "__main__":
    main()
