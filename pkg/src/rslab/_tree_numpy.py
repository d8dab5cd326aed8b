"""Vectorized numpy fallback for the tree-recursion kernels.

Shells of a rooted regular tree occupy contiguous index ranges, so each
pass is a loop over shells with batched array arithmetic inside.  The
compiled extension in _tree_core.pyx implements the same contracts; the
two are interchangeable and cross-checked in tests.
"""

import numpy as np


def _shell_k(branching: int, s: int) -> int:
    # the root carries branching+1 children, every other internal vertex branching
    return branching + 1 if s == 0 else branching


def forward_pass(pot, z, offsets, branching, out):
    """Leafward factors: out[v] = 1/(pot[v] - z - sum_children out[c])."""
    depth = len(offsets) - 2
    sl = slice(offsets[depth], offsets[depth + 1])
    out[:, sl] = 1.0 / (pot[:, sl] - z)
    for s in range(depth - 1, -1, -1):
        k = _shell_k(branching, s)
        m = offsets[s + 1] - offsets[s]
        nb = pot.shape[0]
        ch = out[:, offsets[s + 1]:offsets[s + 2]].reshape(nb, m, k).sum(axis=2)
        sl = slice(offsets[s], offsets[s + 1])
        out[:, sl] = 1.0 / (pot[:, sl] - z - ch)
    return out


def upward_pass(gamma, offsets, branching, max_depth, out):
    """Rootward factors: out[v] = 1/(1/gamma[p] - out[p] + gamma[v]), out[root]=0."""
    out[:, 0] = 0.0
    for s in range(1, max_depth + 1):
        k = _shell_k(branching, s - 1)
        psl = slice(offsets[s - 1], offsets[s])
        sl = slice(offsets[s], offsets[s + 1])
        base = np.repeat(1.0 / gamma[:, psl] - out[:, psl], k, axis=1)
        out[:, sl] = 1.0 / (base + gamma[:, sl])
    return out


def products_pass(factors, offsets, branching, max_depth, out):
    """Root-to-vertex products: out[v] = -factors[v] * out[parent], out[root]=1."""
    out[:, 0] = 1.0
    for s in range(1, max_depth + 1):
        k = _shell_k(branching, s - 1)
        psl = slice(offsets[s - 1], offsets[s])
        sl = slice(offsets[s], offsets[s + 1])
        out[:, sl] = -factors[:, sl] * np.repeat(out[:, psl], k, axis=1)
    return out
