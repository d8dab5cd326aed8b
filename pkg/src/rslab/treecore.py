"""Backend dispatch for the tree-recursion kernels.

Prefers the compiled extension, falls back to the vectorized numpy
implementation.  Set RSLAB_FORCE_NUMPY=1 to force the fallback (used by
the benchmark and the cross-backend tests).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

if os.environ.get("RSLAB_FORCE_NUMPY"):
    from . import _tree_numpy as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _tree_core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _tree_numpy as _impl

        BACKEND = "numpy"


@dataclass
class TreePass:
    """Per-replicate recursion output, batched along axis 0.

    gamma: forward (leafward) factors for every vertex.
    up:    upward factors, vertices up to the requested depth cut.
    pref:  products of -gamma along the root-to-vertex path (= G(0,v)/G(0,0)).
    upref: products of -up along the root-to-vertex path (pair closures).
    """

    gamma: np.ndarray
    up: np.ndarray | None
    pref: np.ndarray | None
    upref: np.ndarray | None
    offsets: np.ndarray
    branching: int
    max_depth: int


def tree_green_pass(
    pot_eff: np.ndarray,
    z: complex,
    offsets: np.ndarray,
    branching: int,
    max_depth: int | None = None,
    need_up: bool = True,
    need_paths: bool = True,
    need_up_paths: bool = False,
) -> TreePass:
    """Run the recursion passes for a batch of effective potentials.

    pot_eff has shape (batch, n) and must follow the shell-contiguous
    vertex order of the tree topology.  max_depth truncates the rootward
    and product passes (the forward pass always needs the full tree).
    """
    pot = np.ascontiguousarray(np.atleast_2d(pot_eff), dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    depth = len(offsets) - 2
    if max_depth is None:
        max_depth = depth
    if not 0 <= max_depth <= depth:
        raise ValueError(f"max_depth {max_depth} outside 0..{depth}")
    nb, n = pot.shape
    if n != offsets[-1]:
        raise ValueError("potential length does not match tree size")

    gamma = np.empty((nb, n), dtype=np.complex128)
    _impl.forward_pass(pot, complex(z), offsets, branching, gamma)

    n_cut = int(offsets[max_depth + 1])
    up = pref = upref = None
    if need_up or need_up_paths:
        up = np.empty((nb, n_cut), dtype=np.complex128)
        _impl.upward_pass(gamma, offsets, branching, max_depth, up)
    if need_paths:
        pref = np.empty((nb, n_cut), dtype=np.complex128)
        _impl.products_pass(gamma, offsets, branching, max_depth, pref)
    if need_up_paths:
        upref = np.empty((nb, n_cut), dtype=np.complex128)
        _impl.products_pass(up, offsets, branching, max_depth, upref)
    return TreePass(gamma, up, pref, upref, offsets, branching, max_depth)
