"""Finite graphs the operators live on.

Four families: boxes of Z^d with free boundaries, rooted regular trees
(root gets K+1 children so every non-leaf sees K+1 edges), complete
graphs, and custom undirected edge lists.  Vertices are integers
0..n-1; vertex 0 is the designated origin (tree root, box corner).

Trees are stored implicitly: shells are contiguous index ranges and
parent/child indices follow from arithmetic on the shell offsets, so no
adjacency structure is materialized even for multi-million vertex trees.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

DENSE_LIMIT = 8192          # largest vertex count for dense matrix builds
DISTANCE_MATRIX_LIMIT = 4096  # full all-pairs matrix only below this


def tree_shell_sizes(branching: int, depth: int) -> np.ndarray:
    """Sphere cardinalities 1, K+1, (K+1)K, ..., (K+1)K^(depth-1)."""
    sizes = np.ones(depth + 1, dtype=np.int64)
    if depth >= 1:
        sizes[1] = branching + 1
        for s in range(2, depth + 1):
            sizes[s] = sizes[s - 1] * branching
    return sizes


@dataclass
class GraphTopology:
    kind: str
    n: int
    origin: int = 0
    # tree
    branching: int = 0
    depth: int = 0
    shell_offsets: np.ndarray | None = None  # length depth+2, offsets[s]..offsets[s+1]
    # box
    dims: tuple[int, ...] = ()
    # custom (CSR adjacency)
    adj_indptr: np.ndarray | None = None
    adj_indices: np.ndarray | None = None
    _dist_cache: dict = field(default_factory=dict, repr=False)

    # ---------------------------------------------------------------- basics

    @property
    def vertex_count(self) -> int:
        return self.n

    def degree(self, v: int) -> int:
        return len(self.neighbors(v))

    def neighbors(self, v: int) -> np.ndarray:
        if not 0 <= v < self.n:
            raise ValueError(f"vertex {v} out of range for n={self.n}")
        if self.kind == "tree":
            return self._tree_neighbors(v)
        if self.kind == "box":
            return self._box_neighbors(v)
        if self.kind == "complete":
            return np.concatenate([np.arange(v), np.arange(v + 1, self.n)])
        lo, hi = self.adj_indptr[v], self.adj_indptr[v + 1]
        return self.adj_indices[lo:hi]

    def edges(self) -> Iterator[tuple[int, int]]:
        """Undirected edges, each once, u < v."""
        for v in range(self.n):
            for u in self.neighbors(v):
                if u > v:
                    yield (v, int(u))

    # ----------------------------------------------------------------- trees

    def tree_depth_of(self, v: int) -> int:
        return int(np.searchsorted(self.shell_offsets, v, side="right")) - 1

    def tree_parent(self, v: int) -> int:
        s = self.tree_depth_of(v)
        if s == 0:
            raise ValueError("root has no parent")
        if s == 1:
            return 0
        j = v - self.shell_offsets[s]
        return int(self.shell_offsets[s - 1] + j // self.branching)

    def tree_children(self, v: int) -> np.ndarray:
        s = self.tree_depth_of(v)
        if s == self.depth:
            return np.empty(0, dtype=np.int64)
        if s == 0:
            return np.arange(self.shell_offsets[1], self.shell_offsets[2])
        j = v - self.shell_offsets[s]
        base = self.shell_offsets[s + 1] + j * self.branching
        return np.arange(base, base + self.branching)

    def _tree_neighbors(self, v: int) -> np.ndarray:
        ch = self.tree_children(v)
        if v == 0:
            return ch
        return np.concatenate([[self.tree_parent(v)], ch])

    # ------------------------------------------------------------------ box

    def _box_coords(self, v: int) -> tuple:
        return np.unravel_index(v, self.dims)

    def _box_neighbors(self, v: int) -> np.ndarray:
        coords = np.array(self._box_coords(v))
        out = []
        for axis, size in enumerate(self.dims):
            for step in (-1, 1):
                c = coords.copy()
                c[axis] += step
                if 0 <= c[axis] < size:
                    out.append(int(np.ravel_multi_index(tuple(c), self.dims)))
        return np.array(sorted(out), dtype=np.int64)

    # ------------------------------------------------------------ distances

    def distances_from(self, v: int) -> np.ndarray:
        """Graph distances from v to every vertex (int32)."""
        if v in self._dist_cache:
            return self._dist_cache[v]
        if self.kind == "tree" and v == 0:
            d = np.repeat(
                np.arange(self.depth + 1, dtype=np.int32),
                np.diff(self.shell_offsets),
            )
        elif self.kind == "box":
            # free-boundary grid: graph distance is the L1 distance
            grids = np.unravel_index(np.arange(self.n), self.dims)
            src = self._box_coords(v)
            d = sum(np.abs(g - s) for g, s in zip(grids, src)).astype(np.int32)
        elif self.kind == "complete":
            d = np.ones(self.n, dtype=np.int32)
            d[v] = 0
        else:
            d = self._bfs(v)
        if len(self._dist_cache) < 8 or self.n <= DISTANCE_MATRIX_LIMIT:
            self._dist_cache[v] = d
        return d

    def _bfs(self, v: int) -> np.ndarray:
        d = np.full(self.n, -1, dtype=np.int32)
        d[v] = 0
        q = deque([v])
        while q:
            u = q.popleft()
            for w in self.neighbors(u):
                if d[w] < 0:
                    d[w] = d[u] + 1
                    q.append(int(w))
        if (d < 0).any():
            raise ValueError("graph is not connected")
        return d

    def sphere(self, center: int, radius: int) -> np.ndarray:
        """Vertices at graph distance exactly radius; empty beyond diameter."""
        if radius < 0:
            raise ValueError("radius must be >= 0")
        if self.kind == "tree" and center == 0:
            if radius > self.depth:
                return np.empty(0, dtype=np.int64)
            return np.arange(self.shell_offsets[radius], self.shell_offsets[radius + 1])
        d = self.distances_from(center)
        return np.nonzero(d == radius)[0].astype(np.int64)

    def sphere_size(self, center: int, radius: int) -> int:
        if self.kind == "tree" and center == 0:
            if radius > self.depth:
                return 0
            return int(self.shell_offsets[radius + 1] - self.shell_offsets[radius])
        return len(self.sphere(center, radius))

    # ---------------------------------------------------------------- dense

    def adjacency_dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise ValueError(
                f"dense adjacency refused for n={self.n} > {DENSE_LIMIT}"
            )
        a = np.zeros((self.n, self.n))
        for u, v in self.edges():
            a[u, v] = 1.0
            a[v, u] = 1.0
        return a

    def opnorm_bound(self) -> float:
        """Cheap deterministic upper bound on ||A||: the maximum degree."""
        if self.kind == "tree":
            return float(self.branching + 1) if self.depth >= 1 else 0.0
        if self.kind == "box":
            return float(2 * sum(s > 1 for s in self.dims))
        if self.kind == "complete":
            return float(self.n - 1)
        return float(np.diff(self.adj_indptr).max())


def log_sphere_count(g: GraphTopology, radius: int, center: int | None = None) -> float:
    """Natural log of the sphere cardinality (growth scale for moment fits)."""
    size = g.sphere_size(g.origin if center is None else center, radius)
    if size == 0:
        raise ValueError(f"empty sphere at radius {radius}")
    return float(np.log(size))


# -------------------------------------------------------------- constructors


def build_tree(branching: int, depth: int) -> GraphTopology:
    if branching < 1:
        raise ValueError(f"tree branching must be >= 1, got {branching}")
    if depth < 0:
        raise ValueError(f"tree depth must be >= 0, got {depth}")
    sizes = tree_shell_sizes(branching, depth)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return GraphTopology(
        kind="tree",
        n=int(offsets[-1]),
        branching=branching,
        depth=depth,
        shell_offsets=offsets,
    )


def build_box(dims) -> GraphTopology:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValueError(f"box dims must be positive, got {dims}")
    return GraphTopology(kind="box", n=int(np.prod(dims)), dims=dims)


def build_complete(n: int) -> GraphTopology:
    if n < 1:
        raise ValueError(f"complete graph needs n >= 1, got {n}")
    return GraphTopology(kind="complete", n=n)


def build_custom(edges) -> GraphTopology:
    edges = [(int(u), int(v)) for u, v in edges]
    if not edges:
        raise ValueError("custom graph needs at least one edge")
    for u, v in edges:
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        if u < 0 or v < 0:
            raise ValueError("negative vertex id")
    n = max(max(u, v) for u, v in edges) + 1
    pairs = set()
    for u, v in edges:
        pairs.add((min(u, v), max(u, v)))
    deg = np.zeros(n, dtype=np.int64)
    for u, v in pairs:
        deg[u] += 1
        deg[v] += 1
    indptr = np.concatenate([[0], np.cumsum(deg)])
    indices = np.zeros(indptr[-1], dtype=np.int64)
    fill = indptr[:-1].copy()
    for u, v in pairs:
        indices[fill[u]] = v
        fill[u] += 1
        indices[fill[v]] = u
        fill[v] += 1
    for v in range(n):
        indices[indptr[v]:indptr[v + 1]] = np.sort(indices[indptr[v]:indptr[v + 1]])
    g = GraphTopology(kind="custom", n=n, adj_indptr=indptr, adj_indices=indices)
    g.distances_from(0)  # connectivity check up front
    return g


def build_graph(kind: str, **params) -> GraphTopology:
    """Single entry point used by config loading."""
    if kind == "tree":
        return build_tree(params["branching"], params["depth"])
    if kind == "box":
        return build_box(params["dims"])
    if kind == "complete":
        return build_complete(params["n"])
    if kind == "custom":
        return build_custom(params["edges"])
    raise ValueError(f"unknown topology kind {kind!r}")
