"""Green functions and Schur data at complex energies E + i*eta, eta > 0.

Dense graphs go through LU solves; rooted trees have an O(n) fast path
built from two recursion passes (forward and upward factors).  The 2x2
Schur extraction is the definition of record for pair data; the tree
route is reconciled against it in tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import treecore
from .randop import OperatorModel, PotentialSample, dense_hamiltonian
from .topology import DENSE_LIMIT

IDENTITY_TOL = 1e-10


class SolverIntegrityError(RuntimeError):
    """An exact identity or residual bound failed beyond tolerance."""


@dataclass(frozen=True)
class ComplexEnergy:
    energy: float
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def z(self) -> complex:
        return complex(self.energy, self.eta)


@dataclass(frozen=True)
class EtaLadder:
    """Geometric eta ladder eta0 * factor**-k, k = 0..rungs-1."""

    eta0: float = 1e-1
    rungs: int = 14
    factor: float = 2.0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError("ladder.eta0 must be positive")
        if self.rungs < 1:
            raise ValueError("ladder.rungs must be >= 1")
        if not self.factor > 1:
            raise ValueError("ladder.factor must exceed 1")

    def values(self) -> np.ndarray:
        return self.eta0 * self.factor ** -np.arange(self.rungs, dtype=float)

    @property
    def eta_min(self) -> float:
        return float(self.eta0 * self.factor ** -(self.rungs - 1))


@dataclass
class GreenColumn:
    x: int
    z: complex
    values: np.ndarray   # G(x, y) for all y
    residual: float

    @property
    def gxx(self) -> complex:
        return complex(self.values[self.x])


@dataclass
class SchurData:
    """Two-site reduction: the inverse of the (x,y) Green block is
    [[lam*V(x) - sigma_x, -tau_xy], [-tau_yx, lam*V(y) - sigma_y]]."""

    x: int
    y: int
    z: complex
    sigma_x: complex
    sigma_y: complex
    tau_xy: complex
    tau_yx: complex
    big_sigma_x: complex  # full one-site self-energy at x


# ----------------------------------------------------------------- dense path


def green_column(
    model: OperatorModel, sample: PotentialSample, x: int, z: complex, check: bool = True
) -> GreenColumn:
    """One resolvent column (H - z)^{-1} delta_x by dense LU."""
    n = model.topology.n
    if not 0 <= x < n:
        raise ValueError(f"vertex {x} out of range")
    z = complex(z)
    if not z.imag > 0:
        raise ValueError("green_column needs Im z > 0")
    m = dense_hamiltonian(model, sample).astype(np.complex128)
    m[np.diag_indices(n)] -= z
    e = np.zeros(n, dtype=np.complex128)
    e[x] = 1.0
    g = sla.solve(m, e)
    r = float(np.linalg.norm(m @ g - e))
    if check and r > IDENTITY_TOL * np.linalg.norm(g):
        raise SolverIntegrityError(
            f"green_column residual {r:.3e} exceeds {IDENTITY_TOL:.0e} * ||g||"
        )
    return GreenColumn(x=x, z=z, values=g, residual=r)


def green_matrix(model: OperatorModel, sample: PotentialSample, z: complex) -> np.ndarray:
    """Full resolvent matrix; desk-scale sizes only."""
    n = model.topology.n
    if n > DENSE_LIMIT // 4:
        raise ValueError(f"full resolvent refused for n={n}")
    m = dense_hamiltonian(model, sample).astype(np.complex128)
    m[np.diag_indices(n)] -= complex(z)
    return sla.solve(m, np.eye(n, dtype=np.complex128))


def _restricted_hops(model, sample, keep_out, z):
    """Schur closure z + a^T (H_B - z)^{-1} a for the sites in keep_out."""
    n = model.topology.n
    mask = np.ones(n, dtype=bool)
    mask[list(keep_out)] = False
    h = dense_hamiltonian(model, sample).astype(np.complex128)
    hb = h[np.ix_(mask, mask)].copy()
    hb[np.diag_indices(mask.sum())] -= complex(z)
    cols = h[np.ix_(mask, list(keep_out))]
    sol = sla.solve(hb, cols)
    return cols.T @ sol  # (k,k) matrix of hop closures


def self_energy(
    model: OperatorModel, sample: PotentialSample, x: int, z: complex, check: bool = True
) -> complex:
    """Sigma(x; z) with G(x,x) = 1/(lam*V(x) - Sigma); independent of V(x)."""
    z = complex(z)
    col = green_column(model, sample, x, z, check=False)
    pot_x = model.lam * sample.values[x]
    sigma = pot_x - 1.0 / col.gxx
    if check:
        closure = _restricted_hops(model, sample, [x], z)[0, 0]
        ref = z + closure
        if abs(sigma - ref) > IDENTITY_TOL * max(1.0, abs(sigma)):
            raise SolverIntegrityError(
                f"self-energy mismatch {abs(sigma - ref):.3e} at x={x}"
            )
    return complex(sigma)


def two_site_schur(
    model: OperatorModel,
    sample: PotentialSample,
    x: int,
    y: int,
    z: complex,
    check: bool = True,
) -> SchurData:
    """Invert the 2x2 Green block at (x, y); cross-checked by elimination."""
    if x == y:
        raise ValueError("two_site_schur needs distinct vertices")
    z = complex(z)
    n = model.topology.n
    m = dense_hamiltonian(model, sample).astype(np.complex128)
    m[np.diag_indices(n)] -= z
    rhs = np.zeros((n, 2), dtype=np.complex128)
    rhs[x, 0] = 1.0
    rhs[y, 1] = 1.0
    cols = sla.solve(m, rhs)
    block = np.array(
        [[cols[x, 0], cols[y, 0]], [cols[x, 1], cols[y, 1]]]
    )
    s = np.linalg.inv(block)
    pot = model.lam * sample.values
    data = SchurData(
        x=x,
        y=y,
        z=z,
        sigma_x=complex(pot[x] - s[0, 0]),
        sigma_y=complex(pot[y] - s[1, 1]),
        tau_xy=complex(-s[0, 1]),
        tau_yx=complex(-s[1, 0]),
        big_sigma_x=complex(pot[x] - 1.0 / cols[x, 0]),
    )
    if check:
        _check_schur(model, sample, data)
    return data


def _check_schur(model, sample, data: SchurData):
    pot = model.lam * sample.values
    x, y, z = data.x, data.y, data.z
    hops = _restricted_hops(model, sample, [x, y], z)
    h = dense_hamiltonian(model, sample)
    direct = np.array(
        [
            [pot[x] - z - hops[0, 0], h[x, y] - hops[0, 1]],
            [h[y, x] - hops[1, 0], pot[y] - z - hops[1, 1]],
        ]
    )
    built = np.array(
        [
            [pot[x] - data.sigma_x, -data.tau_xy],
            [-data.tau_yx, pot[y] - data.sigma_y],
        ]
    )
    scale = max(1.0, float(np.abs(direct).max()))
    if np.abs(built - direct).max() > IDENTITY_TOL * scale:
        raise SolverIntegrityError(
            f"two-site Schur mismatch {np.abs(built - direct).max():.3e}"
        )
    if y == model.topology.origin:
        # one-site self-energy must close through the pair data
        lhs = data.big_sigma_x
        rhs = data.sigma_x + data.tau_xy * data.tau_yx / (pot[y] - data.sigma_y)
        if abs(lhs - rhs) > IDENTITY_TOL * max(1.0, abs(lhs)):
            raise SolverIntegrityError(
                f"self-energy closure mismatch {abs(lhs - rhs):.3e}"
            )


def green_ratio(
    model: OperatorModel, sample: PotentialSample, x: int, z: complex, check: bool = True
) -> complex:
    """g(x; z) = G(0, x)/G(0, 0) from one column solve at the origin."""
    o = model.topology.origin
    if x == o:
        return 1.0 + 0.0j
    col = green_column(model, sample, o, z, check=False)
    g = complex(col.values[x] / col.values[o])
    if check:
        data = two_site_schur(model, sample, x, o, z, check=False)
        pot_x = model.lam * sample.values[x]
        alt = data.tau_yx / (pot_x - data.sigma_x)
        if abs(g - alt) > IDENTITY_TOL * max(1.0, abs(g)):
            raise SolverIntegrityError(f"g-ratio route mismatch {abs(g - alt):.3e}")
    return g


# ------------------------------------------------------------- tree fast path


@dataclass
class TreeSphereData:
    """Pair data (origin, x) for every x on one sphere, batched over replicates.

    Arrays have shape (batch, sphere_size) unless noted; g00 is (batch,).
    """

    radius: int
    z: complex
    g00: np.ndarray
    gxx: np.ndarray
    g0x: np.ndarray
    tau_0x: np.ndarray        # = tau_x0 by symmetry of H
    sigma_x: np.ndarray       # pair sigma at x
    sigma_0: np.ndarray       # pair sigma at the origin (depends on x)
    big_sigma_x: np.ndarray   # one-site self-energy at x
    gratio: np.ndarray        # G(0,x)/G(0,0)
    pot_x: np.ndarray
    pot_0: np.ndarray


def tree_sphere_data(
    model: OperatorModel,
    pot_eff: np.ndarray,
    z: complex,
    radius: int,
) -> TreeSphereData:
    """All (origin, x) Schur data on the radius-sphere of a rooted tree."""
    g = model.topology
    if g.kind != "tree":
        raise ValueError("tree_sphere_data needs a tree topology")
    if not 1 <= radius <= g.depth:
        raise ValueError(f"radius {radius} outside 1..{g.depth}")
    pot_eff = np.atleast_2d(pot_eff)
    tp = treecore.tree_green_pass(
        pot_eff, z, g.shell_offsets, g.branching, max_depth=radius
    )
    sl = slice(int(g.shell_offsets[radius]), int(g.shell_offsets[radius + 1]))
    g00 = tp.gamma[:, 0]
    gxx = 1.0 / (1.0 / tp.gamma[:, sl] - tp.up[:, sl])
    pref = tp.pref[:, sl]
    g0x = g00[:, None] * pref
    det = g00[:, None] * gxx - g0x * g0x
    pot_x = pot_eff[:, sl]
    pot_0 = pot_eff[:, 0]
    return TreeSphereData(
        radius=radius,
        z=complex(z),
        g00=g00,
        gxx=gxx,
        g0x=g0x,
        tau_0x=g0x / det,
        sigma_x=pot_x - g00[:, None] / det,
        sigma_0=pot_0[:, None] - gxx / det,
        big_sigma_x=pot_x - 1.0 / gxx,
        gratio=pref,
        pot_x=pot_x,
        pot_0=pot_0,
    )


def tree_ratio_profile(
    model: OperatorModel,
    pot_eff: np.ndarray,
    z: complex,
    max_distance: int,
) -> list[np.ndarray]:
    """Green ratios G(0,x)/G(0,0) per shell for d = 1..max_distance.

    Each entry has shape (batch, shell_size).  The ratio is the running
    product of forward factors along the root-to-x path, so one forward
    pass serves every distance and no upward sweep is needed.
    """
    g = model.topology
    if g.kind != "tree":
        raise ValueError("tree_ratio_profile needs a tree topology")
    if not 1 <= max_distance <= g.depth:
        raise ValueError(f"max_distance {max_distance} outside 1..{g.depth}")
    pot_eff = np.atleast_2d(pot_eff)
    tp = treecore.tree_green_pass(
        pot_eff, z, g.shell_offsets, g.branching,
        max_depth=max_distance, need_up=False,
    )
    out = []
    for d in range(1, max_distance + 1):
        sl = slice(int(g.shell_offsets[d]), int(g.shell_offsets[d + 1]))
        out.append(tp.pref[:, sl])
    return out


def tree_tau_profile(
    model: OperatorModel,
    pot_eff: np.ndarray,
    z: complex,
    max_distance: int,
) -> list[np.ndarray]:
    """|tau(0, x)| is read per shell; returns [tau arrays for d = 1..max_distance].

    Each entry has shape (batch, shell_size).  One recursion pass serves
    every distance, so the profile costs the same as a single sphere.
    """
    g = model.topology
    if g.kind != "tree":
        raise ValueError("tree_tau_profile needs a tree topology")
    if not 1 <= max_distance <= g.depth:
        raise ValueError(f"max_distance {max_distance} outside 1..{g.depth}")
    pot_eff = np.atleast_2d(pot_eff)
    tp = treecore.tree_green_pass(
        pot_eff, z, g.shell_offsets, g.branching, max_depth=max_distance
    )
    g00 = tp.gamma[:, 0][:, None]
    out = []
    for d in range(1, max_distance + 1):
        sl = slice(int(g.shell_offsets[d]), int(g.shell_offsets[d + 1]))
        gxx = 1.0 / (1.0 / tp.gamma[:, sl] - tp.up[:, sl])
        g0x = g00 * tp.pref[:, sl]
        det = g00 * gxx - g0x * g0x
        out.append(g0x / det)
    return out


def tree_pair_green(tp: treecore.TreePass, topo, ix: np.ndarray, iy: np.ndarray):
    """G(x,x), G(y,y), G(x,y) for vertex index arrays on a rooted tree.

    Uses G(x,y) = G(x,x) * (upward products x -> lca) * (forward products
    lca -> y); requires the pass to carry up, pref and upref to the depth
    of the deepest requested vertex.
    """
    ix = np.asarray(ix, dtype=np.int64)
    iy = np.asarray(iy, dtype=np.int64)
    la = tree_lca(topo, ix, iy)
    gxx = 1.0 / (1.0 / tp.gamma[:, ix] - tp.up[:, ix])
    gyy = 1.0 / (1.0 / tp.gamma[:, iy] - tp.up[:, iy])
    gxy = gxx * (tp.upref[:, ix] / tp.upref[:, la]) * (tp.pref[:, iy] / tp.pref[:, la])
    return gxx, gyy, gxy


def schur_from_block(gxx, gyy, gxy):
    """tau and sigma-differences from 2x2 Green blocks (vectorized)."""
    det = gxx * gyy - gxy * gxy
    tau = gxy / det
    inv_xx = gyy / det  # = lam V(x) - sigma_x
    inv_yy = gxx / det
    return tau, inv_xx, inv_yy


def tree_lca(topo, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    """Vectorized lowest common ancestor on the rooted tree."""
    a = np.array(ix, dtype=np.int64, copy=True)
    b = np.array(iy, dtype=np.int64, copy=True)
    da = np.searchsorted(topo.shell_offsets, a, side="right") - 1
    db = np.searchsorted(topo.shell_offsets, b, side="right") - 1
    off = topo.shell_offsets
    k = topo.branching
    def up(v, d):
        p = np.where(d <= 1, 0, off[np.maximum(d - 1, 0)] + (v - off[d]) // k)
        return p.astype(np.int64)
    while (da > db).any():
        m = da > db
        a[m] = up(a, da)[m]
        da[m] -= 1
    while (db > da).any():
        m = db > da
        b[m] = up(b, db)[m]
        db[m] -= 1
    while (a != b).any():
        m = a != b
        a[m] = up(a, da)[m]
        b[m] = up(b, db)[m]
        da[m] -= 1
        db[m] -= 1
    return a
