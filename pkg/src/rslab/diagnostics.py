"""Divergence diagnostics: gamma/kappa ladders, eta-scaling verdicts,
density of states, and per-energy classification fractions.

gamma_x(E; eta) = sum_y |G(x,y;E+i eta)|^2 probes l2 blowup of the
resolvent as eta drops; kappa is the same probe through -Im(1/G)/eta.
Verdicts fit the tail of the ladder instead of asserting limits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from . import treecore
from .randop import OperatorModel, dense_hamiltonian, sample_potential, wegner_density_bound
from .resolvent import EtaLadder, SolverIntegrityError, green_column

ROUTE_TOL = 1e-8
IRRATIONAL_OFFSET = 1e-4 * np.sqrt(2.0)

DEFAULT_LADDER = EtaLadder()
DOS_ETA = 1e-3
FIT_RUNGS = 6
PLATEAU_RUNGS = 4
P_MIN = 0.5
R2_MIN = 0.99
PLATEAU_REL = 0.01
AC_SPACING_FACTOR = 10.0


def energy_grid(lo: float, hi: float, count: int) -> np.ndarray:
    """Scan grid shifted off rational resonances with spec(A)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return np.linspace(lo, hi, count) + IRRATIONAL_OFFSET


@dataclass
class GammaTrace:
    x: int
    energy: float
    etas: np.ndarray
    gamma: np.ndarray      # route 1: direct sum of |G(x,y)|^2
    gamma_im: np.ndarray   # route 2: Im G(x,x)/eta
    im_g: np.ndarray


@dataclass
class KappaTrace:
    x: int
    energy: float
    etas: np.ndarray
    kappa: np.ndarray
    gamma: np.ndarray
    im_g: np.ndarray


@dataclass
class DivergenceVerdict:
    verdict: str            # diverging | finite | inconclusive
    exponent: float
    r2: float
    plateau: float


@dataclass
class EnergyClassification:
    energy: float
    replicates: int
    frac_diverging: float
    frac_finite: float
    frac_inconclusive: float
    frac_ac: float


@dataclass
class DosEstimate:
    energies: np.ndarray
    eta: float
    replicates: int
    n_hat: np.ndarray
    stderr: np.ndarray
    wegner_bound: float


def gamma_trace(model, sample, x, energy, ladder=DEFAULT_LADDER, check=True) -> GammaTrace:
    """Both gamma routes down the eta ladder; montone in eta by construction."""
    etas = ladder.values()
    gamma = np.empty(len(etas))
    gamma_im = np.empty(len(etas))
    im_g = np.empty(len(etas))
    for k, eta in enumerate(etas):
        col = green_column(model, sample, x, complex(energy, eta), check=check)
        gamma[k] = float(np.sum(np.abs(col.values) ** 2))
        im_g[k] = float(col.gxx.imag)
        gamma_im[k] = im_g[k] / eta
        if check:
            rel = abs(gamma[k] - gamma_im[k]) / max(gamma[k], 1e-300)
            if rel > ROUTE_TOL:
                raise SolverIntegrityError(
                    f"gamma route mismatch {rel:.3e} at eta={eta:.3e}"
                )
    if check and np.any(np.diff(gamma) < -1e-9 * gamma[:-1]):
        raise SolverIntegrityError("gamma not monotone along the eta ladder")
    return GammaTrace(x=x, energy=energy, etas=etas, gamma=gamma, gamma_im=gamma_im, im_g=im_g)


def kappa_trace(model, sample, x, energy, ladder=DEFAULT_LADDER, check=True) -> KappaTrace:
    """kappa_eta = -Im(1/G(x,x))/eta; tied to gamma by kappa*|G|^2 = gamma."""
    etas = ladder.values()
    kappa = np.empty(len(etas))
    gamma = np.empty(len(etas))
    im_g = np.empty(len(etas))
    for k, eta in enumerate(etas):
        col = green_column(model, sample, x, complex(energy, eta), check=check)
        gxx = col.gxx
        kappa[k] = float(-(1.0 / gxx).imag / eta)
        gamma[k] = float(np.sum(np.abs(col.values) ** 2))
        im_g[k] = float(gxx.imag)
        if check:
            rel = abs(kappa[k] * abs(gxx) ** 2 - gamma[k]) / max(gamma[k], 1e-300)
            if rel > ROUTE_TOL:
                raise SolverIntegrityError(
                    f"kappa-gamma identity violated, rel={rel:.3e} at eta={eta:.3e}"
                )
    return KappaTrace(x=x, energy=energy, etas=etas, kappa=kappa, gamma=gamma, im_g=im_g)


def _linfit(x, y):
    """Least-squares slope, intercept, and R^2."""
    a = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def divergence_verdict(
    etas,
    values,
    fit_rungs=FIT_RUNGS,
    plateau_rungs=PLATEAU_RUNGS,
    p_min=P_MIN,
    r2_min=R2_MIN,
    plateau_rel=PLATEAU_REL,
) -> DivergenceVerdict:
    """Classify an eta ladder trace as diverging/finite/inconclusive."""
    etas = np.asarray(etas, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(etas) < max(fit_rungs, plateau_rungs):
        raise ValueError("ladder too short for the verdict windows")
    tail_v = values[-fit_rungs:]
    tail_e = etas[-fit_rungs:]
    p, _, r2 = _linfit(np.log(1.0 / tail_e), np.log(np.maximum(tail_v, 1e-300)))
    plat_v = values[-plateau_rungs:]
    lo, hi = float(plat_v.min()), float(plat_v.max())
    rel_change = (hi - lo) / max(hi, 1e-300)
    plateau = float(plat_v.mean())
    if p >= p_min and r2 >= r2_min:
        return DivergenceVerdict("diverging", p, r2, float("nan"))
    if rel_change < plateau_rel:
        return DivergenceVerdict("finite", p, r2, plateau)
    return DivergenceVerdict("inconclusive", p, r2, plateau)


def _spectral_weights(model, sample, x):
    """Eigenvalues and |phi_k(x)|^2 of one dense realization."""
    h = dense_hamiltonian(model, sample)
    evals, evecs = sla.eigh(h)
    return evals, np.abs(evecs[x, :]) ** 2


def gamma_ladder_batch(model, energy, ladder, replicates, x=None, chunk=256):
    """Per-replicate gamma ladders, (replicates, rungs).

    Trees use the recursion with gamma = Im G(x,x)/eta at the root; other
    graphs go through one eigendecomposition per replicate.  Also returns
    G(x,x) at each rung, (replicates, rungs) complex.
    """
    g = model.topology
    x = g.origin if x is None else x
    etas = ladder.values()
    out = np.empty((replicates, len(etas)))
    gxx_out = np.empty((replicates, len(etas)), dtype=np.complex128)
    if g.kind == "tree" and x == g.origin:
        for lo in range(0, replicates, chunk):
            hi = min(lo + chunk, replicates)
            pot = np.stack(
                [sample_potential(model, r).values for r in range(lo, hi)]
            ) * model.lam
            for k, eta in enumerate(etas):
                tp = treecore.tree_green_pass(
                    pot, complex(energy, eta), g.shell_offsets, g.branching,
                    max_depth=0, need_up=False, need_paths=False,
                )
                gxx_out[lo:hi, k] = tp.gamma[:, 0]
                out[lo:hi, k] = tp.gamma[:, 0].imag / eta
    else:
        for r in range(replicates):
            evals, w = _spectral_weights(model, sample_potential(model, r), x)
            for k, eta in enumerate(etas):
                denom = evals - energy - 1j * eta
                gxx_out[r, k] = complex(np.sum(w / denom))
                out[r, k] = float(np.sum(w / ((evals - energy) ** 2 + eta**2)))
    return etas, out, gxx_out


def classify_energy(
    model,
    energy,
    replicates,
    ladder=DEFAULT_LADDER,
    verdict_kwargs=None,
) -> EnergyClassification:
    """Fractions of replicates with each divergence verdict, plus frac_ac.

    frac_ac counts replicates whose Im G(x,x) at the two smallest rungs
    stays above 10x the mean level spacing proxy |A|/N, filtering point
    masses that eta-broadening alone would inflate.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    kw = verdict_kwargs or {}
    etas, gam, gxx = gamma_ladder_batch(model, energy, ladder, replicates)
    counts = {"diverging": 0, "finite": 0, "inconclusive": 0}
    for r in range(replicates):
        counts[divergence_verdict(etas, gam[r], **kw).verdict] += 1
    threshold = AC_SPACING_FACTOR * model.topology.opnorm_bound() / model.topology.n
    ac = int(np.sum(np.min(gxx[:, -2:].imag, axis=1) > threshold))
    return EnergyClassification(
        energy=float(energy),
        replicates=replicates,
        frac_diverging=counts["diverging"] / replicates,
        frac_finite=counts["finite"] / replicates,
        frac_inconclusive=counts["inconclusive"] / replicates,
        frac_ac=ac / replicates,
    )


def dos_partial(model, energies, eta, r_lo, r_hi):
    """Sums and squared sums of per-replicate n_hat samples over [r_lo, r_hi).

    The building block for dos(): partials over fixed replicate chunks can
    be computed concurrently and reduced in chunk order, giving results
    independent of the worker layout.
    """
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    g = model.topology
    acc = np.zeros(len(energies))
    acc2 = np.zeros(len(energies))
    if g.kind == "tree":
        pot = np.stack(
            [sample_potential(model, r).values for r in range(r_lo, r_hi)]
        ) * model.lam
        for j, e in enumerate(energies):
            tp = treecore.tree_green_pass(
                pot, complex(e, eta), g.shell_offsets, g.branching,
                max_depth=0, need_up=False, need_paths=False,
            )
            vals = tp.gamma[:, 0].imag / np.pi
            acc[j] = float(vals.sum())
            acc2[j] = float((vals**2).sum())
    else:
        for r in range(r_lo, r_hi):
            evals, w = _spectral_weights(model, sample_potential(model, r), g.origin)
            vals = (w[None, :] * eta / ((energies[:, None] - evals[None, :]) ** 2 + eta**2)).sum(axis=1) / np.pi
            acc += vals
            acc2 += vals**2
    return acc, acc2


def dos(model, energies, eta=DOS_ETA, replicates=100, chunk=256) -> DosEstimate:
    """n_hat(E) = mean Im G(0,0;E+i eta)/pi over disorder replicates."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if not model.dist.has_density:
        raise ValueError("density of states needs an absolutely continuous distribution")
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    acc = np.zeros(len(energies))
    acc2 = np.zeros(len(energies))
    for lo in range(0, replicates, chunk):
        p1, p2 = dos_partial(model, energies, eta, lo, min(lo + chunk, replicates))
        acc += p1
        acc2 += p2
    n_hat = acc / replicates
    var = np.maximum(acc2 / replicates - n_hat**2, 0.0)
    stderr = np.sqrt(var / replicates)
    return DosEstimate(
        energies=energies,
        eta=eta,
        replicates=replicates,
        n_hat=n_hat,
        stderr=stderr,
        wegner_bound=wegner_density_bound(model),
    )


def sum_rule_check(model, pot_eff, z, rel_tol=ROUTE_TOL):
    """Tree-route integrity: sum_y |G(0,y)|^2 must equal Im G(0,0)/eta.

    Runs the recursion over the full depth and compares both sides on the
    given batch of effective potentials; raises on mismatch.
    """
    g = model.topology
    if g.kind != "tree":
        raise ValueError("sum_rule_check covers the tree fast path")
    pot_eff = np.atleast_2d(pot_eff)
    tp = treecore.tree_green_pass(
        pot_eff, z, g.shell_offsets, g.branching, need_up=False, need_paths=True
    )
    g00 = tp.gamma[:, 0]
    total = (np.abs(g00[:, None] * tp.pref) ** 2).sum(axis=1)
    ref = g00.imag / complex(z).imag
    rel = np.abs(total - ref) / np.maximum(np.abs(ref), 1e-300)
    worst = float(rel.max())
    if worst > rel_tol:
        raise SolverIntegrityError(f"sum rule violated on tree pass, rel={worst:.3e}")
    return worst
