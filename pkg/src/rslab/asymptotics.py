"""Tree decay rates: the typical-decay exponent L0, the truncated-mean
exponent L1, the fractional-moment free energy phi(s), and phase verdicts
combining the delocalization test L0 < log K with a geometric-decay
localization test on fractional-moment partial sums.

All tau statistics run on the tree recursion at a small fixed eta with the
outer two shells excluded (boundary shells bias slopes).  tau here is the
Green ratio G(0,x)/G(0,0), the running product of forward factors along
the root-to-x path.

Slope fits use only even distances inside the window.  The tree is
bipartite, so the two distance-parity classes carry different boundary
corrections; at the band centre of the clean tree the forward recursion
is 2-periodic and odd shells survive on eta alone (with a depth-dependent
prefactor), so a mixed-parity fit has no usable linear signal there,
while even path products telescope cleanly at every energy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .randop import TAG_GENERIC, OperatorModel, sample_potential, stream
from .resolvent import tree_ratio_profile
from .topology import log_sphere_count

TAU_ETA = 1e-6
R2_FLAG = 0.98
BOUNDARY_SHELLS = 2
MIN_WINDOW = 4
MIN_FIT_POINTS = 3


@dataclass
class LyapunovEstimate:
    energy: float
    lam: float
    l0: float
    l0_stderr: float
    l1: float
    l1_stderr: float
    r2_l0: float
    r2_l1: float
    d_window: tuple
    replicates: int
    flagged: bool


@dataclass
class FreeEnergyCurve:
    energy: float
    lam: float
    s_grid: np.ndarray
    phi: np.ndarray
    phi_stderr: np.ndarray
    r2: np.ndarray
    d_window: tuple
    flagged: bool


@dataclass
class PhaseVerdict:
    energy: float
    lam: float
    verdict: str        # delocalization-test-passed | localization-test-passed | inconclusive
    l0: float
    l0_stderr: float
    l1: float
    l1_stderr: float
    s: float
    sum_trace_tail: float
    log_k: float


def _check_window(model, d_window):
    g = model.topology
    if g.kind != "tree":
        raise ValueError("decay-rate estimation needs a tree topology")
    d_min, d_max = int(d_window[0]), int(d_window[1])
    if d_max > g.depth - BOUNDARY_SHELLS:
        raise ValueError(
            f"window end {d_max} intrudes on the outer {BOUNDARY_SHELLS} shells (depth {g.depth})"
        )
    if d_min < 1 or d_max - d_min + 1 < MIN_WINDOW:
        raise ValueError(f"window [{d_min},{d_max}] spans fewer than {MIN_WINDOW} distances")
    return d_min, d_max


def _fit_distances(d_min, d_max):
    """The fitted grid: even distances inside the window (see module doc)."""
    lo = d_min if d_min % 2 == 0 else d_min + 1
    ds = np.arange(lo, d_max + 1, 2, dtype=int)
    if len(ds) < MIN_FIT_POINTS:
        raise ValueError(
            f"window [{d_min},{d_max}] holds only {len(ds)} even distances; "
            f"slope fits need at least {MIN_FIT_POINTS}"
        )
    return ds


def _slope_r2(x, y):
    xc = x - x.mean()
    denom = float(np.sum(xc**2))
    slope = float(np.sum(xc * y) / denom)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return slope, r2


def _tau_tables(model, energy, ds, replicates, eta, chunk, s=None):
    """Per-replicate per-distance reductions of |tau(0,x)| over spheres.

    Returns (mean_log, mean_trunc, mean_pow) with shape (replicates, len(ds)):
    the sphere average of log|tau|, of min(|tau|, 1), and (when s is given)
    of |tau|^s at each fitted distance.
    """
    d_max = int(ds[-1])
    n_d = len(ds)
    mean_log = np.empty((replicates, n_d))
    mean_trunc = np.empty((replicates, n_d))
    mean_pow = np.empty((replicates, n_d)) if s is not None else None
    for lo in range(0, replicates, chunk):
        hi = min(lo + chunk, replicates)
        pot = np.stack(
            [sample_potential(model, r).values for r in range(lo, hi)]
        ) * model.lam
        taus = tree_ratio_profile(model, pot, complex(energy, eta), d_max)
        for j, d in enumerate(ds):
            a = np.abs(taus[int(d) - 1])
            mean_log[lo:hi, j] = np.log(np.maximum(a, 1e-300)).mean(axis=1)
            mean_trunc[lo:hi, j] = np.minimum(a, 1.0).mean(axis=1)
            if s is not None:
                mean_pow[lo:hi, j] = (a**s).mean(axis=1)
    return mean_log, mean_trunc, mean_pow


def _fit_with_replicate_spread(ds, agg, per_rep):
    """Slope of agg vs ds; stderr from the spread of per-replicate slopes."""
    slope, r2 = _slope_r2(ds, agg)
    xc = ds - ds.mean()
    denom = float(np.sum(xc**2))
    rep_slopes = per_rep @ xc / denom
    n = len(rep_slopes)
    stderr = float(rep_slopes.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return slope, stderr, r2


def lyapunov_estimate(
    model,
    energy,
    d_window=(6, 12),
    replicates=100,
    eta=TAU_ETA,
    chunk=64,
) -> LyapunovEstimate:
    """L0 = -slope of E[log|tau|] vs d; L1 = -slope of log E[min(|tau|,1)] vs d."""
    d_min, d_max = _check_window(model, d_window)
    ds = _fit_distances(d_min, d_max)
    mean_log, mean_trunc, _ = _tau_tables(model, energy, ds, replicates, eta, chunk)
    return _estimate_from_tables(
        model, energy, (d_min, d_max), ds, replicates, mean_log, mean_trunc
    )


def _estimate_from_tables(model, energy, d_window, ds, replicates, mean_log, mean_trunc):
    ds = np.asarray(ds, dtype=float)
    s0, e0, r20 = _fit_with_replicate_spread(ds, mean_log.mean(axis=0), mean_log)
    pooled = mean_trunc.mean(axis=0)
    s1, e1, r21 = _fit_with_replicate_spread(
        ds, np.log(pooled), np.log(np.maximum(mean_trunc, 1e-300))
    )
    return LyapunovEstimate(
        energy=float(energy), lam=model.lam,
        l0=-s0, l0_stderr=e0, l1=-s1, l1_stderr=e1,
        r2_l0=r20, r2_l1=r21, d_window=tuple(d_window), replicates=replicates,
        flagged=bool(r20 < R2_FLAG or r21 < R2_FLAG),
    )


def phi_s(
    model,
    energy,
    s_grid,
    d_window=(6, 12),
    replicates=100,
    eta=TAU_ETA,
    chunk=64,
) -> FreeEnergyCurve:
    """phi(s) = slope of log E[min(|tau|,1)^s] against chi(d) = log |sphere(d)|."""
    s_grid = np.atleast_1d(np.asarray(s_grid, dtype=float))
    if np.any(s_grid <= 0) or np.any(s_grid > 1):
        raise ValueError("s must lie in (0, 1]")
    d_min, d_max = _check_window(model, d_window)
    g = model.topology
    ds = _fit_distances(d_min, d_max)
    chi = np.array([log_sphere_count(g, int(d)) for d in ds])
    n_d = len(ds)
    acc = np.zeros((len(s_grid), replicates, n_d))
    for lo in range(0, replicates, chunk):
        hi = min(lo + chunk, replicates)
        pot = np.stack(
            [sample_potential(model, r).values for r in range(lo, hi)]
        ) * model.lam
        taus = tree_ratio_profile(model, pot, complex(energy, eta), int(ds[-1]))
        for j, d in enumerate(ds):
            trunc = np.minimum(np.abs(taus[int(d) - 1]), 1.0)
            for i, s in enumerate(s_grid):
                acc[i, lo:hi, j] = (trunc**s).mean(axis=1)
    phi = np.empty(len(s_grid))
    phi_err = np.empty(len(s_grid))
    r2s = np.empty(len(s_grid))
    for i in range(len(s_grid)):
        pooled = acc[i].mean(axis=0)
        sl, err, r2 = _fit_with_replicate_spread(
            chi, np.log(pooled), np.log(np.maximum(acc[i], 1e-300))
        )
        phi[i], phi_err[i], r2s[i] = sl, err, r2
    return FreeEnergyCurve(
        energy=float(energy), lam=model.lam, s_grid=s_grid, phi=phi,
        phi_stderr=phi_err, r2=r2s, d_window=(d_min, d_max),
        flagged=bool(np.any(r2s < R2_FLAG)),
    )


def phase_verdict(
    model,
    energy,
    s=0.5,
    d_window=(6, 12),
    replicates=100,
    eta=TAU_ETA,
    chunk=64,
) -> PhaseVerdict:
    """Delocalization test: L0 + 3 stderr < log K.  Localization test:
    sphere sums of E[|tau|^s] decay geometrically across the window."""
    if not 0 < s < 1:
        raise ValueError("localization test needs s in (0, 1)")
    d_min, d_max = _check_window(model, d_window)
    g = model.topology
    ds = _fit_distances(d_min, d_max)
    mean_log, mean_trunc, frac = _tau_tables(
        model, energy, ds, replicates, eta, chunk, s=s
    )
    est = _estimate_from_tables(
        model, energy, (d_min, d_max), ds, replicates, mean_log, mean_trunc
    )
    log_k = np.log(g.branching)

    sizes = np.array([g.sphere_size(g.origin, int(d)) for d in ds], dtype=float)
    increments = frac.mean(axis=0) * sizes          # sphere sums of E[|tau|^s]
    inc_slope, inc_err, _ = _fit_with_replicate_spread(
        ds.astype(float), np.log(increments),
        np.log(np.maximum(frac * sizes[None, :], 1e-300)),
    )
    deloc = est.l0 + 3.0 * est.l0_stderr < log_k
    loc = inc_slope + 3.0 * inc_err < 0.0
    if deloc:
        verdict = "delocalization-test-passed"
    elif loc:
        verdict = "localization-test-passed"
    else:
        verdict = "inconclusive"
    return PhaseVerdict(
        energy=float(energy), lam=model.lam, verdict=verdict,
        l0=est.l0, l0_stderr=est.l0_stderr, l1=est.l1, l1_stderr=est.l1_stderr,
        s=s, sum_trace_tail=float(increments[-1]), log_k=float(log_k),
    )


def phase_cell(
    model: OperatorModel,
    cell_index: int,
    energy: float,
    lam: float,
    s=0.5,
    d_window=(6, 12),
    replicates=100,
    eta=TAU_ETA,
    chunk=64,
) -> dict:
    """One (E, lambda) cell of a phase scan as a flat row; the cell seed is
    derived from (model.seed, cell_index) only, so rows are reproducible
    independent of scan order or parallel layout.  Errors are recorded in
    the verdict field rather than raised so a sweep never stops."""
    cell_seed = int(stream(model.seed, cell_index, TAG_GENERIC).integers(2**62))
    cell_model = replace(model, lam=float(lam), seed=cell_seed)
    try:
        v = phase_verdict(
            cell_model, energy, s=s, d_window=d_window,
            replicates=replicates, eta=eta, chunk=chunk,
        )
        return {
            "E": float(energy), "lambda": float(lam), "L0": v.l0,
            "L0_err": v.l0_stderr, "L1": v.l1, "L1_err": v.l1_stderr,
            "verdict": v.verdict, "s": s, "sum_trace_tail": v.sum_trace_tail,
        }
    except Exception as exc:  # noqa: BLE001 - cell errors recorded, scan continues
        return {
            "E": float(energy), "lambda": float(lam), "L0": float("nan"),
            "L0_err": float("nan"), "L1": float("nan"),
            "L1_err": float("nan"), "verdict": f"error:{type(exc).__name__}",
            "s": s, "sum_trace_tail": float("nan"),
        }


def phase_scan(
    model: OperatorModel,
    e_grid,
    lambda_grid,
    s=0.5,
    d_window=(6, 12),
    replicates=100,
    eta=TAU_ETA,
    chunk=64,
):
    """Grid of phase verdicts; each cell gets its own derived seed so the
    scan is reproducible cell-by-cell and errors do not stop the sweep."""
    rows = []
    e_grid = np.atleast_1d(np.asarray(e_grid, dtype=float))
    lambda_grid = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    for i, e in enumerate(e_grid):
        for j, lam in enumerate(lambda_grid):
            rows.append(phase_cell(
                model, i * len(lambda_grid) + j, float(e), float(lam),
                s=s, d_window=d_window, replicates=replicates, eta=eta,
                chunk=chunk,
            ))
    return rows
