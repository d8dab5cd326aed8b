"""Resonance counting on spheres: cutoff calibration, the T/E/N events,
forced-resonance construction, and the moment/Paley-Zygmund report.

Working convention: every event formula uses the effective potential
lam*V.  Events at site x on the radius-R sphere, with t = t(R):

    T_x: |tau(0,x)| >= t      E_x: |lamV(x) - Sigma(x)| <= t
    N_x: |lamV(0) - sigma(0)| >= |tau(x,0)|

Under all three, |G(0,x)/G(0,0)| >= 1/2 exactly (triangle inequality on
the pair closure), so the 0.49 check is integrity-class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DOS_ETA, dos, sum_rule_check
from .randop import (
    TAG_CALIBRATION,
    TAG_RESAMPLE,
    TAG_SUBSAMPLE,
    OperatorModel,
    sample_potential,
    stream,
)
from .resolvent import (
    SolverIntegrityError,
    green_column,
    tree_pair_green,
    tree_sphere_data,
    two_site_schur,
)
from . import treecore

TAU_ETA = 1e-6
G_BOUND = 0.49
T_FLOOR = 1e-300


@dataclass
class CutoffFunction:
    energy: float
    delta: float
    eta: float
    t: np.ndarray            # t[d-1] for d = 1..r_max
    replicates: int

    def value(self, d: int) -> float:
        if not 1 <= d <= len(self.t):
            raise ValueError(f"no cutoff calibrated at distance {d}")
        return float(self.t[d - 1])


@dataclass
class ResonanceEvents:
    x: int
    energy: float
    t_event: bool
    e_event: bool
    n_event: bool
    witnesses: dict
    g_abs: float | None      # only evaluated under the triple event


@dataclass
class SphereEventCounts:
    radius: int
    energy: float
    replicates: int
    n_r: np.ndarray          # per-replicate N_R
    triple_count: int
    g_min: float             # min |g| over all triple occurrences (inf if none)
    t_count: int
    e_count: int
    n_count: int


@dataclass
class ResonanceReport:
    energy: float
    radius: int
    replicates: int
    cutoff: CutoffFunction
    n_r: np.ndarray
    mean_n: float
    mean_n_stderr: float
    n_of_e: float
    n_of_e_stderr: float
    sum_t: float
    first_moment_bound: float
    first_moment_holds: bool
    second_moment_ratio: float
    second_moment_bound: float
    second_moment_holds: bool
    c_t: float
    rho_sup_eff: float
    theta_grid: np.ndarray
    pz_prob: np.ndarray
    pz_bound: np.ndarray
    pz_holds: bool
    degenerate: bool
    g_min: float
    triple_count: int


def _calibration_potential(model: OperatorModel, replicate: int) -> np.ndarray:
    gen = stream(model.seed, replicate, TAG_CALIBRATION)
    return model.dist.sample(gen, model.topology.n)


def _tau_abs_by_distance(model, energy, r_max, replicates, eta, chunk, potentials):
    """|tau(0,x)| pooled per distance d = 1..r_max; list of 1-D arrays."""
    g = model.topology
    pools = [[] for _ in range(r_max)]
    if g.kind == "tree":
        for lo in range(0, replicates, chunk):
            hi = min(lo + chunk, replicates)
            pot = np.stack([potentials(r) for r in range(lo, hi)]) * model.lam
            tp = treecore.tree_green_pass(
                pot, complex(energy, eta), g.shell_offsets, g.branching, max_depth=r_max
            )
            g00 = tp.gamma[:, 0][:, None]
            for d in range(1, r_max + 1):
                sl = slice(int(g.shell_offsets[d]), int(g.shell_offsets[d + 1]))
                gxx = 1.0 / (1.0 / tp.gamma[:, sl] - tp.up[:, sl])
                g0x = g00 * tp.pref[:, sl]
                det = g00 * gxx - g0x * g0x
                pools[d - 1].append(np.abs(g0x / det).ravel())
    else:
        from .resolvent import green_matrix

        dist = g.distances_from(g.origin)
        z = complex(energy, eta)
        for r in range(replicates):
            sample = sample_potential(model, r)
            sample = sample.__class__(
                values=potentials(r), replicate=r, seed_path=sample.seed_path
            )
            gm = green_matrix(model, sample, z)
            g00 = gm[g.origin, g.origin]
            for d in range(1, r_max + 1):
                idx = np.flatnonzero(dist == d)
                if idx.size == 0:
                    raise ValueError(f"empty sphere at distance {d}")
                gxx = gm[idx, idx]
                g0x = gm[g.origin, idx]
                det = g00 * gxx - g0x * g0x
                pools[d - 1].append(np.abs(g0x / det))
    return [np.concatenate(p) for p in pools]


def calibrate_cutoff(
    model,
    energy,
    delta=0.1,
    r_max=None,
    replicates=200,
    eta=TAU_ETA,
    chunk=64,
) -> CutoffFunction:
    """t(d) = delta-quantile of |tau(0,x)| pooled over the d-sphere.

    Calibration draws come from a dedicated stream tag, so cutoffs are
    independent of the replicates later scored against them.
    """
    g = model.topology
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 0.5)")
    if r_max is None:
        r_max = g.depth if g.kind == "tree" else int(g.distances_from(g.origin).max())
    pools = _tau_abs_by_distance(
        model, energy, r_max, replicates, eta, chunk,
        lambda r: _calibration_potential(model, r),
    )
    t = np.array([np.quantile(p, delta) for p in pools])
    t = np.clip(t, T_FLOOR, 1.0)
    return CutoffFunction(
        energy=float(energy), delta=delta, eta=eta, t=t, replicates=replicates
    )


def detect_events(model, sample, x, energy, cutoff, eta=TAU_ETA) -> ResonanceEvents:
    """Single-site event detection through dense solves (reference route)."""
    g = model.topology
    o = g.origin
    if x == o:
        raise ValueError("event site must differ from the origin")
    d = int(g.distances_from(o)[x])
    t = cutoff.value(d)
    z = complex(energy, eta)
    data = two_site_schur(model, sample, x, o, z, check=False)
    pot = model.lam * sample.values
    tau_0x = data.tau_yx
    tau_x0 = data.tau_xy
    t_event = bool(abs(tau_0x) >= t)
    e_event = bool(abs(pot[x] - data.big_sigma_x) <= t)
    n_event = bool(abs(pot[o] - data.sigma_y) >= abs(tau_x0))
    witnesses = {
        "tau_0x_abs": abs(tau_0x),
        "e_gap": abs(pot[x] - data.big_sigma_x),
        "n_gap": abs(pot[o] - data.sigma_y),
        "tau_x0_abs": abs(tau_x0),
        "t": t,
    }
    g_abs = None
    if t_event and e_event and n_event:
        col = green_column(model, sample, o, z, check=False)
        g_abs = float(abs(col.values[x] / col.values[o]))
        if g_abs < G_BOUND:
            raise SolverIntegrityError(
                f"|g| = {g_abs:.6f} < {G_BOUND} under the triple event at x={x}"
            )
    return ResonanceEvents(
        x=x, energy=float(energy), t_event=t_event, e_event=e_event,
        n_event=n_event, witnesses=witnesses, g_abs=g_abs,
    )


def _sphere_indicators(sd, t):
    te = np.abs(sd.tau_0x) >= t
    ee = np.abs(sd.pot_x - sd.big_sigma_x) <= t
    ne = np.abs(sd.pot_0[:, None] - sd.sigma_0) >= np.abs(sd.tau_0x)
    return te, ee, ne


def _check_g_bound(g_abs, triple, context):
    if triple.any():
        gm = float(g_abs[triple].min())
        if gm < G_BOUND:
            raise SolverIntegrityError(
                f"|g| = {gm:.6f} < {G_BOUND} under the triple event ({context})"
            )
        return gm
    return float("inf")


def sphere_events(
    model,
    energy,
    radius,
    cutoff,
    replicates,
    eta=TAU_ETA,
    chunk=64,
    integrity_stride=64,
) -> SphereEventCounts:
    """Vectorized event counts on one sphere over disorder replicates.

    Every replicate whose index is a multiple of integrity_stride also
    runs the full-tree sum rule check on the fast path.
    """
    g = model.topology
    if g.kind != "tree":
        raise ValueError("sphere_events runs on the tree fast path")
    t = cutoff.value(radius)
    z = complex(energy, eta)
    n_r = np.zeros(replicates, dtype=np.int64)
    counts = np.zeros(3, dtype=np.int64)
    triple_count = 0
    g_min = float("inf")
    for lo in range(0, replicates, chunk):
        hi = min(lo + chunk, replicates)
        pot = np.stack(
            [sample_potential(model, r).values for r in range(lo, hi)]
        ) * model.lam
        sd = tree_sphere_data(model, pot, z, radius)
        te, ee, ne = _sphere_indicators(sd, t)
        triple = te & ee & ne
        n_r[lo:hi] = triple.sum(axis=1)
        counts += np.array([te.sum(), ee.sum(), ne.sum()])
        triple_count += int(triple.sum())
        g_min = min(g_min, _check_g_bound(np.abs(sd.gratio), triple, f"reps {lo}..{hi - 1}"))
        stride_rows = [r - lo for r in range(lo, hi) if r % integrity_stride == 0]
        if stride_rows:
            sum_rule_check(model, pot[stride_rows], z)
    return SphereEventCounts(
        radius=radius, energy=float(energy), replicates=replicates, n_r=n_r,
        triple_count=triple_count, g_min=g_min,
        t_count=int(counts[0]), e_count=int(counts[1]), n_count=int(counts[2]),
    )


def forced_resonance_gratios(
    model, energy, radius, cutoff, replicates, eta=TAU_ETA, chunk=64, salt=0
):
    """Force E_x by setting lamV(x) := Sigma(x) + u*t, u ~ U(-1,1), at every
    sphere site; returns |g| recomputed through the pair closure and the
    T&N mask (forcing makes every masked site a triple occurrence).

    Nothing is re-solved: Sigma, sigma, tau are independent of V(x), and
    g = tau(0,x) / (lamV(x) - sigma(x)) with
    lamV(x) - sigma(x) = (lamV(x) - Sigma(x)) + tau^2/(lamV(0) - sigma(0)).
    """
    g = model.topology
    if g.kind != "tree":
        raise ValueError("forced resonances run on the tree fast path")
    t = cutoff.value(radius)
    z = complex(energy, eta)
    g_abs_all = []
    mask_all = []
    for lo in range(0, replicates, chunk):
        hi = min(lo + chunk, replicates)
        pot = np.stack(
            [sample_potential(model, r).values for r in range(lo, hi)]
        ) * model.lam
        sd = tree_sphere_data(model, pot, z, radius)
        te, _, ne = _sphere_indicators(sd, t)
        u = np.stack(
            [
                stream(model.seed, r, TAG_RESAMPLE, salt).uniform(-1.0, 1.0, te.shape[1])
                for r in range(lo, hi)
            ]
        )
        forced_potx = sd.big_sigma_x + u * t
        denom = (forced_potx - sd.big_sigma_x) + sd.tau_0x**2 / (
            sd.pot_0[:, None] - sd.sigma_0
        )
        g_abs = np.abs(sd.tau_0x / denom)
        mask = te & ne
        _check_g_bound(g_abs, mask, f"forced reps {lo}..{hi - 1}")
        g_abs_all.append(g_abs)
        mask_all.append(mask)
    return np.concatenate(g_abs_all), np.concatenate(mask_all)


def truncated_mean(model, x, y, energy, replicates, eta=TAU_ETA):
    """T(x,y) = E[min(|tau(x,y)|, 1)] with stderr, by dense solves."""
    if replicates < 2:
        raise ValueError("replicates must be >= 2")
    z = complex(energy, eta)
    vals = np.empty(replicates)
    for r in range(replicates):
        sample = sample_potential(model, r)
        data = two_site_schur(model, sample, x, y, z, check=False)
        vals[r] = min(abs(data.tau_xy), 1.0)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(replicates))


def pair_truncated_means(
    model, energy, radius, replicates, x_count=16, y_partners=64,
    eta=TAU_ETA, chunk=64, salt=0,
):
    """Sphere-pair statistics for the second-moment correlation constant.

    Subsamples x sites and y partners on the radius sphere; returns the
    matrix of T(x,y) estimates (x_count, y_partners) and the index draws.
    """
    g = model.topology
    if g.kind != "tree":
        raise ValueError("pair_truncated_means runs on the tree fast path")
    lo_v, hi_v = int(g.shell_offsets[radius]), int(g.shell_offsets[radius + 1])
    size = hi_v - lo_v
    gen = stream(model.seed, 0, TAG_SUBSAMPLE, salt)
    xs = lo_v + gen.choice(size, size=min(x_count, size), replace=False)
    ys_rows = []
    for x in xs:
        draw = gen.choice(size - 1, size=min(y_partners, size - 1), replace=False)
        draw = draw + (draw >= (x - lo_v))  # skip x itself
        ys_rows.append(draw)
    ys = lo_v + np.stack(ys_rows)
    z = complex(energy, eta)
    acc = np.zeros(ys.shape)
    done = 0
    for lo in range(0, replicates, chunk):
        hi = min(lo + chunk, replicates)
        pot = np.stack(
            [sample_potential(model, r).values for r in range(lo, hi)]
        ) * model.lam
        tp = treecore.tree_green_pass(
            pot, z, g.shell_offsets, g.branching, max_depth=radius,
            need_up_paths=True,
        )
        for i, x in enumerate(xs):
            gxx, gyy, gxy = tree_pair_green(tp, g, np.full(ys.shape[1], x), ys[i])
            det = gxx * gyy - gxy * gxy
            acc[i] += np.minimum(np.abs(gxy / det), 1.0).sum(axis=0)
        done += hi - lo
    return acc / done, xs, ys


def resonance_report(
    model,
    energy,
    radius,
    replicates,
    delta=0.1,
    eta=TAU_ETA,
    calib_replicates=200,
    dos_eta=DOS_ETA,
    dos_replicates=2000,
    x_count=16,
    y_partners=64,
    chunk=64,
    theta_grid=None,
) -> ResonanceReport:
    """Full moment report on one sphere: first moment vs (n/2)*sum t,
    second moment vs 8*rho_sup^2*(1+C_T), and the Paley-Zygmund curve."""
    g = model.topology
    if theta_grid is None:
        theta_grid = np.arange(1, 10) / 10.0
    cutoff = calibrate_cutoff(
        model, energy, delta=delta, r_max=radius,
        replicates=calib_replicates, eta=eta, chunk=chunk,
    )
    d = dos(model, np.array([energy]), eta=dos_eta, replicates=dos_replicates)
    n_e, n_e_err = float(d.n_hat[0]), float(d.stderr[0])

    ev = sphere_events(model, energy, radius, cutoff, replicates, eta=eta, chunk=chunk)
    n_r = ev.n_r.astype(float)
    mean_n = float(n_r.mean())
    mean_n_err = float(n_r.std(ddof=1) / np.sqrt(replicates)) if replicates > 1 else 0.0

    sphere_size = g.sphere_size(g.origin, radius)
    t_r = cutoff.value(radius)
    sum_t = sphere_size * t_r
    bound_first = 0.5 * n_e * sum_t
    first_err = mean_n_err + 0.5 * sum_t * n_e_err
    first_holds = mean_n >= bound_first - 3.0 * first_err

    rho_sup_eff = (
        model.dist.sup_density() / model.lam
        if model.lam > 0 and model.dist.has_density
        else float("inf")
    )
    degenerate = mean_n == 0.0
    if degenerate:
        ratio = float("nan")
        bound_second = float("nan")
        second_holds = False
        c_t = float("nan")
        pz_prob = np.full_like(theta_grid, np.nan)
        pz_bound = np.full_like(theta_grid, np.nan)
        pz_holds = False
    else:
        t_means, _, _ = pair_truncated_means(
            model, energy, radius, max(replicates // 10, 50),
            x_count=x_count, y_partners=y_partners, eta=eta, chunk=chunk,
        )
        # per-x estimate of sum_y T(x,y) from the uniform partner subsample
        sum_t_rows = t_means.mean(axis=1) * sphere_size
        c_t = float(sum_t_rows.max() / sum_t)
        m2f = n_r * (n_r - 1.0)
        m2 = float(m2f.mean())
        m2_err = float(m2f.std(ddof=1) / np.sqrt(replicates))
        ratio = m2 / mean_n**2
        ratio_err = m2_err / mean_n**2 + 2.0 * m2 * mean_n_err / mean_n**3
        bound_second = 8.0 * rho_sup_eff**2 * (1.0 + c_t)
        second_holds = ratio <= bound_second + 3.0 * ratio_err

        n2 = float((n_r**2).mean())
        n2_err = float((n_r**2).std(ddof=1) / np.sqrt(replicates))
        pz_prob = np.array([float((n_r >= th * mean_n).mean()) for th in theta_grid])
        pz_bound = (1.0 - theta_grid) ** 2 * mean_n**2 / n2
        se_p = np.sqrt(pz_prob * (1.0 - pz_prob) / replicates)
        se_b = pz_bound * (2.0 * mean_n_err / mean_n + n2_err / n2)
        pz_holds = bool(np.all(pz_prob >= pz_bound - 3.0 * (se_p + se_b)))

    return ResonanceReport(
        energy=float(energy), radius=radius, replicates=replicates, cutoff=cutoff,
        n_r=ev.n_r, mean_n=mean_n, mean_n_stderr=mean_n_err,
        n_of_e=n_e, n_of_e_stderr=n_e_err, sum_t=sum_t,
        first_moment_bound=bound_first, first_moment_holds=bool(first_holds),
        second_moment_ratio=ratio, second_moment_bound=bound_second,
        second_moment_holds=bool(second_holds), c_t=c_t, rho_sup_eff=rho_sup_eff,
        theta_grid=theta_grid, pz_prob=pz_prob, pz_bound=pz_bound,
        pz_holds=pz_holds, degenerate=degenerate, g_min=ev.g_min,
        triple_count=ev.triple_count,
    )


def check_conditions(model, energy, r_list, replicates=200, delta=0.1,
                     eta=TAU_ETA, dos_replicates=1000, chunk=64):
    """Finite-R trends for the three sufficient conditions.

    Returns per-R traces: max_x T(x,0), sum_x t(0,x), and C_T; plus the
    density of states with its confidence scale.  Trends are reported,
    not adjudicated.
    """
    g = model.topology
    r_max = max(r_list)
    cutoff = calibrate_cutoff(
        model, energy, delta=delta, r_max=r_max, replicates=replicates,
        eta=eta, chunk=chunk,
    )
    pools = _tau_abs_by_distance(
        model, energy, r_max, replicates, eta, chunk,
        lambda r: sample_potential(model, r).values,
    )
    max_t_x0 = []
    sum_t = []
    c_t_trace = []
    for r in r_list:
        sphere = g.sphere_size(g.origin, r)
        per_site = np.minimum(pools[r - 1], 1.0).reshape(-1, sphere)
        max_t_x0.append(float(per_site.mean(axis=0).max()))
        sum_t.append(sphere * cutoff.value(r))
        t_means, _, _ = pair_truncated_means(
            model, energy, r, replicates, chunk=chunk
        )
        c_t_trace.append(float((t_means.mean(axis=1) * sphere).max() / sum_t[-1]))
    d = dos(model, np.array([energy]), replicates=dos_replicates)
    return {
        "r_list": list(r_list),
        "max_T_x0": max_t_x0,
        "sum_t": sum_t,
        "c_t": c_t_trace,
        "n_of_e": float(d.n_hat[0]),
        "n_of_e_stderr": float(d.stderr[0]),
        "a3_positive": bool(d.n_hat[0] > 3.0 * d.stderr[0]),
    }
