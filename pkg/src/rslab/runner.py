"""Command dispatch: deterministic parallel execution and persisted outputs.

Every command is split into independent work units (one energy, one radius,
one grid cell, one named check).  Units derive all randomness from counter
streams keyed on (seed, unit index), never from shared state, so the result
of a unit does not depend on which worker ran it.  Units are submitted to a
thread pool and reduced in submission order, which makes the output bytes a
function of (config, seed, version) alone -- the worker count only changes
wall time.

Exit codes: 0 ok (possibly with statistics-class warnings), 1 config error,
2 integrity failure (an exact identity or theorem bound violated), 3 I/O.
"""
from __future__ import annotations

import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .asymptotics import TAU_ETA, lyapunov_estimate, phase_cell
from .config import ConfigError, RunConfig
from .diagnostics import (
    DOS_ETA,
    divergence_verdict,
    dos_partial,
    gamma_ladder_batch,
    sum_rule_check,
)
from .manifest import (
    config_digest,
    utc_now,
    write_csv,
    write_json,
    write_manifest,
)
from .randop import (
    TAG_GENERIC,
    OperatorModel,
    check_density_condition,
    conditional_resample,
    dense_hamiltonian,
    sample_potential,
    stream,
    wegner_density_bound,
)
from .resolvent import (
    EtaLadder,
    SolverIntegrityError,
    green_column,
    green_ratio,
    self_energy,
    two_site_schur,
)
from .resonance import calibrate_cutoff, forced_resonance_gratios, resonance_report
from .theorems import (
    QuadratureError,
    delta_principle,
    mobius_dichotomy,
    spectral_null_average,
    spectrum_simplicity,
    two_site_area_bound,
    verify_rank_one_eigen,
)
from .topology import build_tree

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INTEGRITY = 2
EXIT_IO = 3


def _map_ordered(fn, items, workers):
    """Apply fn to items, preserving order; workers only affects wall time."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------- green


def _run_green(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    p = cfg.params
    n = model.topology.n
    x, y = p["x"], p["y"]
    if not 0 <= x < n:
        raise ConfigError("params.x", f"vertex {x} outside graph of size {n}")
    if y is not None and not 0 <= y < n:
        raise ConfigError("params.y", f"vertex {y} outside graph of size {n}")
    z = complex(p["energy"], p["eta"])
    sample = sample_potential(model, p["replicate"])
    col = green_column(model, sample, x, z)
    dists = model.topology.distances_from(x)
    rows = [
        {
            "vertex": int(v),
            "distance": int(dists[v]),
            "re_g": float(col.values[v].real),
            "im_g": float(col.values[v].imag),
            "abs_g": float(abs(col.values[v])),
        }
        for v in range(n)
    ]
    gamma = float((np.abs(col.values) ** 2).sum())
    kappa = gamma / float(abs(col.gxx) ** 2)
    summary = {
        "x": x,
        "energy": p["energy"],
        "eta": p["eta"],
        "replicate": p["replicate"],
        "gxx": {"re": col.gxx.real, "im": col.gxx.imag},
        "residual": col.residual,
        "self_energy": _complex_dict(self_energy(model, sample, x, z)),
        "gamma": gamma,
        "kappa": kappa,
    }
    if y is not None:
        sd = two_site_schur(model, sample, x, y, z)
        summary["pair"] = {
            "y": y,
            "sigma_x": _complex_dict(sd.sigma_x),
            "sigma_y": _complex_dict(sd.sigma_y),
            "tau_xy": _complex_dict(sd.tau_xy),
            "tau_yx": _complex_dict(sd.tau_yx),
            "big_sigma_x": _complex_dict(sd.big_sigma_x),
        }
    columns = ["vertex", "distance", "re_g", "im_g", "abs_g"]
    return columns, rows, summary, []


def _complex_dict(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


# ----------------------------------------------------------------------- dos


def _run_dos(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    p = cfg.params
    energies = cfg.grid_values("energies")
    eta, replicates, chunk = p["eta"], p["replicates"], p["chunk"]
    bounds = [(lo, min(lo + chunk, replicates)) for lo in range(0, replicates, chunk)]
    parts = _map_ordered(
        lambda b: dos_partial(model, energies, eta, b[0], b[1]), bounds, workers
    )
    acc = np.zeros(len(energies))
    acc2 = np.zeros(len(energies))
    for p1, p2 in parts:  # fixed-order reduction
        acc += p1
        acc2 += p2
    n_hat = acc / replicates
    stderr = np.sqrt(np.maximum(acc2 / replicates - n_hat**2, 0.0) / replicates)
    bound = wegner_density_bound(model)
    rows = [
        {
            "E": float(e),
            "n_hat": float(n_hat[i]),
            "stderr": float(stderr[i]),
            "wegner_bound": bound,
        }
        for i, e in enumerate(energies)
    ]
    warnings = []
    over = [
        float(e)
        for i, e in enumerate(energies)
        if np.isfinite(bound) and n_hat[i] > bound + 3.0 * stderr[i]
    ]
    if over:
        warnings.append(
            f"statistics: smoothed density exceeds the Wegner bound + 3*stderr "
            f"at energies {over}"
        )
    summary = {
        "eta": eta,
        "replicates": replicates,
        "wegner_bound": bound,
        "max_n_hat": float(n_hat.max()),
        "references": _reference_block(model),
    }
    return ["E", "n_hat", "stderr", "wegner_bound"], rows, summary, warnings


# ---------------------------------------------------------------- gamma-scan


def _run_gamma_scan(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    p = cfg.params
    energies = cfg.grid_values("energies")
    x = p["x"]
    if x is not None and not 0 <= x < model.topology.n:
        raise ConfigError("params.x", f"vertex {x} outside graph of size {model.topology.n}")
    replicates, chunk = p["replicates"], p["chunk"]

    def unit(energy):
        etas, gam, gxx = gamma_ladder_batch(
            model, energy, ladder, replicates, x=x, chunk=chunk
        )
        kap = gam / np.abs(gxx) ** 2
        verdicts = [divergence_verdict(etas, gam[r]).verdict for r in range(replicates)]
        return etas, gam, kap, gxx, verdicts

    results = _map_ordered(unit, energies, workers)
    rows = []
    per_energy = []
    for energy, (etas, gam, kap, gxx, verdicts) in zip(energies, results):
        for r in range(replicates):
            for j, eta in enumerate(etas):
                rows.append(
                    {
                        "E": float(energy),
                        "eta": float(eta),
                        "gamma": float(gam[r, j]),
                        "kappa": float(kap[r, j]),
                        "imG": float(gxx[r, j].imag),
                        "verdict": verdicts[r],
                        "replicate": r,
                    }
                )
        counts = {v: verdicts.count(v) for v in ("diverging", "finite", "inconclusive")}
        per_energy.append(
            {
                "E": float(energy),
                "frac_diverging": counts["diverging"] / replicates,
                "frac_finite": counts["finite"] / replicates,
                "frac_inconclusive": counts["inconclusive"] / replicates,
            }
        )
    summary = {
        "replicates": replicates,
        "ladder": {"eta0": ladder.eta0, "rungs": ladder.rungs, "factor": ladder.factor},
        "x": x,
        "per_energy": per_energy,
        "references": _reference_block(model),
    }
    columns = ["E", "eta", "gamma", "kappa", "imG", "verdict", "replicate"]
    return columns, rows, summary, []


# ------------------------------------------------------------------ resonance


def _run_resonance(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    p = cfg.params
    radii = [int(r) for r in p["radii"]]

    def unit(radius):
        return resonance_report(
            model,
            p["energy"],
            radius,
            replicates=p["replicates"],
            delta=p["delta"],
            calib_replicates=p["calibration_replicates"],
            dos_replicates=p["dos_replicates"],
            chunk=p["chunk"],
        )

    reports = _map_ordered(unit, radii, workers)
    rows = []
    per_radius = []
    warnings = []
    for radius, rep in zip(radii, reports):
        for r, count in enumerate(rep.n_r):
            rows.append({"replicate": r, "R": radius, "N_R": int(count)})
        per_radius.append(
            {
                "R": radius,
                "mean_n": rep.mean_n,
                "mean_n_stderr": rep.mean_n_stderr,
                "n_of_e": rep.n_of_e,
                "n_of_e_stderr": rep.n_of_e_stderr,
                "sum_t": rep.sum_t,
                "first_moment_bound": rep.first_moment_bound,
                "first_moment_holds": rep.first_moment_holds,
                "second_moment_ratio": rep.second_moment_ratio,
                "second_moment_bound": rep.second_moment_bound,
                "second_moment_holds": rep.second_moment_holds,
                "c_t": rep.c_t,
                "rho_sup_eff": rep.rho_sup_eff,
                "theta_grid": rep.theta_grid,
                "pz_prob": rep.pz_prob,
                "pz_bound": rep.pz_bound,
                "pz_holds": rep.pz_holds,
                "degenerate": rep.degenerate,
                "g_min": rep.g_min,
                "triple_count": rep.triple_count,
            }
        )
        if not rep.first_moment_holds:
            warnings.append(
                f"statistics: first-moment lower bound missed at R={radius} "
                f"(mean_n={rep.mean_n:.4g} vs bound={rep.first_moment_bound:.4g})"
            )
        if not rep.degenerate and not rep.second_moment_holds:
            warnings.append(
                f"statistics: second-moment ratio above bound at R={radius} "
                f"(ratio={rep.second_moment_ratio:.4g} vs "
                f"bound={rep.second_moment_bound:.4g})"
            )
        if not rep.degenerate and not rep.pz_holds:
            warnings.append(
                f"statistics: Paley-Zygmund lower bound missed at R={radius}"
            )
        if rep.degenerate:
            warnings.append(
                f"statistics: no resonance events observed at R={radius}; "
                "moment comparisons degenerate"
            )
    summary = {
        "energy": p["energy"],
        "delta": p["delta"],
        "replicates": p["replicates"],
        "per_radius": per_radius,
        "references": _reference_block(model),
    }
    return ["replicate", "R", "N_R"], rows, summary, warnings


# ------------------------------------------------------------------- lyapunov


def _run_lyapunov(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    p = cfg.params
    energies = cfg.grid_values("energies")
    d_window = tuple(p["d_window"])

    def unit(energy):
        return lyapunov_estimate(
            model,
            energy,
            d_window=d_window,
            replicates=p["replicates"],
            eta=p["eta"],
            chunk=p["chunk"],
        )

    ests = _map_ordered(unit, energies, workers)
    rows = []
    flagged_energies = []
    for est in ests:
        rows.append(
            {
                "E": est.energy,
                "L0": est.l0,
                "L0_err": est.l0_stderr,
                "L1": est.l1,
                "L1_err": est.l1_stderr,
                "r2_L0": est.r2_l0,
                "r2_L1": est.r2_l1,
                "flagged": est.flagged,
            }
        )
        if est.flagged:
            flagged_energies.append(est.energy)
    warnings = []
    if flagged_energies:
        warnings.append(
            f"statistics: poor moment-fit quality (flagged) at energies "
            f"{flagged_energies}"
        )
    order_miss = [
        e.energy for e in ests
        if e.l1 > e.l0 + 3.0 * (e.l0_stderr + e.l1_stderr) + 1e-12
    ]
    if order_miss:
        warnings.append(
            f"statistics: truncated-mean rate L1 exceeds typical rate L0 "
            f"beyond 3 stderr at energies {order_miss}"
        )
    if model.topology.kind == "tree":
        floor = 0.5 * np.log(model.topology.branching)
        floor_miss = [
            e.energy for e in ests if e.l1 + 3.0 * e.l1_stderr < floor - 1e-12
        ]
        if floor_miss:
            warnings.append(
                f"statistics: L1 below the tree floor log sqrt(K) at energies "
                f"{floor_miss}; truncated means at finite distance are "
                f"dominated by moderate resonances, so the asymptotic floor "
                f"emerges only beyond reachable windows"
            )
    summary = {
        "d_window": list(d_window),
        "replicates": p["replicates"],
        "eta": p["eta"],
        "references": _reference_block(model),
    }
    columns = ["E", "L0", "L0_err", "L1", "L1_err", "r2_L0", "r2_L1", "flagged"]
    return columns, rows, summary, warnings


# ----------------------------------------------------------------- phase-scan


def _run_phase_scan(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    p = cfg.params
    energies = cfg.grid_values("energies")
    lambdas = cfg.grid_values("lambdas")
    d_window = tuple(p["d_window"])
    cells = [
        (i * len(lambdas) + j, float(e), float(lam))
        for i, e in enumerate(energies)
        for j, lam in enumerate(lambdas)
    ]

    def unit(cell):
        idx, energy, lam = cell
        return phase_cell(
            model,
            idx,
            energy,
            lam,
            s=p["s"],
            d_window=d_window,
            replicates=p["replicates"],
            chunk=p["chunk"],
        )

    rows = _map_ordered(unit, cells, workers)
    counts = {}
    integrity_errors = []
    for row in rows:
        counts[row["verdict"]] = counts.get(row["verdict"], 0) + 1
        if row["verdict"].startswith("error:"):
            kind = row["verdict"].split(":", 1)[1]
            if kind in ("SolverIntegrityError", "QuadratureError"):
                integrity_errors.append((row["E"], row["lambda"], kind))
    if integrity_errors:
        raise SolverIntegrityError(
            f"integrity failures inside phase cells: {integrity_errors}"
        )
    warnings = []
    error_cells = {k: v for k, v in counts.items() if k.startswith("error:")}
    if error_cells:
        warnings.append(f"statistics: cells failed with errors {error_cells}")
    order_miss = [
        (row["E"], row["lambda"]) for row in rows
        if not row["verdict"].startswith("error:")
        and row["L1"] > row["L0"] + 3.0 * (row["L0_err"] + row["L1_err"]) + 1e-12
    ]
    if order_miss:
        warnings.append(
            f"statistics: L1 exceeds L0 beyond 3 stderr at cells {order_miss}"
        )
    summary = {
        "s": p["s"],
        "d_window": list(d_window),
        "replicates": p["replicates"],
        "verdict_counts": counts,
        "references": _reference_block(model),
    }
    columns = ["E", "lambda", "L0", "L0_err", "L1", "L1_err", "verdict", "s",
               "sum_trace_tail"]
    return columns, rows, summary, warnings


# ------------------------------------------------------------------ verify-all


def _shrink_model(model: OperatorModel, max_n: int = 512) -> OperatorModel:
    """Same law and coupling on a graph small enough for dense checks."""
    g = model.topology
    if g.n <= max_n:
        return model
    if g.kind == "tree":
        depth = g.depth
        while build_tree(g.branching, depth).n > max_n and depth > 2:
            depth -= 1
        return replace(model, topology=build_tree(g.branching, depth))
    from .topology import build_box, build_complete

    if g.kind == "complete":
        return replace(model, topology=build_complete(max_n))
    # boxes and custom graphs: fall back to a modest box
    return replace(model, topology=build_box((8, 8)))


def _check_record(name, cls, status, observed, bound, tolerance):
    return {
        "name": name,
        "class": cls,
        "status": status,
        "observed": observed,
        "bound": bound,
        "tolerance": tolerance,
    }


def _vcheck_rank_one(model, small, rng, quick):
    h0 = dense_hamiltonian(small, sample_potential(small, 0))
    psi = rng.standard_normal(small.topology.n)
    psi /= np.linalg.norm(psi)
    res = verify_rank_one_eigen(h0, psi, energy=0.37)
    ok = res["eig_ok"] and res["collinear_ok"] and res["mass_ok"]
    observed = max(res["eig_distance"], res["sine"], res["mass_error"])
    return _check_record(
        "rank-one-eigenvalue-and-mass", "integrity",
        "pass" if ok else "fail", observed, 0.0, 1e-6,
    )


def _vcheck_pair_identity(model, small, rng, quick):
    z = complex(0.3, 1e-3)
    sample = sample_potential(small, 1)
    g = small.topology
    x = int(g.n - 1)
    sd = two_site_schur(small, sample, x, g.origin, z)
    pot0 = small.lam * sample.values[g.origin]
    lhs = sd.big_sigma_x
    rhs = sd.sigma_x + sd.tau_xy * sd.tau_yx / (pot0 - sd.sigma_y)
    observed = abs(lhs - rhs)
    return _check_record(
        "pair-self-energy-identity", "integrity",
        "pass" if observed <= 1e-10 else "fail", observed, 0.0, 1e-10,
    )


def _vcheck_green_ratio(model, small, rng, quick):
    z = complex(-0.2, 1e-3)
    sample = sample_potential(small, 2)
    x = int(small.topology.n // 2)
    if x == small.topology.origin:
        x += 1
    gr = green_ratio(small, sample, x, z)  # raises on route mismatch
    col = green_column(small, sample, small.topology.origin, z)
    observed = abs(gr - col.values[x] / col.values[small.topology.origin])
    return _check_record(
        "green-ratio-route-agreement", "integrity",
        "pass" if observed <= 1e-8 * max(1.0, abs(gr)) else "fail",
        observed, 0.0, 1e-8,
    )


def _vcheck_sum_rule(model, small, rng, quick):
    if model.topology.kind != "tree":
        return _check_record("tree-sum-rule", "integrity", "skipped",
                             float("nan"), float("nan"), float("nan"))
    reps = 4 if quick else 16
    pot = np.stack(
        [model.lam * sample_potential(model, r).values for r in range(reps)]
    )
    worst = sum_rule_check(model, pot, complex(0.1, 1e-4))
    return _check_record("tree-sum-rule", "integrity", "pass", worst, 0.0, 1e-8)


def _vcheck_area_bound(model, small, rng, quick):
    dist = model.dist if model.dist.has_density else None
    if dist is None:
        from .randop import SiteDistribution

        dist = SiteDistribution("uniform", a=-1.0, b=1.0)
    draws = 5 if quick else 25
    worst_ratio = 0.0
    violations = 0
    for _ in range(draws):
        a, b = rng.uniform(0.01, 1.0, size=2)
        gamma = rng.uniform(-0.5, 0.5)
        sx, sy = rng.uniform(-1.0, 1.0, size=2)
        out = two_site_area_bound(dist, dist, sx, sy, gamma, a, b)
        if not out["holds"] or out["w_violations"] or out["interval_violations"]:
            violations += 1
        if out["rhs"] > 0:
            worst_ratio = max(worst_ratio, out["lhs"] / out["rhs"])
    return _check_record(
        "two-site-area-bound", "integrity",
        "pass" if violations == 0 else "fail", worst_ratio, 1.0, 0.0,
    )


def _vcheck_delta_principle(model, small, rng, quick):
    from .randop import SiteDistribution

    uni = SiteDistribution("uniform", a=-1.0, b=1.0)
    reps = 20_000 if quick else 100_000
    out = delta_principle(uni, uni, replicates=reps, seed=model.seed)
    slack = 3.0 * (out["lhs_limit_stderr"] + out["rhs_stderr"])
    return _check_record(
        "smoothing-upper-bound", "statistics",
        "pass" if out["holds"] else "warn",
        out["lhs_limit"], out["rhs"], slack,
    )


def _vcheck_mobius(model, small, rng, quick):
    sample = sample_potential(small, 3)
    g = small.topology
    u = g.origin
    x = int(g.n - 1)
    energy = 0.21
    h = dense_hamiltonian(small, sample)
    keep = np.array([v for v in range(g.n) if v != x])
    iu = int(np.nonzero(keep == u)[0][0])
    b0 = h[np.ix_(keep, keep)]
    e_iu = np.zeros(len(keep))
    e_iu[iu] = 1.0
    sol = np.linalg.solve(b0 - energy * np.eye(len(keep)), e_iu)
    if small.lam == 0:
        return _check_record("single-exceptional-value", "integrity", "skipped",
                             float("nan"), float("nan"), float("nan"))
    w_star = sample.values[u] - 1.0 / sol[iu] / small.lam
    step = 0.02
    v_grid = w_star + step * (np.arange(41) - 20)
    scan = mobius_dichotomy(small, sample, u, energy, v_grid, x=x)
    n_clusters = len(scan.clusters)
    if n_clusters > 1:
        return _check_record("single-exceptional-value", "integrity", "fail",
                             float(n_clusters), 1.0, 0.0)
    pred_err = (
        abs(scan.predicted_v - w_star) if np.isfinite(scan.predicted_v)
        else float("nan")
    )
    status = "pass"
    if n_clusters == 1 and not (np.isfinite(pred_err) and pred_err <= step):
        status = "warn"  # prediction is exact only in the vanishing-eta limit
    return _check_record("single-exceptional-value",
                         "integrity" if status != "warn" else "statistics",
                         status, pred_err, step, 0.0)


def _vcheck_simplicity(model, small, rng, quick):
    if not model.dist.has_density:
        return _check_record("spectrum-simplicity", "integrity", "skipped",
                             float("nan"), float("nan"), float("nan"))
    reps = 20 if quick else 200
    out = spectrum_simplicity(small, replicates=reps)
    return _check_record(
        "spectrum-simplicity", "integrity",
        "pass" if out["frac_degenerate"] == 0.0 else "fail",
        out["frac_degenerate"], 0.0, out["gap_tol"],
    )


def _vcheck_null_average(model, small, rng, quick):
    if not model.dist.has_density:
        return _check_record("exceptional-values-null", "integrity", "skipped",
                             float("nan"), float("nan"), float("nan"))
    h0 = dense_hamiltonian(small, sample_potential(small, 4))
    psi = np.zeros(small.topology.n)
    psi[small.topology.origin] = 1.0
    reps = 200 if quick else 2000
    out = spectral_null_average(
        h0, psi, energies=np.array([0.11, 0.52]), v_dist=model.dist,
        replicates=reps, seed=model.seed,
    )
    return _check_record(
        "exceptional-values-null", "integrity",
        "pass" if out["frac_hitting"] == 0.0 else "fail",
        out["frac_hitting"], 0.0, 1e-8,
    )


def _vcheck_free_tree_rate(model, small, rng, quick):
    branching = model.topology.branching if model.topology.kind == "tree" else 2
    depth = 12
    free = OperatorModel(
        topology=build_tree(branching, depth),
        dist=model.dist,
        lam=0.0,
        seed=model.seed,
    )
    est = lyapunov_estimate(free, 0.0, d_window=(6, 10), replicates=2)
    target = 0.5 * np.log(branching)
    observed = abs(est.l0 - target) / target
    return _check_record(
        "zero-disorder-decay-rate", "statistics",
        "pass" if observed <= 0.02 else "warn", est.l0, target, 0.02,
    )


def _vcheck_wegner(model, small, rng, quick):
    if not model.dist.has_density:
        return _check_record("wegner-density-bound", "statistics", "skipped",
                             float("nan"), float("nan"), float("nan"))
    if model.lam == 0:
        return _check_record("wegner-density-bound", "statistics", "skipped",
                             float("nan"), float("nan"), float("nan"))
    reps = 200 if quick else 2000
    energies = np.linspace(-2.0, 2.0, 5)
    acc = np.zeros(len(energies))
    acc2 = np.zeros(len(energies))
    for lo in range(0, reps, 64):
        p1, p2 = dos_partial(small, energies, DOS_ETA, lo, min(lo + 64, reps))
        acc += p1
        acc2 += p2
    n_hat = acc / reps
    stderr = np.sqrt(np.maximum(acc2 / reps - n_hat**2, 0.0) / reps)
    bound = wegner_density_bound(small)
    excess = float((n_hat - 3.0 * stderr - bound).max())
    return _check_record(
        "wegner-density-bound", "statistics",
        "pass" if excess <= 0.0 else "warn",
        float(n_hat.max()), bound, float(3.0 * stderr.max()),
    )


def _vcheck_forced_g_bound(model, small, rng, quick):
    if model.topology.kind != "tree" or model.lam == 0:
        return _check_record("forced-resonance-g-bound", "integrity", "skipped",
                             float("nan"), float("nan"), float("nan"))
    radius = min(4, model.topology.depth - 2)
    if radius < 1:
        return _check_record("forced-resonance-g-bound", "integrity", "skipped",
                             float("nan"), float("nan"), float("nan"))
    reps = 20 if quick else 100
    cutoff = calibrate_cutoff(model, 0.0, r_max=radius, replicates=reps)
    g_abs, mask = forced_resonance_gratios(model, 0.0, radius, cutoff, reps)
    g_min = float(g_abs[mask].min()) if mask.any() else float("nan")
    return _check_record(
        "forced-resonance-g-bound", "integrity", "pass", g_min, 0.49, 0.0,
    )


def _vcheck_density_condition(model, small, rng, quick):
    if not model.dist.has_density:
        return _check_record("density-regularity-constant", "statistics", "skipped",
                             float("nan"), float("nan"), float("nan"))
    out = check_density_condition(model.dist)
    return _check_record(
        "density-regularity-constant", "statistics",
        "pass" if out["holds"] else "warn", out["c"], float("inf"), 0.0,
    )


_VERIFY_CHECKS = (
    _vcheck_rank_one,
    _vcheck_pair_identity,
    _vcheck_green_ratio,
    _vcheck_sum_rule,
    _vcheck_area_bound,
    _vcheck_delta_principle,
    _vcheck_mobius,
    _vcheck_simplicity,
    _vcheck_null_average,
    _vcheck_free_tree_rate,
    _vcheck_wegner,
    _vcheck_forced_g_bound,
    _vcheck_density_condition,
)


def _run_verify_all(cfg: RunConfig, model: OperatorModel, ladder: EtaLadder, workers: int):
    quick = cfg.params["quick"]
    small = _shrink_model(model)

    def unit(indexed):
        idx, check = indexed
        rng = stream(model.seed, 0, TAG_GENERIC, extra=idx + 1)
        try:
            return check(model, small, rng, quick)
        except (SolverIntegrityError, QuadratureError) as exc:
            name = check.__name__.replace("_vcheck_", "").replace("_", "-")
            return _check_record(name, "integrity", "fail",
                                 f"{type(exc).__name__}: {exc}", 0.0, 0.0)

    records = _map_ordered(unit, enumerate(_VERIFY_CHECKS), workers)
    rows = [
        {
            "name": r["name"],
            "class": r["class"],
            "status": r["status"],
            "observed": r["observed"] if isinstance(r["observed"], (int, float))
            else float("nan"),
            "bound": r["bound"],
            "tolerance": r["tolerance"],
        }
        for r in records
    ]
    warnings = [
        f"statistics: check '{r['name']}' missed its bound"
        for r in records
        if r["status"] == "warn"
    ]
    n_fail = sum(1 for r in records if r["status"] == "fail")
    summary = {
        "checks": records,
        "all_pass": n_fail == 0 and not warnings,
        "failures": n_fail,
        "quick": quick,
        "references": _reference_block(model),
    }
    columns = ["name", "class", "status", "observed", "bound", "tolerance"]
    return columns, rows, summary, warnings


# ------------------------------------------------------------------ reference


def _reference_block(model: OperatorModel) -> dict:
    """Display constants for downstream plots; physics lives here, not there."""
    ref = {}
    if model.topology.kind == "tree":
        k = model.topology.branching
        ref["log_sqrt_k"] = float(0.5 * np.log(k))
        ref["log_k"] = float(np.log(k))
        ref["spectrum_edge"] = float(2.0 * np.sqrt(k))
    if model.dist.has_density and model.lam > 0:
        ref["wegner_sup"] = wegner_density_bound(model)
    return ref


_COMMANDS = {
    "green": _run_green,
    "dos": _run_dos,
    "gamma-scan": _run_gamma_scan,
    "resonance": _run_resonance,
    "lyapunov": _run_lyapunov,
    "phase-scan": _run_phase_scan,
    "verify-all": _run_verify_all,
}


def run(cfg: RunConfig, out_dir=None, seed=None, workers=None):
    """Execute a validated config; returns (exit_code, manifest dict or None)."""
    out = out_dir if out_dir is not None else cfg.output_dir
    eff_seed = seed if seed is not None else cfg.model["seed"]
    eff_workers = workers if workers is not None else (
        cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    )
    started = utc_now()
    try:
        model = cfg.build_model(seed_override=seed)
        ladder = cfg.build_ladder()
        columns, rows, summary, warnings = _COMMANDS[cfg.command](
            cfg, model, ladder, eff_workers
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except (SolverIntegrityError, QuadratureError) as exc:
        print(f"integrity failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY, None
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO, None

    canonical = cfg.canonical()
    integrity_exit = (
        cfg.command == "verify-all" and summary.get("failures", 0) > 0
    )
    status = "ok" if not warnings else "warnings"
    if integrity_exit:
        status = "integrity-failure"
    summary_doc = {
        "command": cfg.command,
        "config_digest": config_digest(canonical),
        "seed": eff_seed,
        "warnings": list(warnings),
        **summary,
    }
    csv_name = f"{cfg.command}.csv"
    json_name = f"{cfg.command}.summary.json"
    try:
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, csv_name), columns, rows)
        write_json(os.path.join(out, json_name), summary_doc)
        manifest = write_manifest(
            out, cfg.command, canonical, seed=eff_seed, workers=eff_workers,
            output_files=[csv_name, json_name], started=started,
            warnings=warnings, status=status,
        )
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO, None
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    if integrity_exit:
        print("integrity failure: one or more verification checks failed",
              file=sys.stderr)
        return EXIT_INTEGRITY, manifest
    return EXIT_OK, manifest
