"""Render one figure from a CSV written by the rslab CLI.

Pure consumer: values are read from the CSV and the sibling
``<command>.summary.json`` the CLI writes next to it (reference lines, PZ
curves), never recomputed.  One invocation validates the input against the
CLI column schema, draws exactly one figure, and writes one image file; bad
or empty input is an error, never an empty picture.

    python3 plots/render.py --csv out/dos.csv --kind dos --out dos.png
"""

import argparse
import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be pinned first
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402
from matplotlib.patches import Patch  # noqa: E402

SCHEMAS = {
    "gamma-scan": ("E", "eta", "gamma", "kappa", "imG", "verdict", "replicate"),
    "dos": ("E", "n_hat", "stderr", "wegner_bound"),
    "lyapunov": ("E", "L0", "L0_err", "L1", "L1_err", "r2_L0", "r2_L1", "flagged"),
    "resonance": ("replicate", "R", "N_R"),
    "phase-scan": ("E", "lambda", "L0", "L0_err", "L1", "L1_err", "verdict", "s",
                   "sum_trace_tail"),
}

VERDICT_COLORS = {
    "delocalization-test-passed": "#3b7dd8",
    "localization-test-passed": "#d1495b",
    "inconclusive": "#bdbdbd",
    "error": "#404040",
}


class RenderError(Exception):
    """The input cannot be rendered; the message says exactly why."""


def load_table(csv_path, kind):
    """Rows of the CSV as dicts, validated against the CLI schema."""
    if kind not in SCHEMAS:
        raise RenderError(f"unknown figure kind {kind!r}")
    try:
        with open(csv_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in SCHEMAS[kind] if c not in header]
            if missing:
                raise RenderError(
                    f"{kind} CSV {csv_path} is missing required columns: "
                    + ", ".join(missing)
                )
            rows = list(reader)
    except OSError as exc:
        raise RenderError(f"cannot read CSV: {exc}") from exc
    if not rows:
        raise RenderError(f"empty input: {csv_path} has no data rows")
    for i, row in enumerate(rows):
        short = [c for c in SCHEMAS[kind] if row.get(c) is None]
        if short:
            raise RenderError(
                f"{kind} CSV row {i + 1} is truncated; missing values for: "
                + ", ".join(short)
            )
    return rows


def summary_path_for(csv_path):
    base = csv_path[:-4] if csv_path.endswith(".csv") else csv_path
    return base + ".summary.json"


def load_summary(csv_path, required_by=None):
    """The sibling summary JSON; None when absent and not required."""
    path = summary_path_for(csv_path)
    if not os.path.exists(path):
        if required_by:
            raise RenderError(
                f"{required_by} rendering needs the summary JSON {path} "
                f"(reference values are read from it, never hardcoded)"
            )
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _references(summary, keys, kind):
    refs = summary.get("references") or {}
    missing = [k for k in keys if k not in refs]
    if missing:
        raise RenderError(
            f"{kind} summary JSON is missing reference values: "
            + ", ".join(f"references.{k}" for k in missing)
        )
    return {k: float(refs[k]) for k in keys}


def _floats(rows, col):
    return np.array([float(r[col]) for r in rows])


# ------------------------------------------------------------------- figures


def _fig_gamma_scan(rows, summary, title):
    energies = _floats(rows, "E")
    etas = _floats(rows, "eta")
    gammas = _floats(rows, "gamma")
    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    for e in np.unique(energies):
        pick = energies == e
        uniq = np.unique(etas[pick])[::-1]
        med = [np.median(gammas[pick & (etas == h)]) for h in uniq]
        ax.plot(uniq, med, marker="o", ms=3.5, lw=1.4, label=f"E = {e:.3g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.invert_xaxis()  # read as the small-eta limit left to right
    ax.set_xlabel(r"$\eta$")
    ax.set_ylabel(r"median $\gamma$ over replicates")
    ax.grid(True, which="both", alpha=0.25)
    ax.legend(fontsize=8)
    ax.set_title(title or "second-moment trace down the eta ladder")
    return fig


def _fig_dos(rows, summary, title):
    order = np.argsort(_floats(rows, "E"))
    e = _floats(rows, "E")[order]
    n_hat = _floats(rows, "n_hat")[order]
    stderr = _floats(rows, "stderr")[order]
    bound = float(_floats(rows, "wegner_bound").max())
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.fill_between(e, n_hat - 3 * stderr, n_hat + 3 * stderr,
                    alpha=0.25, lw=0, label="3 stderr")
    ax.plot(e, n_hat, marker="o", ms=3, lw=1.4, label=r"$\hat n(E)$")
    ax.axhline(bound, color="#d1495b", ls="--", lw=1.4,
               label=f"density bound {bound:.3g}")
    ax.set_xlabel("E")
    ax.set_ylabel("smoothed density of states")
    ax.set_ylim(bottom=0)
    ax.grid(alpha=0.25)
    ax.legend(fontsize=8)
    ax.set_title(title or "density of states with its a-priori bound")
    return fig


def _fig_lyapunov(rows, summary, title):
    refs = _references(summary, ("log_sqrt_k", "log_k", "spectrum_edge"), "lyapunov")
    order = np.argsort(_floats(rows, "E"))
    e = _floats(rows, "E")[order]
    flagged = np.array([r["flagged"] == "true" for r in rows])[order]
    fig, axes = plt.subplots(2, 1, figsize=(6.4, 6.4), sharex=True)
    for ax, col, err_col, name in (
        (axes[0], "L0", "L0_err", "typical decay rate L0"),
        (axes[1], "L1", "L1_err", "truncated-mean decay rate L1"),
    ):
        vals = _floats(rows, col)[order]
        errs = _floats(rows, err_col)[order]
        ax.errorbar(e[~flagged], vals[~flagged], yerr=errs[~flagged],
                    fmt="o", ms=4, lw=1, capsize=2, label=name)
        if flagged.any():
            ax.errorbar(e[flagged], vals[flagged], yerr=errs[flagged],
                        fmt="o", ms=4, lw=1, capsize=2, mfc="none",
                        label=name + " (flagged fit)")
        ax.axhline(refs["log_sqrt_k"], color="#3b7dd8", ls="--", lw=1.2,
                   label=r"$\log\sqrt{K}$")
        ax.axhline(refs["log_k"], color="#d1495b", ls=":", lw=1.2,
                   label=r"$\log K$")
        for edge in (-refs["spectrum_edge"], refs["spectrum_edge"]):
            ax.axvline(edge, color="gray", lw=0.8, alpha=0.6)
        ax.grid(alpha=0.25)
        ax.legend(fontsize=7)
    axes[1].set_xlabel("E")
    axes[0].set_title(title or "decay rates vs energy with reference values")
    return fig


def _fig_resonance(rows, summary, title):
    per_radius = summary.get("per_radius") or []
    if not per_radius:
        raise RenderError("resonance summary JSON has no per_radius block")
    for i, block in enumerate(per_radius):
        missing = [k for k in ("R", "theta_grid", "pz_prob", "pz_bound", "mean_n")
                   if k not in block]
        if missing:
            raise RenderError(
                f"resonance summary per_radius[{i}] is missing: " + ", ".join(missing)
            )
    radii = _floats(rows, "R").astype(int)
    counts = _floats(rows, "N_R").astype(int)
    fig, (ax_h, ax_pz) = plt.subplots(1, 2, figsize=(9.6, 4.2))
    top = int(counts.max())
    bins = np.arange(-0.5, top + 1.5)
    for block in per_radius:
        r = int(block["R"])
        ax_h.hist(counts[radii == r], bins=bins, alpha=0.55,
                  label=f"R = {r} (mean {float(block['mean_n']):.3g})")
    ax_h.set_xlabel(r"$N_R$ per replicate")
    ax_h.set_ylabel("replicates")
    ax_h.legend(fontsize=8)
    ax_h.grid(alpha=0.25)
    for block in per_radius:
        theta = np.asarray(block["theta_grid"], dtype=float)
        (line,) = ax_pz.plot(theta, np.asarray(block["pz_prob"], dtype=float),
                             marker="o", ms=3.5, lw=1.4,
                             label=f"observed, R = {int(block['R'])}")
        ax_pz.plot(theta, np.asarray(block["pz_bound"], dtype=float),
                   ls="--", lw=1.2, color=line.get_color(),
                   label=f"anti-concentration bound, R = {int(block['R'])}")
    ax_pz.set_xlabel(r"$\theta$")
    ax_pz.set_ylabel(r"$P(N_R \geq \theta\,\bar N_R)$")
    ax_pz.set_ylim(bottom=0)
    ax_pz.grid(alpha=0.25)
    ax_pz.legend(fontsize=7)
    fig.suptitle(title or "sphere resonance counts and their lower tail")
    return fig


def _fig_phase_scan(rows, summary, title):
    e_vals = np.unique(_floats(rows, "E"))
    l_vals = np.unique(_floats(rows, "lambda"))
    code = {v: i for i, v in enumerate(VERDICT_COLORS)}
    grid = np.full((len(l_vals), len(e_vals)), np.nan)
    for r in rows:
        i = int(np.searchsorted(l_vals, float(r["lambda"])))
        j = int(np.searchsorted(e_vals, float(r["E"])))
        verdict = r["verdict"]
        key = "error" if verdict.startswith("error:") else verdict
        if key not in code:
            raise RenderError(f"phase-scan CSV has unknown verdict {verdict!r}")
        grid[i, j] = code[key]
    cmap = ListedColormap(list(VERDICT_COLORS.values()))
    cmap.set_bad("white")
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    ax.pcolormesh(
        np.arange(len(e_vals) + 1), np.arange(len(l_vals) + 1),
        np.ma.masked_invalid(grid), cmap=cmap, vmin=-0.5,
        vmax=len(code) - 0.5, edgecolors="white", linewidth=0.5,
    )
    ax.set_xticks(np.arange(len(e_vals)) + 0.5)
    ax.set_xticklabels([f"{v:.3g}" for v in e_vals], rotation=45, fontsize=7)
    ax.set_yticks(np.arange(len(l_vals)) + 0.5)
    ax.set_yticklabels([f"{v:.3g}" for v in l_vals], fontsize=8)
    ax.set_xlabel("E")
    ax.set_ylabel(r"$\lambda$")
    ax.legend(
        handles=[Patch(facecolor=c, label=k) for k, c in VERDICT_COLORS.items()],
        fontsize=7, loc="upper left", bbox_to_anchor=(1.01, 1.0),
    )
    ax.set_title(title or "phase verdicts over the (E, lambda) grid")
    return fig


_FIGURES = {
    "gamma-scan": (_fig_gamma_scan, None),
    "dos": (_fig_dos, None),
    "lyapunov": (_fig_lyapunov, "lyapunov"),
    "resonance": (_fig_resonance, "resonance"),
    "phase-scan": (_fig_phase_scan, None),
}


def render(csv_path, kind, out=None, dpi=150, title=None):
    """Build the figure for one CSV; write it to `out` when given."""
    rows = load_table(csv_path, kind)
    fig_fn, summary_need = _FIGURES[kind]
    summary = load_summary(csv_path, required_by=summary_need)
    fig = fig_fn(rows, summary, title)
    fig.tight_layout()
    if out is not None:
        metadata = {"Date": None} if out.endswith(".svg") else None
        fig.savefig(out, dpi=dpi, metadata=metadata)
    return fig


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="Render one figure from an rslab CSV output."
    )
    ap.add_argument("--csv", required=True, help="input CSV written by the CLI")
    ap.add_argument("--kind", required=True, choices=sorted(SCHEMAS),
                    help="which figure to draw")
    ap.add_argument("--out", required=True,
                    help="output image path (extension picks the format)")
    ap.add_argument("--dpi", type=int, default=150)
    ap.add_argument("--title", default=None)
    args = ap.parse_args(argv)
    try:
        fig = render(args.csv, args.kind, out=args.out, dpi=args.dpi,
                     title=args.title)
        plt.close(fig)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
