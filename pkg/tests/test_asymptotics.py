"""Decay-rate estimates, fractional free energy, and phase verdicts."""

import numpy as np
import pytest

from rslab import lyapunov_estimate, phase_scan, phase_verdict, phi_s
from rslab.asymptotics import (
    MIN_FIT_POINTS,
    _fit_distances,
    _slope_r2,
    phase_cell,
)

from conftest import box_model, tree_model

LOG_SQRT_2 = 0.5 * np.log(2.0)


def test_zero_disorder_rate_is_half_log_branching():
    m = tree_model(branching=2, depth=10, lam=0.0, seed=1)
    est = lyapunov_estimate(m, 0.0, d_window=(4, 8), replicates=4)
    assert est.l0 == pytest.approx(LOG_SQRT_2, rel=1e-9)
    assert est.l1 == pytest.approx(LOG_SQRT_2, rel=1e-9)
    assert est.l0_stderr == pytest.approx(0.0, abs=1e-12)
    assert est.r2_l0 == pytest.approx(1.0, abs=1e-12)
    assert est.r2_l1 == pytest.approx(1.0, abs=1e-12)
    assert not est.flagged


def test_zero_disorder_rate_branching_three():
    m = tree_model(branching=3, depth=8, lam=0.0, seed=1)
    est = lyapunov_estimate(m, 0.0, d_window=(2, 6), replicates=4)
    assert est.l0 == pytest.approx(0.5 * np.log(3.0), rel=1e-9)


def test_zero_disorder_typical_equals_truncated():
    # with no randomness the annealed and quenched traces coincide
    m = tree_model(branching=2, depth=10, lam=0.0, seed=1)
    est = lyapunov_estimate(m, 0.7, d_window=(4, 8), replicates=4)
    assert est.l0 == pytest.approx(est.l1, abs=1e-12)


def test_window_validation():
    m = tree_model(branching=2, depth=8, lam=0.5, seed=1)
    with pytest.raises(ValueError):
        lyapunov_estimate(m, 0.0, d_window=(4, 7))  # intrudes on boundary shells
    with pytest.raises(ValueError):
        lyapunov_estimate(m, 0.0, d_window=(3, 5))  # span below minimum
    with pytest.raises(ValueError):
        lyapunov_estimate(box_model(), 0.0, d_window=(4, 8))  # not a tree


def test_fit_grid_is_even_and_needs_three_points():
    assert list(_fit_distances(4, 8)) == [4, 6, 8]
    assert list(_fit_distances(5, 12)) == [6, 8, 10, 12]
    with pytest.raises(ValueError, match="even distances"):
        _fit_distances(5, 9)  # only {6, 8}
    assert MIN_FIT_POINTS == 3


def test_slope_r2_pins():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    slope, r2 = _slope_r2(x, -2.0 * x + 1.0)
    assert slope == pytest.approx(-2.0, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    _, r2_curved = _slope_r2(x, x**2)
    assert r2_curved < 1.0


def test_free_energy_is_minus_half_s_at_zero_disorder():
    m = tree_model(branching=2, depth=10, lam=0.0, seed=1)
    curve = phi_s(m, 0.0, [0.25, 0.5, 0.75, 1.0], d_window=(4, 8), replicates=4)
    np.testing.assert_allclose(curve.phi, [-0.125, -0.25, -0.375, -0.5], rtol=1e-9)
    assert np.all(curve.r2 > 0.999)
    assert not curve.flagged
    # decreasing in s, and (degenerately) convex: linear
    assert np.all(np.diff(curve.phi) < 0)


def test_free_energy_rejects_bad_exponents():
    m = tree_model(branching=2, depth=10, lam=0.0, seed=1)
    for bad in ([0.0], [-0.5], [1.5]):
        with pytest.raises(ValueError):
            phi_s(m, 0.0, bad, d_window=(4, 8), replicates=4)


def test_phase_verdict_delocalized_at_band_center():
    m = tree_model(branching=2, depth=10, lam=0.0, seed=1)
    v = phase_verdict(m, 0.0, d_window=(4, 8), replicates=4)
    assert v.verdict == "delocalization-test-passed"
    assert v.l0 + 3 * v.l0_stderr < v.log_k


def test_phase_verdict_localized_at_strong_disorder():
    m = tree_model(branching=2, depth=10, lam=40.0, seed=2)
    v = phase_verdict(m, 0.0, d_window=(4, 8), replicates=64)
    assert v.verdict == "localization-test-passed"
    assert v.l0 > v.log_k
    assert v.sum_trace_tail < 1.0


def test_phase_verdict_inconclusive_at_propagation_boundary():
    # at E = K + 1 with no disorder the rate sits at log K exactly in the
    # limit; the finite-window estimate lands just above, and the s-moment
    # sphere sums neither grow nor decay cleanly -> inconclusive
    m = tree_model(branching=2, depth=10, lam=0.0, seed=1)
    v = phase_verdict(m, 3.0, d_window=(4, 8), replicates=4)
    assert v.verdict == "inconclusive"
    with pytest.raises(ValueError):
        phase_verdict(m, 0.0, s=1.0, d_window=(4, 8))


def test_phase_scan_deterministic_and_cell_addressable():
    m = tree_model(branching=2, depth=10, lam=0.3, seed=3)
    grid_e, grid_l = [0.0, 1.0], [0.2, 4.0]
    rows1 = phase_scan(m, grid_e, grid_l, d_window=(4, 8), replicates=8)
    rows2 = phase_scan(m, grid_e, grid_l, d_window=(4, 8), replicates=8)
    assert rows1 == rows2
    assert len(rows1) == 4
    assert [(r["E"], r["lambda"]) for r in rows1] == [
        (0.0, 0.2), (0.0, 4.0), (1.0, 0.2), (1.0, 4.0)
    ]
    # a cell recomputed alone matches its in-scan row exactly
    lone = phase_cell(m, 2, 1.0, 0.2, d_window=(4, 8), replicates=8)
    assert lone == rows1[2]
    # band-center weak disorder must read as delocalized
    assert rows1[0]["verdict"] == "delocalization-test-passed"


def test_phase_scan_records_cell_errors_without_stopping():
    m = tree_model(branching=2, depth=6, lam=0.3, seed=3)
    rows = phase_scan(m, [0.0], [0.1, 0.2], d_window=(6, 12), replicates=4)
    assert len(rows) == 2
    for r in rows:
        assert r["verdict"].startswith("error:")
        assert np.isnan(r["L0"])
