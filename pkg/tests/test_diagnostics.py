"""Divergence ladders, eta-scaling verdicts, and density-of-states smoothing."""

import numpy as np
import pytest

from rslab import (
    OperatorModel,
    SiteDistribution,
    classify_energy,
    dense_hamiltonian,
    dos,
    energy_grid,
    divergence_verdict,
    gamma_trace,
    kappa_trace,
    sample_potential,
    wegner_density_bound,
)
from rslab.diagnostics import gamma_ladder_batch
from rslab.resolvent import EtaLadder

from conftest import box_model, tree_model, uniform_sym


def test_scalar_resonance_magnitude():
    # a site sitting exactly on the probe energy contributes 1/eta^2
    v, energy, eta = 0.7, 0.7, 1e-3
    assert 1.0 / ((v - energy) ** 2 + eta**2) == pytest.approx(1e6)


def test_scalar_kappa_is_one():
    # for a single-site resolvent 1/(v - z), -Im(1/G)/eta is exactly 1
    v, z = 0.3, 0.1 + 1e-4j
    g = 1.0 / (v - z)
    assert -(1.0 / g).imag / z.imag == pytest.approx(1.0, abs=1e-12)


def test_gamma_routes_agree_and_monotone():
    m = box_model(dims=(4, 4), lam=0.8, seed=21)
    s = sample_potential(m, 0)
    tr = gamma_trace(m, s, 5, 0.3, ladder=EtaLadder(eta0=0.1, rungs=8))
    rel = np.abs(tr.gamma - tr.gamma_im) / tr.gamma
    assert rel.max() < 1e-8
    assert np.all(np.diff(tr.gamma) >= -1e-9 * tr.gamma[:-1])


def test_kappa_gamma_identity():
    m = box_model(dims=(4, 4), lam=0.8, seed=22)
    s = sample_potential(m, 0)
    kt = kappa_trace(m, s, 3, -0.2, ladder=EtaLadder(eta0=0.1, rungs=8))
    gt = gamma_trace(m, s, 3, -0.2, ladder=EtaLadder(eta0=0.1, rungs=8))
    # identity kappa * |G(x,x)|^2 = gamma, rung by rung against the dense matrix
    from conftest import dense_green

    for k in (0, 4, 7):
        gm = dense_green(m, s, complex(-0.2, kt.etas[k]))
        assert kt.kappa[k] * abs(gm[3, 3]) ** 2 == pytest.approx(gt.gamma[k], rel=1e-8)


def test_synthetic_inverse_eta_exponent_one():
    etas = EtaLadder(eta0=0.1, rungs=10).values()
    v = divergence_verdict(etas, 1.0 / etas)
    assert v.verdict == "diverging"
    assert v.exponent == pytest.approx(1.0, abs=1e-2)
    assert v.r2 > 0.999


def test_eigenvalue_divergence_exponent_two():
    m = box_model(dims=(3, 3), lam=1.0, seed=30)
    s = sample_potential(m, 0)
    evals = np.linalg.eigvalsh(dense_hamiltonian(m, s))
    energy = float(evals[4])  # interior eigenvalue of this realization
    tr = gamma_trace(m, s, 0, energy, ladder=EtaLadder(eta0=0.1, rungs=14))
    v = divergence_verdict(tr.etas, tr.gamma)
    assert v.verdict == "diverging"
    assert v.exponent == pytest.approx(2.0, abs=0.05)


def test_resolvent_set_plateau_is_finite():
    m = box_model(dims=(3, 3), lam=0.5, seed=31)
    s = sample_potential(m, 0)
    tr = gamma_trace(m, s, 0, 10.0, ladder=EtaLadder(eta0=0.1, rungs=12))
    v = divergence_verdict(tr.etas, tr.gamma)
    assert v.verdict == "finite"
    # plateau equals the eta->0 limit sum_k w_k/(lambda_k - E)^2
    h = dense_hamiltonian(m, s)
    evals, evecs = np.linalg.eigh(h)
    w = np.abs(evecs[0, :]) ** 2
    limit = float(np.sum(w / (evals - 10.0) ** 2))
    assert v.plateau == pytest.approx(limit, rel=1e-3)


def test_verdict_ladder_too_short():
    with pytest.raises(ValueError):
        divergence_verdict(np.array([0.1, 0.05]), np.array([1.0, 2.0]))


def test_energy_grid_offset_and_validation():
    g = energy_grid(-2.0, 2.0, 5)
    assert len(g) == 5
    offset = g[0] - (-2.0)
    assert offset == pytest.approx(1e-4 * np.sqrt(2.0))
    assert np.allclose(np.diff(g), 1.0)
    with pytest.raises(ValueError):
        energy_grid(0.0, 1.0, 0)


def test_dos_zero_hopping_recovers_site_density():
    n = 4
    g_top = __import__("rslab").build_box((2, 2))
    m = OperatorModel(
        topology=g_top,
        dist=SiteDistribution("uniform", a=0.0, b=1.0),
        lam=1.0,
        seed=77,
        hopping=np.zeros((n, n)),
    )
    est = dos(m, np.array([0.5]), eta=1e-2, replicates=20000)
    # smoothed uniform density at the middle of its support is 1
    assert est.n_hat[0] == pytest.approx(1.0, abs=0.05)
    assert est.stderr[0] < 0.05
    assert est.wegner_bound == pytest.approx(wegner_density_bound(m))


def test_dos_rejects_bernoulli_and_bad_replicates():
    m = box_model()
    bern = OperatorModel(
        topology=m.topology,
        dist=SiteDistribution("bernoulli", p=0.5, v0=0.0, v1=1.0),
        lam=1.0,
        seed=0,
    )
    with pytest.raises(ValueError):
        dos(bern, np.array([0.0]), replicates=10)
    with pytest.raises(ValueError):
        dos(m, np.array([0.0]), replicates=0)


def test_dos_bipartite_reflection_exact_per_sample():
    # flipping the sign of every site value mirrors the local spectral
    # measure of a bipartite graph: Im G(0,0; E) equals Im G(0,0; -E)
    m = box_model(dims=(3, 4), lam=0.9, seed=41)
    s = sample_potential(m, 0)
    from rslab import conditional_resample, green_column

    flipped = s
    for i in range(m.topology.n):
        flipped = conditional_resample(m, flipped, i, value=float(-s.values[i]))
    e, eta = 0.6, 1e-2
    a = green_column(m, s, 0, complex(e, eta)).gxx.imag
    b = green_column(m, flipped, 0, complex(-e, eta)).gxx.imag
    assert a == pytest.approx(b, rel=1e-10)


def test_gamma_ladder_batch_tree_matches_dense_route():
    m = tree_model(branching=2, depth=5, lam=0.6, seed=50)
    lad = EtaLadder(eta0=0.1, rungs=6)
    etas, out, gxx = gamma_ladder_batch(m, 0.25, lad, replicates=3)
    for r in range(3):
        tr = gamma_trace(m, sample_potential(m, r), 0, 0.25, ladder=lad)
        np.testing.assert_allclose(out[r], tr.gamma_im, rtol=1e-8)
        np.testing.assert_allclose(gxx[r].imag, tr.im_g, rtol=1e-8)


def test_classify_energy_resolvent_set():
    m = box_model(dims=(3, 3), lam=0.5, seed=60)
    cls = classify_energy(m, 10.0, replicates=16, ladder=EtaLadder(eta0=0.1, rungs=8))
    assert cls.frac_finite == 1.0
    assert cls.frac_diverging == 0.0
    assert cls.frac_ac == 0.0
    with pytest.raises(ValueError):
        classify_energy(m, 0.0, replicates=0)
