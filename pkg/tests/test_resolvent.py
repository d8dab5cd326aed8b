"""Green columns, self-energies, two-site Schur data, tree recursion.

Every fast path is checked against an independent dense-inverse oracle.
"""

import numpy as np
import pytest

from rslab import (
    OperatorModel,
    SiteDistribution,
    SolverIntegrityError,
    build_custom,
    conditional_resample,
    green_column,
    green_matrix,
    green_ratio,
    sample_potential,
    self_energy,
    sum_rule_check,
    two_site_schur,
)
from rslab.resolvent import (
    ComplexEnergy,
    EtaLadder,
    tree_ratio_profile,
    tree_sphere_data,
    tree_tau_profile,
)
from conftest import box_model, complete_model, dense_green, tree_model, uniform_sym


def _pinned_sample(model, values):
    s = sample_potential(model, 0)
    for i, v in enumerate(values):
        s = conditional_resample(model, s, i, value=float(v))
    return s


def two_vertex_model():
    g = build_custom([(0, 1)])
    return OperatorModel(topology=g, dist=uniform_sym(), lam=1.0, seed=1)


# ------------------------------------------------------------ closed forms


def test_single_site_green_scalar_inverse():
    # one vertex with a loopless neighbor removed: use the 2-site graph and
    # push the partner far off-resonance so the scalar limit is visible;
    # the exact scalar case G = 1/(V - z) is checked through the complete
    # graph on... simplest: direct 2x2 oracle below covers it; here assert
    # the 1x1 algebra via self-energy: for A=0 the self-energy is z itself.
    z = 1j
    # scalar case via dense oracle on a 2-vertex graph with hopping zeroed
    # is not constructible (custom graphs are connected), so assert the
    # closed form the scalar case reduces to: G = 1/(2 - 1j) at V=2.
    g = 1.0 / (2.0 - z)
    assert g == pytest.approx(0.4 + 0.2j, abs=1e-15)


def test_two_vertex_free_green_at_i():
    m = two_vertex_model()
    s = _pinned_sample(m, (0.0, 0.0))
    col = green_column(m, s, 0, 1j)
    assert col.values[0] == pytest.approx(0.5j, abs=1e-12)
    assert col.values[1] == pytest.approx(0.5, abs=1e-12)
    assert col.residual <= 1e-10


def test_two_vertex_self_energy_closed_form():
    m = two_vertex_model()
    v1, v2 = 0.3, -0.7
    s = _pinned_sample(m, (v1, v2))
    z = 0.2 + 0.5j
    assert self_energy(m, s, 0, z) == pytest.approx(z + 1.0 / (v2 - z), abs=1e-12)


def test_two_vertex_schur_block_is_shifted_operator():
    m = two_vertex_model()
    s = _pinned_sample(m, (0.3, -0.7))
    z = 0.2 + 0.5j
    sd = two_site_schur(m, s, 0, 1, z)
    # with no third site to eliminate, the inverse Green block is H - z
    # itself: pair self-energies are z and the tunneling entry is -A_xy
    assert sd.sigma_x == pytest.approx(z, abs=1e-12)
    assert sd.sigma_y == pytest.approx(z, abs=1e-12)
    assert sd.tau_xy == pytest.approx(-1.0, abs=1e-12)
    assert abs(sd.tau_xy) == pytest.approx(1.0, abs=1e-12)


def test_three_vertex_path_elimination_closed_form():
    g = build_custom([(0, 1), (1, 2)])
    m = OperatorModel(topology=g, dist=uniform_sym(), lam=1.0, seed=1)
    w = 0.4
    s = _pinned_sample(m, (0.0, w, 0.0))
    z = 0.2 + 0.5j
    sd = two_site_schur(m, s, 0, 2, z)
    assert sd.sigma_x == pytest.approx(z + 1.0 / (w - z), abs=1e-12)
    assert sd.sigma_y == pytest.approx(z + 1.0 / (w - z), abs=1e-12)
    assert sd.tau_xy == pytest.approx(1.0 / (w - z), abs=1e-12)


# ------------------------------------------------------- dense-solve routes


def test_green_column_matches_dense_inverse():
    m = box_model(dims=(4, 5), lam=0.7, seed=9)
    s = sample_potential(m, 3)
    z = -0.3 + 1e-2j
    col = green_column(m, s, 6, z)
    oracle = dense_green(m, s, z)
    assert np.abs(col.values - oracle[:, 6]).max() < 1e-10
    assert col.residual <= 1e-10


def test_green_matrix_symmetric_and_herglotz():
    m = complete_model(n=7, seed=2)
    s = sample_potential(m, 0)
    for eta in (1.0, 1e-2, 1e-5):
        gm = green_matrix(m, s, 0.4 + eta * 1j)
        assert np.abs(gm - gm.T).max() < 1e-10
        assert np.all(np.diag(gm).imag > 0)


def test_eta_zero_rejected():
    with pytest.raises(ValueError):
        ComplexEnergy(0.5, 0.0)
    m = two_vertex_model()
    s = _pinned_sample(m, (0.0, 0.0))
    with pytest.raises(ValueError):
        green_column(m, s, 0, complex(0.5, 0.0))


def test_eta_ladder_validation_and_values():
    lad = EtaLadder(eta0=0.1, rungs=4, factor=2.0)
    assert np.allclose(lad.values(), [0.1, 0.05, 0.025, 0.0125])
    assert lad.eta_min == pytest.approx(0.0125)
    with pytest.raises(ValueError):
        EtaLadder(eta0=-1.0)
    with pytest.raises(ValueError):
        EtaLadder(rungs=0)
    with pytest.raises(ValueError):
        EtaLadder(factor=1.0)


def test_self_energy_agrees_with_restricted_solve():
    m = box_model(dims=(4, 4), lam=0.6, seed=4)
    s = sample_potential(m, 1)
    z = 0.1 + 1e-3j
    x = 5
    sig = self_energy(m, s, x, z)
    # independent oracle: Schur complement of the x-deleted block
    from rslab import dense_hamiltonian

    h = dense_hamiltonian(m, s).astype(np.complex128)
    keep = np.array([i for i in range(m.topology.n) if i != x])
    b = h[np.ix_(keep, keep)] - z * np.eye(len(keep))
    row = h[x, keep]
    oracle = z + row @ np.linalg.solve(b, row)
    assert sig == pytest.approx(oracle, abs=1e-10)


def test_sigma_invariant_under_resample_at_x():
    m = box_model(dims=(4, 4), lam=0.6, seed=8)
    s = sample_potential(m, 0)
    z = 0.3 + 1e-3j
    before = self_energy(m, s, 7, z)
    s2 = conditional_resample(m, s, 7, value=5.0)
    after = self_energy(m, s2, 7, z)
    assert after == pytest.approx(before, abs=1e-9)


def test_pair_data_invariances_under_resample():
    m = box_model(dims=(4, 4), lam=0.6, seed=8)
    s = sample_potential(m, 0)
    z = 0.3 + 1e-3j
    x, y = 2, 13
    before = two_site_schur(m, s, x, y, z)
    # resample at x: every pair field and the one-site self-energy at x
    # exclude V(x), so all must be invariant
    sx = conditional_resample(m, s, x, value=2.5)
    after_x = two_site_schur(m, sx, x, y, z)
    for f in ("sigma_x", "sigma_y", "tau_xy", "tau_yx", "big_sigma_x"):
        assert getattr(after_x, f) == pytest.approx(getattr(before, f), abs=1e-9)
    # resample at y: pair fields exclude V(y) too, but the one-site
    # self-energy at x sees site y through the environment and must move
    sy = conditional_resample(m, s, y, value=2.5)
    after_y = two_site_schur(m, sy, x, y, z)
    for f in ("sigma_x", "sigma_y", "tau_xy", "tau_yx"):
        assert getattr(after_y, f) == pytest.approx(getattr(before, f), abs=1e-9)
    assert abs(after_y.big_sigma_x - before.big_sigma_x) > 1e-6


def test_tau_symmetry_random_instances():
    m = box_model(dims=(5, 4), lam=0.9, seed=14)
    for r in range(5):
        s = sample_potential(m, r)
        sd = two_site_schur(m, s, 1, 17, 0.25 + 1e-4j)
        assert sd.tau_xy == pytest.approx(sd.tau_yx, abs=1e-10)


def test_rank_one_and_pair_identity_on_random_instance():
    m = box_model(dims=(5, 6), lam=0.8, seed=5)
    s = sample_potential(m, 2)
    z = -0.1 + 1e-3j
    o = m.topology.origin
    x = 17
    sd = two_site_schur(m, s, x, o, z)
    pot0 = m.lam * s.values[o]
    lhs = sd.big_sigma_x
    rhs = sd.sigma_x + sd.tau_xy * sd.tau_yx / (pot0 - sd.sigma_y)
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_g_ratio_identity_route():
    m = box_model(dims=(5, 6), lam=0.8, seed=5)
    s = sample_potential(m, 0)
    z = 0.15 + 1e-3j
    g = green_ratio(m, s, 21, z)  # check=True re-derives via tau/(V - sigma)
    oracle = dense_green(m, s, z)
    assert g == pytest.approx(oracle[0, 21] / oracle[0, 0], abs=1e-10)
    assert green_ratio(m, s, m.topology.origin, z) == 1.0 + 0.0j


def test_sum_rule_identity():
    m = tree_model(branching=2, depth=7, lam=0.4, seed=3)
    s = sample_potential(m, 0)
    pot_eff = m.lam * s.values
    worst = sum_rule_check(m, pot_eff[None, :], 0.2 + 1e-3j)
    assert worst < 1e-10


def test_sum_rule_rejects_non_tree():
    m = box_model()
    s = sample_potential(m, 0)
    with pytest.raises(ValueError):
        sum_rule_check(m, (m.lam * s.values)[None, :], 0.2 + 1e-3j)


# ---------------------------------------------------------- tree fast path


def test_tree_ratio_profile_free_factor_magnitude():
    # zero disorder at the band centre: paired forward factors multiply to
    # exactly -1/K, so the even-distance ratio is K^(-d/2) exactly
    m = tree_model(branching=2, depth=8, lam=0.0)
    pot = np.zeros((1, m.topology.n))
    prof = tree_ratio_profile(m, pot, 1e-8j, 6)
    for d in (2, 4, 6):
        np.testing.assert_allclose(np.abs(prof[d - 1]), 2.0 ** (-d / 2), rtol=1e-9)


def test_tree_ratio_profile_matches_dense_ratios():
    m = tree_model(branching=2, depth=8, lam=0.5, seed=6)
    s = sample_potential(m, 0)
    z = 0.3 + 1e-3j
    prof = tree_ratio_profile(m, s.values[None, :] * m.lam, z, m.topology.depth)
    gm = dense_green(m, s, z)
    dist = m.topology.distances_from(0)
    for d in range(1, m.topology.depth - 2 + 1):  # exclude outer 2 shells
        idx = np.flatnonzero(dist == d)
        oracle = gm[0, idx] / gm[0, 0]
        np.testing.assert_allclose(prof[d - 1][0], oracle, rtol=1e-6)


def test_tree_pair_profile_matches_dense_schur():
    m = tree_model(branching=2, depth=6, lam=0.5, seed=7)
    s = sample_potential(m, 1)
    z = -0.2 + 1e-3j
    prof = tree_tau_profile(m, s.values[None, :] * m.lam, z, 4)
    gm = dense_green(m, s, z)
    dist = m.topology.distances_from(0)
    for d in (1, 2, 3, 4):
        idx = np.flatnonzero(dist == d)
        for j, x in enumerate(idx):
            block = np.array([[gm[0, 0], gm[0, x]], [gm[x, 0], gm[x, x]]])
            inv = np.linalg.inv(block)
            assert prof[d - 1][0, j] == pytest.approx(-inv[0, 1], abs=1e-9)


def test_tree_sphere_data_identities():
    m = tree_model(branching=2, depth=6, lam=0.4, seed=12)
    s = sample_potential(m, 0)
    z = 0.1 + 1e-4j
    sd = tree_sphere_data(m, s.values[None, :] * m.lam, z, 3)
    # g-ratio identity g = tau/(lamV(x) - sigma_x) holds per sphere site
    lhs = sd.gratio
    rhs = sd.tau_0x / (sd.pot_x - sd.sigma_x)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10)
    # rank-one/pair consistency at each site
    rec = sd.sigma_x + sd.tau_0x**2 / (sd.pot_0[:, None] - sd.sigma_0)
    np.testing.assert_allclose(sd.big_sigma_x, rec, rtol=1e-9)


def test_tau_at_origin_is_one_by_convention():
    m = tree_model(branching=2, depth=5, lam=0.3, seed=2)
    s = sample_potential(m, 0)
    g = green_ratio(m, s, m.topology.origin, 0.2 + 1e-3j)
    assert g == 1.0 + 0.0j


def test_tree_recursion_rejects_non_tree():
    m = box_model()
    with pytest.raises(ValueError):
        tree_ratio_profile(m, np.zeros((1, m.topology.n)), 0.1j, 2)
