"""Site distributions, seeded sampling, resampling, density condition."""

import numpy as np
import pytest
from scipy import stats

from rslab import (
    NoDensityError,
    OperatorModel,
    SiteDistribution,
    check_density_condition,
    conditional_resample,
    sample_potential,
    wegner_density_bound,
)
from rslab.randop import TAG_POTENTIAL, stream

from conftest import box_model, tree_model, uniform01, uniform_sym


def test_density_sup_values():
    assert uniform01().sup_density() == pytest.approx(1.0)
    assert SiteDistribution("uniform", a=-1, b=1).sup_density() == pytest.approx(0.5)
    assert SiteDistribution("gaussian", a=0, b=2).sup_density() == pytest.approx(
        1.0 / (2 * np.sqrt(2 * np.pi))
    )
    assert SiteDistribution("cauchy", a=0, b=0.5).sup_density() == pytest.approx(
        1.0 / (np.pi * 0.5)
    )


def test_density_sup_matches_numerical_max():
    for dist in (uniform01(), SiteDistribution("gaussian", a=0.3, b=1.7),
                 SiteDistribution("cauchy", a=-1.0, b=2.0)):
        grid = np.linspace(dist.ppf(1e-6), dist.ppf(1 - 1e-6), 200_001)
        peak = dist.pdf(grid).max()
        assert peak - 1e-9 <= dist.sup_density() <= peak + 1e-4 * peak + 1e-9


def test_bernoulli_has_no_density():
    b = SiteDistribution("bernoulli", p=0.5, v0=-1.0, v1=1.0)
    assert not b.has_density
    with pytest.raises(NoDensityError):
        b.sup_density()


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        SiteDistribution("uniform", a=1.0, b=0.0)
    with pytest.raises(ValueError):
        SiteDistribution("gaussian", a=0.0, b=0.0)
    with pytest.raises(ValueError):
        SiteDistribution("bernoulli", p=1.5)
    with pytest.raises(ValueError):
        SiteDistribution("triangular")


def test_sampling_is_deterministic_per_replicate():
    m = tree_model(seed=42)
    s1 = sample_potential(m, 7)
    s2 = sample_potential(m, 7)
    assert np.array_equal(s1.values, s2.values)
    s3 = sample_potential(m, 8)
    assert not np.array_equal(s1.values, s3.values)


def test_sample_mean_lln():
    m = box_model(dims=(10, 10), dist=uniform01(), seed=3)
    vals = np.concatenate([sample_potential(m, r).values for r in range(1000)])
    assert vals.mean() == pytest.approx(0.5, abs=0.005)


def test_zero_disorder_effective_potential():
    m = tree_model(lam=0.0)
    s = sample_potential(m, 0)
    assert np.all(m.lam * s.values == 0.0)


def test_ks_statistic_against_target_cdf():
    gen = stream(99, 0, TAG_POTENTIAL)
    for dist, cdf in (
        (uniform01(), stats.uniform.cdf),
        (SiteDistribution("gaussian", a=0, b=1), stats.norm.cdf),
        (SiteDistribution("cauchy", a=0, b=1), stats.cauchy.cdf),
    ):
        draws = dist.sample(gen, 10_000)
        d_stat = stats.kstest(draws, cdf).statistic
        assert d_stat < 1.63 / np.sqrt(10_000)  # 1% critical value


def test_distinct_replicates_uncorrelated():
    m = box_model(dims=(64, 64), seed=21)
    a = sample_potential(m, 0).values
    b = sample_potential(m, 1).values
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 3.0 / np.sqrt(m.topology.n)


def test_conditional_resample_replaces_single_site():
    m = tree_model(seed=13)
    s = sample_potential(m, 0)
    s2 = conditional_resample(m, s, 5, value=3.25)
    assert s2.values[5] == 3.25
    mask = np.ones(m.topology.n, dtype=bool)
    mask[5] = False
    assert np.array_equal(s2.values[mask], s.values[mask])
    # writing the original value back is an identity
    s3 = conditional_resample(m, s, 5, value=float(s.values[5]))
    assert np.array_equal(s3.values, s.values)


def test_density_condition_uniform_boundary_constant():
    out = check_density_condition(uniform01(), delta=0.5)
    assert out["holds"]
    # at the interval endpoints the eps-average halves the density
    assert out["c"] == pytest.approx(2.0, rel=5e-2)


def test_density_condition_gaussian_and_cauchy():
    g = check_density_condition(SiteDistribution("gaussian", a=0, b=1), delta=0.1)
    assert g["holds"] and g["c"] <= 1.01
    c = check_density_condition(SiteDistribution("cauchy", a=0, b=1), delta=0.1)
    assert c["holds"] and np.isfinite(c["c"])


def test_density_condition_rejects_bernoulli():
    with pytest.raises(NoDensityError):
        check_density_condition(
            SiteDistribution("bernoulli", p=0.5), delta=0.1
        )


def test_wegner_density_bound_scaling():
    m = box_model(lam=0.5, dist=uniform01())
    # density of lam*V is rho(v/lam)/lam, so the sup doubles at lam=1/2
    assert wegner_density_bound(m) == pytest.approx(2.0)
    # no density bound without disorder: the effective potential is a
    # point mass, reported as an infinite sup rather than an error
    assert wegner_density_bound(box_model(lam=0.0)) == np.inf


def test_negative_disorder_strength_rejected():
    with pytest.raises(ValueError):
        tree_model(lam=-0.1)


def test_stream_separates_tags_and_replicates():
    a = stream(5, 0, TAG_POTENTIAL).uniform(size=8)
    b = stream(5, 1, TAG_POTENTIAL).uniform(size=8)
    c = stream(5, 0, TAG_POTENTIAL, extra=1).uniform(size=8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.array_equal(a, stream(5, 0, TAG_POTENTIAL).uniform(size=8))
