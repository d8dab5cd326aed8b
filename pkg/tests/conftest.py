"""Shared builders for the test suite.

Everything is seeded; tests must be bit-reproducible across runs and
worker counts.  Dense-solve oracles live here so unit tests can check
fast paths against an independent route.
"""

import numpy as np
import pytest

from rslab import (
    OperatorModel,
    SiteDistribution,
    build_box,
    build_complete,
    build_tree,
    dense_hamiltonian,
    sample_potential,
)


def uniform_sym() -> SiteDistribution:
    return SiteDistribution("uniform", a=-1.0, b=1.0)


def uniform01() -> SiteDistribution:
    return SiteDistribution("uniform", a=0.0, b=1.0)


def tree_model(branching=2, depth=6, lam=0.5, seed=11, dist=None) -> OperatorModel:
    dist = dist if dist is not None else uniform_sym()
    return OperatorModel(topology=build_tree(branching, depth), dist=dist,
                         lam=lam, seed=seed)


def box_model(dims=(4, 4), lam=0.5, seed=11, dist=None) -> OperatorModel:
    dist = dist if dist is not None else uniform_sym()
    return OperatorModel(topology=build_box(dims), dist=dist, lam=lam, seed=seed)


def complete_model(n=6, lam=0.5, seed=11) -> OperatorModel:
    return OperatorModel(topology=build_complete(n), dist=uniform_sym(),
                         lam=lam, seed=seed)


def dense_green(model, sample, z) -> np.ndarray:
    """Independent oracle: full inverse of (H - z) via LAPACK."""
    h = dense_hamiltonian(model, sample)
    n = h.shape[0]
    return np.linalg.inv(h.astype(np.complex128) - z * np.eye(n))


@pytest.fixture
def rng():
    return np.random.default_rng(987654321)
