"""Random operator model H = A + lambda*V and the single-site disorder.

Sampling is counter-based: every (seed, replicate) pair keys its own
Philox stream, with per-purpose stream tags, so draws are reproducible
bit-for-bit no matter how replicates are partitioned across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .topology import DENSE_LIMIT, GraphTopology

# stream tags keep different consumers of randomness out of each other's way
TAG_POTENTIAL = 1
TAG_RESAMPLE = 2
TAG_CALIBRATION = 3
TAG_SUBSAMPLE = 4
TAG_GENERIC = 5

_MASK = (1 << 64) - 1


class NoDensityError(ValueError):
    """Raised when an operation needs an absolutely continuous distribution."""


@dataclass(frozen=True)
class SiteDistribution:
    """Single-site law of the (unscaled) potential V."""

    kind: str  # uniform | gaussian | cauchy | bernoulli
    a: float = 0.0      # uniform lower / gaussian mean / cauchy location
    b: float = 1.0      # uniform upper / gaussian sd / cauchy scale
    p: float = 0.5      # bernoulli weight on v1
    v0: float = 0.0
    v1: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian", "cauchy", "bernoulli"):
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if self.kind == "uniform" and not self.b > self.a:
            raise ValueError("uniform needs b > a")
        if self.kind in ("gaussian", "cauchy") and not self.b > 0:
            raise ValueError(f"{self.kind} needs positive scale")
        if self.kind == "bernoulli" and not 0.0 <= self.p <= 1.0:
            raise ValueError("bernoulli needs p in [0,1]")

    @property
    def has_density(self) -> bool:
        return self.kind != "bernoulli"

    def _frozen(self):
        if self.kind == "uniform":
            return stats.uniform(loc=self.a, scale=self.b - self.a)
        if self.kind == "gaussian":
            return stats.norm(loc=self.a, scale=self.b)
        if self.kind == "cauchy":
            return stats.cauchy(loc=self.a, scale=self.b)
        raise NoDensityError(f"{self.kind} has no density")

    def pdf(self, x):
        return self._frozen().pdf(x)

    def cdf(self, x):
        return self._frozen().cdf(x)

    def ppf(self, q):
        return self._frozen().ppf(q)

    def sf(self, x):
        return self._frozen().sf(x)

    def sup_density(self) -> float:
        if self.kind == "uniform":
            return 1.0 / (self.b - self.a)
        if self.kind == "gaussian":
            return 1.0 / (self.b * np.sqrt(2.0 * np.pi))
        if self.kind == "cauchy":
            return 1.0 / (np.pi * self.b)
        raise NoDensityError("bernoulli has no density")

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "uniform":
            return gen.uniform(self.a, self.b, size)
        if self.kind == "gaussian":
            return gen.normal(self.a, self.b, size)
        if self.kind == "cauchy":
            return self.a + self.b * gen.standard_cauchy(size)
        return np.where(gen.random(size) < self.p, self.v1, self.v0)


@dataclass(frozen=True)
class OperatorModel:
    """H = A + lambda*V on a fixed topology with seeded disorder."""

    topology: GraphTopology
    dist: SiteDistribution
    lam: float
    seed: int
    hopping: np.ndarray | None = None  # dense symmetric override of A

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.hopping is not None:
            h = np.asarray(self.hopping, dtype=float)
            if h.shape != (self.topology.n, self.topology.n):
                raise ValueError("hopping shape does not match vertex count")
            if not np.allclose(h, h.T):
                raise ValueError("hopping must be symmetric")
            object.__setattr__(self, "hopping", h)


@dataclass(frozen=True)
class PotentialSample:
    values: np.ndarray           # raw V draws, one per vertex
    replicate: int
    seed_path: tuple             # (seed, replicate, tag)
    overrides: tuple = field(default=())  # ((vertex, value), ...) provenance

    def effective(self, lam: float) -> np.ndarray:
        return lam * self.values


def stream(seed: int, replicate: int, tag: int, extra: int = 0) -> np.random.Generator:
    """Philox generator keyed by (seed, replicate, tag, extra).

    SeedSequence folds the path into the 128-bit Philox key, so distinct
    paths give independent streams and the mapping is stable across runs
    and worker layouts.
    """
    ss = np.random.SeedSequence(
        entropy=seed & _MASK,
        spawn_key=(replicate & _MASK, tag & _MASK, extra & _MASK),
    )
    return np.random.Generator(np.random.Philox(ss))


def sample_potential(model: OperatorModel, replicate: int) -> PotentialSample:
    """Draw V for every vertex; bitwise reproducible from (seed, replicate)."""
    if replicate < 0:
        raise ValueError("replicate must be >= 0")
    gen = stream(model.seed, replicate, TAG_POTENTIAL)
    values = model.dist.sample(gen, model.topology.n)
    return PotentialSample(
        values=values,
        replicate=replicate,
        seed_path=(model.seed, replicate, TAG_POTENTIAL),
    )


def conditional_resample(
    model: OperatorModel,
    sample: PotentialSample,
    x: int,
    value: float | None = None,
    salt: int = 0,
) -> PotentialSample:
    """Replace V(x) only; all other coordinates are untouched.

    With value=None a fresh draw is made from a stream keyed additionally
    by (x, salt) so repeated resamples are independent yet reproducible.
    """
    if not 0 <= x < model.topology.n:
        raise ValueError(f"vertex {x} out of range")
    if value is None:
        gen = stream(model.seed, sample.replicate, TAG_RESAMPLE + salt, x)
        value = float(model.dist.sample(gen, 1)[0])
    values = sample.values.copy()
    values[x] = value
    return replace(
        sample, values=values, overrides=sample.overrides + ((x, float(value)),)
    )


def dense_hamiltonian(model: OperatorModel, sample: PotentialSample) -> np.ndarray:
    n = model.topology.n
    if n > DENSE_LIMIT:
        raise ValueError(f"dense Hamiltonian refused for n={n} > {DENSE_LIMIT}")
    h = (
        model.hopping.copy()
        if model.hopping is not None
        else model.topology.adjacency_dense()
    )
    h[np.diag_indices(n)] += model.lam * sample.values
    return h


def wegner_density_bound(model: OperatorModel) -> float:
    """Sup of the density of the effective potential lambda*V."""
    if model.lam == 0.0:
        return np.inf
    return model.dist.sup_density() / model.lam


def check_density_condition(
    dist: SiteDistribution,
    delta: float = 0.1,
    grid_points: int = 10_000,
    eps_points: int = 64,
) -> dict:
    """Smallest c (on a scan grid) with rho <= c * inf_eps (box_eps * rho).

    The grid spans the 1e-6..1-1e-6 quantile range; eps runs over a log
    grid in (0, delta].  Returns {c, holds, argmax_v}.
    """
    if not dist.has_density:
        raise NoDensityError("density condition needs an absolutely continuous law")
    if not 0 < delta:
        raise ValueError("delta must be positive")
    # Equal-probability spacing: heavy-tailed laws need the scan
    # concentrated where the density (and hence the ratio's sup) lives.
    v = dist.ppf(np.linspace(1e-6, 1.0 - 1e-6, grid_points))
    eps = np.geomspace(delta * 1e-3, delta, eps_points)
    dens = dist.pdf(v)
    # smoothed[j, i] = average of rho over [v_i - eps_j, v_i + eps_j];
    # the upper tail goes through the survival function, where cdf
    # differences lose all precision against 1.
    hi_mask = v[None, :] > 0
    via_cdf = dist.cdf(v[None, :] + eps[:, None]) - dist.cdf(v[None, :] - eps[:, None])
    via_sf = dist.sf(v[None, :] - eps[:, None]) - dist.sf(v[None, :] + eps[:, None])
    smoothed = np.where(hi_mask, via_sf, via_cdf)
    smoothed /= 2.0 * eps[:, None]
    floor = smoothed.min(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dens > 0, dens / floor, 0.0)
    c = float(np.nanmax(ratio))
    return {
        "c": c,
        "holds": bool(np.isfinite(c)),
        "argmax_v": float(v[int(np.nanargmax(ratio))]),
        "delta": float(delta),
    }
