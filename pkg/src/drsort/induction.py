"""Induction-generating distributions, group sets, sampling, and SAA.

A group set is an ordered family of per-destination package-arrival
distributions. Two parameterizations are supported: a discretized
truncated normal over destination indices, and an explicit multinomial
probability vector. All probability vectors are valid simplex vectors
(entrywise nonnegative, summing to 1 within 1e-12).

Group indices are 1-based in files and logs, 0-based in code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

SIMPLEX_TOL = 1e-12


def standard_normal_cdf(z: float) -> float:
    """Phi(z) via the correctly rounded stdlib error function."""
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _check_simplex(probs: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise ValueError("probability vector must be a nonempty 1-D array")
    if np.any(probs < 0.0):
        raise ValueError("probability vector has negative entries")
    if abs(float(probs.sum()) - 1.0) > tol:
        raise ValueError("probability vector does not sum to 1")
    return probs


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Normal(mu, sigma) over destination indices, truncated to [0, N].

    Destination i (1-based) receives the normal mass on [i-1, i],
    renormalized by the mass on [0, N].
    """

    mu: float
    sigma: float
    n_destinations: int
    volume: int

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.n_destinations < 1:
            raise ValueError("n_destinations must be positive")
        if self.volume < 0:
            raise ValueError("volume must be nonnegative")

    @property
    def size(self) -> int:
        return self.n_destinations

    def probs(self) -> np.ndarray:
        return truncated_normal_probs(self)


@dataclass(frozen=True)
class MultinomialSpec:
    """Explicit multinomial over k destinations with fixed total volume V."""

    probs_vector: tuple[float, ...]
    volume: int

    def __post_init__(self):
        _check_simplex(np.asarray(self.probs_vector))
        if self.volume < 0:
            raise ValueError("volume must be nonnegative")

    @property
    def size(self) -> int:
        return len(self.probs_vector)

    def probs(self) -> np.ndarray:
        return np.asarray(self.probs_vector, dtype=float)


GroupSpec = TruncatedNormalSpec | MultinomialSpec


def truncated_normal_probs(spec: TruncatedNormalSpec) -> np.ndarray:
    """Per-destination probabilities of the discretized truncated normal.

    Entry i (1-based) equals
    (Phi((i-mu)/sigma) - Phi((i-1-mu)/sigma)) / (Phi((N-mu)/sigma) - Phi((-mu)/sigma)).
    """
    edges = (np.arange(spec.n_destinations + 1) - spec.mu) / spec.sigma
    cdf = np.array([standard_normal_cdf(z) for z in edges])
    denominator = cdf[-1] - cdf[0]
    if abs(denominator) < 1e-300:
        raise ValueError("distribution mass entirely outside [0,N]")
    probs = np.diff(cdf) / denominator
    # clip the occasional -0.0 / tiny negative from CDF differencing
    return np.maximum(probs, 0.0)


def multinomial_pmf(spec: MultinomialSpec, counts: np.ndarray) -> float:
    """P(X = counts) for the multinomial, computed in log space.

    Zero-probability categories with positive counts yield exactly 0.
    """
    counts = np.asarray(counts)
    if counts.shape != (spec.size,):
        raise ValueError("support violation: counts length does not match spec")
    if np.any(counts < 0) or int(counts.sum()) != spec.volume:
        raise ValueError("support violation: counts must be nonnegative and sum to volume")
    probs = spec.probs()
    if np.any((probs == 0.0) & (counts > 0)):
        return 0.0
    log_pmf = math.lgamma(spec.volume + 1)
    for z, p in zip(counts, probs):
        log_pmf -= math.lgamma(int(z) + 1)
        if z > 0:
            log_pmf += z * math.log(p)
    return math.exp(log_pmf)


def sample_induction(spec: GroupSpec, rng: np.random.Generator) -> np.ndarray:
    """One per-destination count vector summing to the spec's volume."""
    return rng.multinomial(spec.volume, spec.probs())


def estimate_saa(samples: list[np.ndarray]) -> MultinomialSpec:
    """Sample-average-approximation frequency estimate from count vectors."""
    if not samples:
        raise ValueError("estimate_saa requires at least one sample")
    stacked = np.asarray(samples, dtype=np.int64)
    if stacked.ndim != 2:
        raise ValueError("samples must share a common length")
    totals = stacked.sum(axis=1)
    if np.any(totals != totals[0]):
        raise ValueError("samples must share the same total volume")
    volume = int(totals[0])
    pooled = stacked.sum(axis=0)
    grand = int(pooled.sum())
    if grand == 0:
        probs = np.full(stacked.shape[1], 1.0 / stacked.shape[1])
    else:
        probs = pooled / grand
    return MultinomialSpec(probs_vector=tuple(float(p) for p in probs), volume=volume)


@dataclass(frozen=True)
class GroupSet:
    """Ordered family of induction distributions indexing the ambiguity set."""

    kind: str
    groups: tuple[GroupSpec, ...]

    def __post_init__(self):
        if not self.groups:
            raise ValueError("group set must contain at least one group")
        sizes = {g.size for g in self.groups}
        volumes = {g.volume for g in self.groups}
        if len(sizes) != 1:
            raise ValueError("all groups must share the same number of destinations")
        if len(volumes) != 1:
            raise ValueError("all groups must share the same volume")
        cached = []
        for g in self.groups:
            p = g.probs()
            p.setflags(write=False)
            cached.append(p)
        object.__setattr__(self, "_probs_cache", tuple(cached))

    @property
    def size(self) -> int:
        """Number of groups m."""
        return len(self.groups)

    @property
    def n_destinations(self) -> int:
        return self.groups[0].size

    @property
    def volume(self) -> int:
        return self.groups[0].volume

    def probs(self, group_index: int) -> np.ndarray:
        """Probability vector of group `group_index` (0-based); read-only view."""
        return self._probs_cache[group_index]

    def sample(self, group_index: int, rng: np.random.Generator) -> np.ndarray:
        return rng.multinomial(self.volume, self._probs_cache[group_index])


APPENDIX_B_MEANS = (-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0)


def build_group_set(kind: str, params: dict | None = None) -> GroupSet:
    """Construct a group set.

    kind="appendix-b": the 9-group family of discretized truncated
    normals with means -4..4, sigma=2, N=20 destinations, V=1200
    packages per step.

    kind="custom": params={"groups": [GroupSpec, ...]}.
    """
    if kind == "appendix-b":
        groups = tuple(
            TruncatedNormalSpec(mu=mu, sigma=2.0, n_destinations=20, volume=1200)
            for mu in APPENDIX_B_MEANS
        )
        return GroupSet(kind=kind, groups=groups)
    if kind == "custom":
        if not params or "groups" not in params:
            raise ValueError("custom group set requires params={'groups': [...]}")
        return GroupSet(kind=kind, groups=tuple(params["groups"]))
    raise ValueError(f"unknown group set kind: {kind!r}")


def mixture_distribution(group_set: GroupSet, weights: np.ndarray) -> np.ndarray:
    """Convex combination sum_g q_g * probs(g) of the group distributions.

    At a simplex vertex the corresponding group's vector is returned as a
    copy, with no arithmetic applied.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (group_set.size,):
        raise ValueError("weight vector length must equal the number of groups")
    _check_simplex(weights)
    vertex = np.flatnonzero(weights == 1.0)
    if vertex.size == 1 and float(weights.sum()) == 1.0:
        return group_set.probs(int(vertex[0])).copy()
    mixture = np.zeros(group_set.n_destinations)
    for q, group in zip(weights, group_set.groups):
        mixture += q * group.probs()
    return mixture


def group_set_to_json(group_set: GroupSet) -> str:
    """Serialize to the documented JSON schema (1-based group order)."""
    groups = []
    for g in group_set.groups:
        if isinstance(g, TruncatedNormalSpec):
            groups.append(
                {"mu": g.mu, "sigma": g.sigma, "n": g.n_destinations, "volume": g.volume}
            )
        else:
            groups.append({"probs": list(g.probs_vector), "volume": g.volume})
    return json.dumps({"kind": group_set.kind, "groups": groups}, indent=2)


def group_set_from_json(text: str) -> GroupSet:
    doc = json.loads(text)
    groups: list[GroupSpec] = []
    for entry in doc["groups"]:
        if "mu" in entry:
            groups.append(
                TruncatedNormalSpec(
                    mu=float(entry["mu"]),
                    sigma=float(entry["sigma"]),
                    n_destinations=int(entry["n"]),
                    volume=int(entry["volume"]),
                )
            )
        else:
            groups.append(
                MultinomialSpec(
                    probs_vector=tuple(float(p) for p in entry["probs"]),
                    volume=int(entry["volume"]),
                )
            )
    return GroupSet(kind=str(doc.get("kind", "custom")), groups=tuple(groups))
