"""Synthetic populations: power-law degrees, erased configuration networks,
stratum labels and cyclic extension of observed degree sequences."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import stats

from .errors import EmptySequence, InfeasibleSequence, InvalidSpec, SizeMismatch
from .estimators import DegreeMoments, degree_moments  # noqa: F401  (re-exported)
from .seeding import as_generator


@dataclass(frozen=True)
class PowerLawSpec:
    """Discrete power law p_n ~ n^-exponent on [d_min, d_max].

    ``d_max=None`` means unbounded support, which needs exponent > 1.
    """

    exponent: float
    d_min: int = 1
    d_max: Optional[int] = None

    def validate(self) -> None:
        if self.d_min < 1:
            raise InvalidSpec("d_min must be >= 1")
        if self.d_max is None:
            if self.exponent <= 1:
                raise InvalidSpec("unbounded power law needs exponent > 1")
        elif self.d_max < self.d_min:
            raise InvalidSpec(f"d_max={self.d_max} < d_min={self.d_min}")

    def support(self) -> np.ndarray:
        if self.d_max is None:
            raise InvalidSpec("unbounded support has no finite pmf table")
        return np.arange(self.d_min, self.d_max + 1)

    def pmf(self) -> np.ndarray:
        n = self.support().astype(float)
        p = n ** (-self.exponent)
        return p / p.sum()

    def moments(self) -> DegreeMoments:
        """Exact moments by summing over the truncated support."""
        n = self.support().astype(float)
        p = self.pmf()
        return DegreeMoments(z=float(p @ n), m2=float(p @ (n * n)))


@dataclass
class Network:
    """Simple undirected graph stored as sorted adjacency lists."""

    adjacency: List[List[int]]

    @property
    def n_nodes(self) -> int:
        return len(self.adjacency)

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)

    def edges(self) -> List[tuple]:
        return [(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j]

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Network":
        adj = [set() for _ in range(n_nodes)]
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                continue
            adj[i].add(j)
            adj[j].add(i)
        return cls([sorted(s) for s in adj])

    def check(self) -> None:
        for i, nbrs in enumerate(self.adjacency):
            if i in nbrs:
                raise AssertionError(f"self-loop at {i}")
            if len(set(nbrs)) != len(nbrs):
                raise AssertionError(f"multi-edge at {i}")
            for j in nbrs:
                if i not in self.adjacency[j]:
                    raise AssertionError(f"asymmetric edge {i}-{j}")


@dataclass
class Population:
    degrees: np.ndarray
    strata: Optional[np.ndarray] = None
    network: Optional[Network] = None

    def __post_init__(self):
        self.degrees = np.asarray(self.degrees, dtype=np.int64)
        if self.degrees.ndim != 1 or self.degrees.size == 0:
            raise EmptySequence("population needs at least one individual")
        if self.strata is not None:
            self.strata = np.asarray(self.strata, dtype=object)
            if self.strata.shape != self.degrees.shape:
                raise SizeMismatch("strata length differs from population size")
        if self.network is not None and self.network.n_nodes != self.size:
            raise SizeMismatch("network node count differs from population size")

    @property
    def size(self) -> int:
        return int(self.degrees.size)

    def moments(self) -> DegreeMoments:
        return degree_moments(self.degrees)


def sample_power_law_degrees(n: int, spec: PowerLawSpec, rng_seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    spec.validate()
    rng = as_generator(rng_seed)
    if spec.d_max is None:
        # rejection from a zeta law shifted to d_min
        out = np.empty(0, dtype=np.int64)
        while out.size < n:
            draw = stats.zipf.rvs(spec.exponent, size=2 * (n - out.size), random_state=rng)
            out = np.concatenate([out, draw[draw >= spec.d_min]])
        return out[:n].astype(np.int64)
    support = spec.support()
    cdf = np.cumsum(spec.pmf())
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    return support[np.minimum(idx, support.size - 1)].astype(np.int64)


def repair_parity(degrees, rng_seed=None) -> np.ndarray:
    """Make the degree sum even by adding one to a uniformly chosen node."""
    d = np.array(degrees, dtype=np.int64)
    if d.sum() % 2 == 1:
        rng = as_generator(rng_seed)
        d[rng.integers(d.size)] += 1
    return d


def build_configuration_network(degrees, rng_seed=None) -> Network:
    """Erased configuration model.

    Half-edges are paired uniformly at random; self-loops are dropped and
    parallel edges collapsed. An odd degree sum is first repaired with
    ``repair_parity`` using the same generator.
    """
    rng = as_generator(rng_seed)
    d = np.asarray(degrees, dtype=np.int64)
    if d.size == 0:
        raise EmptySequence("degree sequence is empty")
    if np.any(d < 1):
        raise InfeasibleSequence("all degrees must be >= 1")
    d = repair_parity(d, rng)
    n = d.size
    if d.max() >= n:
        raise InfeasibleSequence(f"max degree {d.max()} >= number of nodes {n}")
    stubs = np.repeat(np.arange(n), d)
    rng.shuffle(stubs)
    u, v = stubs[0::2], stubs[1::2]
    keep = u != v
    u, v = u[keep], v[keep]
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    pairs = np.unique(lo * n + hi)
    lo, hi = pairs // n, pairs % n
    src = np.concatenate([lo, hi])
    dst = np.concatenate([hi, lo])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    bounds = np.searchsorted(src, np.arange(n + 1))
    adjacency = [dst[bounds[i]:bounds[i + 1]].tolist() for i in range(n)]
    return Network(adjacency)


def power_law_population(
    n: int, spec: PowerLawSpec, rng_seed=None, with_network: bool = True
) -> Population:
    """Degrees from ``spec`` plus (optionally) an erased configuration network.

    The population keeps the nominal, parity-repaired degree sequence as the
    individuals' degree covariate; the realized network degrees can be lower
    where edges were erased.
    """
    rng = as_generator(rng_seed)
    degrees = repair_parity(sample_power_law_degrees(n, spec, rng), rng)
    network = build_configuration_network(degrees, rng) if with_network else None
    return Population(degrees=degrees, network=network)


def extend_degree_sequence(observed: Sequence[int], target_len: int) -> np.ndarray:
    obs = np.asarray(observed, dtype=np.int64)
    if obs.size == 0:
        raise EmptySequence("observed degree sequence is empty")
    if target_len < 1:
        raise ValueError("target_len must be >= 1")
    return np.resize(obs, target_len)


def assign_strata(
    pop: Population,
    sizes: Sequence[int],
    rng_seed=None,
    labels: Optional[Sequence[str]] = None,
    degree_correlation: float = 0.0,
) -> Population:
    """Randomly partition the population into groups of exactly ``sizes``.

    With ``degree_correlation = 0`` the partition is uniform and independent
    of degree. Positive values push high-degree individuals towards the
    first labels, negative values towards the last ones.
    """
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise SizeMismatch("stratum sizes must be non-negative")
    if sum(sizes) != pop.size:
        raise SizeMismatch(f"stratum sizes sum to {sum(sizes)}, population has {pop.size}")
    if labels is None:
        labels = [f"s{i}" for i in range(len(sizes))]
    if len(labels) != len(sizes):
        raise SizeMismatch("need one label per stratum size")
    if not -1.0 <= degree_correlation <= 1.0:
        raise ValueError("degree_correlation must lie in [-1, 1]")
    rng = as_generator(rng_seed)
    noise = rng.standard_normal(pop.size)
    if degree_correlation != 0.0:
        ranks = stats.rankdata(pop.degrees)
        zr = (ranks - ranks.mean()) / (ranks.std() or 1.0)
        score = -degree_correlation * zr + np.sqrt(1 - degree_correlation ** 2) * noise
    else:
        score = noise
    order = np.argsort(score, kind="stable")
    strata = np.empty(pop.size, dtype=object)
    start = 0
    for label, size in zip(labels, sizes):
        strata[order[start:start + size]] = label
        start += size
    return replace(pop, strata=strata)


def discretized_normal_degrees(
    n: int, mean: float, sd: float, rng_seed=None, minimum: int = 1
) -> np.ndarray:
    """Rounded normal draws clipped below at ``minimum``."""
    rng = as_generator(rng_seed)
    d = np.rint(rng.normal(mean, sd, size=n)).astype(np.int64)
    return np.maximum(d, minimum)
