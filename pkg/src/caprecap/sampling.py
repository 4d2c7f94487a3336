"""Sampling stages: SRS, degree-biased successive sampling, RDS-like chain
recruitment, stratum lists and bootstrap subsamples."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import (
    Exhausted,
    MissingCovariate,
    SampleTooLarge,
    SizeMismatch,
    UnknownStratum,
)
from .estimators import CrossCounts, RecaptureObservation
from .population import Network, Population
from .seeding import as_generator


class Stage(str, enum.Enum):
    CAPTURE = "Capture"
    RECAPTURE = "Recapture"


class SchemeKind(str, enum.Enum):
    UNIFORM = "Uniform"
    DEGREE_PROPORTIONAL = "DegreeProportional"
    RDS_WALK = "RdsWalk"
    STRATUM_LIST = "StratumList"


@dataclass(frozen=True)
class SamplingScheme:
    kind: SchemeKind
    sample_size: Optional[int] = None
    max_recruits: int = 3
    stratum: Optional[str] = None

    def __post_init__(self):
        if self.kind is SchemeKind.STRATUM_LIST:
            if self.stratum is None:
                raise ValueError("StratumList scheme needs a stratum label")
        elif self.sample_size is None or self.sample_size < 1:
            raise ValueError(f"{self.kind.value} scheme needs a positive sample_size")
        if self.max_recruits < 1:
            raise ValueError("max_recruits must be >= 1")


@dataclass
class SampleMembership:
    flags: np.ndarray
    stage: Stage = Stage.CAPTURE

    def __post_init__(self):
        self.flags = np.asarray(self.flags, dtype=bool)

    @classmethod
    def from_indices(cls, n: int, idx, stage: Stage = Stage.CAPTURE) -> "SampleMembership":
        flags = np.zeros(n, dtype=bool)
        flags[np.asarray(idx, dtype=np.int64)] = True
        return cls(flags, stage)

    @property
    def population_size(self) -> int:
        return int(self.flags.size)

    @property
    def size(self) -> int:
        return int(self.flags.sum())

    @property
    def members(self) -> np.ndarray:
        return np.flatnonzero(self.flags)

    def as_stage(self, stage: Stage) -> "SampleMembership":
        return SampleMembership(self.flags.copy(), stage)


@dataclass(frozen=True)
class Recruit:
    recruit_id: int
    recruiter_id: Optional[int]  # None marks a seed
    wave: int
    tree_id: int


@dataclass
class RecruitmentForest:
    recruits: List[Recruit] = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len({r.tree_id for r in self.recruits})

    def recruit_counts(self) -> dict:
        counts: dict = {}
        for r in self.recruits:
            if r.recruiter_id is not None:
                counts[r.recruiter_id] = counts.get(r.recruiter_id, 0) + 1
        return counts

    def tree_members(self, tree_id: int) -> List[int]:
        return [r.recruit_id for r in self.recruits if r.tree_id == tree_id]


def _check_size(n: int, N: int) -> None:
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if n > N:
        raise SampleTooLarge(f"cannot draw {n} from {N} without replacement")


def sample_uniform(pop: Population, n: int, rng_seed=None,
                   stage: Stage = Stage.CAPTURE) -> SampleMembership:
    _check_size(n, pop.size)
    rng = as_generator(rng_seed)
    return SampleMembership.from_indices(pop.size, rng.choice(pop.size, n, replace=False), stage)


def successive_sample(weights, n: int, rng_seed=None) -> np.ndarray:
    """Indices of a weighted sample without replacement, in draw order.

    Each draw picks an unsampled unit with probability proportional to its
    weight among the units still unsampled. Implemented with exponential
    race keys (``E_i / w_i`` with ``E_i ~ Exp(1)``): the order statistics of
    the keys have exactly the successive-sampling law.
    """
    w = np.asarray(weights, dtype=float)
    _check_size(n, w.size)
    if np.any(~(w > 0)):
        raise ValueError("weights must be positive")
    rng = as_generator(rng_seed)
    keys = rng.standard_exponential(w.size) / w
    head = np.argpartition(keys, n - 1)[:n] if n < w.size else np.arange(w.size)
    return head[np.argsort(keys[head], kind="stable")]


def sample_degree_biased(pop: Population, n: int, rng_seed=None,
                         stage: Stage = Stage.CAPTURE) -> SampleMembership:
    idx = successive_sample(pop.degrees, n, rng_seed)
    return SampleMembership.from_indices(pop.size, idx, stage)


def simulate_rds(
    network: Network,
    target_size: int,
    max_recruits: int = 3,
    rng_seed=None,
    seed_node: Optional[int] = None,
    seed_selection: str = "uniform",
    max_restarts: int = 10,
) -> Tuple[SampleMembership, RecruitmentForest]:
    """RDS-like chain recruitment on an explicit network.

    The frontier is the multiset of edges (recruiter, candidate) with the
    recruiter sampled and below ``max_recruits`` and the candidate not yet
    sampled. Each step draws one such edge uniformly, so a candidate is
    chosen proportionally to its number of eligible sampled neighbours and
    credited to one of them uniformly. When the frontier empties a fresh seed
    starts a new tree; after ``max_restarts`` restarts ``Exhausted`` is raised.

    ``seed_selection`` is ``"uniform"`` or ``"degree"`` and applies to every
    seed, including restarts; ``seed_node`` forces the first seed only.
    """
    n = network.n_nodes
    _check_size(target_size, n)
    if max_recruits < 1:
        raise ValueError("max_recruits must be >= 1")
    if seed_selection not in ("uniform", "degree"):
        raise ValueError(f"unknown seed_selection {seed_selection!r}")
    rng = as_generator(rng_seed)
    adjacency = network.adjacency
    sampled = np.zeros(n, dtype=bool)
    n_recruits = np.zeros(n, dtype=np.int64)
    wave = np.zeros(n, dtype=np.int64)
    forest = RecruitmentForest()
    frontier: List[Tuple[int, int]] = []
    count = 0
    tree_id = -1

    def add(node: int, recruiter: Optional[int]) -> None:
        nonlocal count
        sampled[node] = True
        count += 1
        if recruiter is not None:
            n_recruits[recruiter] += 1
            wave[node] = wave[recruiter] + 1
        forest.recruits.append(Recruit(node, recruiter, int(wave[node]), tree_id))
        for nb in adjacency[node]:
            if not sampled[nb]:
                frontier.append((node, nb))

    def pick_seed() -> int:
        pool = np.flatnonzero(~sampled)
        if seed_selection == "degree":
            deg = np.array([len(adjacency[i]) for i in pool], dtype=float) + 1e-300
            return int(pool[rng.choice(pool.size, p=deg / deg.sum())])
        return int(pool[rng.integers(pool.size)])

    restarts = -1
    while count < target_size:
        # drop stale frontier entries lazily at draw time
        while frontier:
            k = int(rng.integers(len(frontier)))
            recruiter, cand = frontier[k]
            if sampled[cand] or n_recruits[recruiter] >= max_recruits:
                frontier[k] = frontier[-1]
                frontier.pop()
                continue
            frontier[k] = frontier[-1]
            frontier.pop()
            add(cand, recruiter)
            if count >= target_size:
                break
        if count >= target_size:
            break
        restarts += 1
        if restarts > max_restarts:
            raise Exhausted(
                f"frontier empty after {count} recruits and {max_restarts} restarts"
            )
        tree_id += 1
        if tree_id == 0 and seed_node is not None:
            if not 0 <= seed_node < n:
                raise ValueError(f"seed_node {seed_node} out of range")
            node = int(seed_node)
        else:
            node = pick_seed()
        add(node, None)

    return SampleMembership(sampled, Stage.RECAPTURE), forest


def stratum_capture(pop: Population, label) -> SampleMembership:
    if pop.strata is None:
        raise UnknownStratum("population has no strata assigned")
    flags = pop.strata == label
    if not flags.any():
        raise UnknownStratum(f"no individual carries stratum label {label!r}")
    return SampleMembership(flags, Stage.CAPTURE)


def bootstrap_subsample(membership: SampleMembership, n: int, rng_seed=None) -> SampleMembership:
    members = membership.members
    _check_size(n, members.size)
    rng = as_generator(rng_seed)
    chosen = rng.choice(members, n, replace=False)
    return SampleMembership.from_indices(membership.population_size, chosen, membership.stage)


def cross_tabulate(capture: SampleMembership, recapture: SampleMembership) -> CrossCounts:
    if capture.population_size != recapture.population_size:
        raise SizeMismatch("memberships refer to populations of different size")
    c, r = capture.flags, recapture.flags
    return CrossCounts(
        a11=int(np.count_nonzero(c & r)),
        a10=int(np.count_nonzero(c & ~r)),
        a01=int(np.count_nonzero(~c & r)),
    )


def weights_for(
    capture: SampleMembership,
    recapture: SampleMembership,
    pop: Population,
    covariate="degree",
) -> RecaptureObservation:
    """Pair each second-stage member with its covariate weight and first-stage flag.

    ``covariate`` is ``"degree"`` or a per-individual array of custom values;
    NaN entries count as missing.
    """
    if capture.population_size != recapture.population_size or recapture.population_size != pop.size:
        raise SizeMismatch("memberships and population sizes disagree")
    members = recapture.members
    if isinstance(covariate, str):
        if covariate != "degree":
            raise ValueError(f"unknown covariate {covariate!r}")
        values = pop.degrees.astype(float)
    else:
        values = np.asarray(covariate, dtype=float)
        if values.shape != (pop.size,):
            raise MissingCovariate("custom covariate must have one value per individual")
    w = values[members]
    if np.any(np.isnan(w)):
        missing = members[np.isnan(w)]
        raise MissingCovariate(f"no covariate for individuals {missing[:5].tolist()}")
    return RecaptureObservation.from_arrays(capture.size, w, capture.flags[members])


def scheme_sample(scheme: SamplingScheme, pop: Population, rng_seed=None,
                  stage: Stage = Stage.CAPTURE) -> SampleMembership:
    """Dispatch a SamplingScheme to the matching sampler."""
    if scheme.kind is SchemeKind.UNIFORM:
        return sample_uniform(pop, scheme.sample_size, rng_seed, stage)
    if scheme.kind is SchemeKind.DEGREE_PROPORTIONAL:
        return sample_degree_biased(pop, scheme.sample_size, rng_seed, stage)
    if scheme.kind is SchemeKind.RDS_WALK:
        if pop.network is None:
            raise ValueError("RDS scheme needs a population with a network")
        m, _ = simulate_rds(pop.network, scheme.sample_size, scheme.max_recruits, rng_seed)
        return m.as_stage(stage)
    return stratum_capture(pop, scheme.stratum).as_stage(stage)
