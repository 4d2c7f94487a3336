"""Declarative experiment runners.

Seeds for every network and every run are derived from the master seed and
the cell's index path, and runs are gathered back in index order, so the
output is identical for any worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import SampleTooLarge, ZeroRecapture
from .estimators import (
    CrossCounts,
    RecaptureObservation,
    adjusted_ht,
    naive_lp,
    round_half_up,
)
from .population import (
    Population,
    PowerLawSpec,
    assign_strata,
    build_configuration_network,
    discretized_normal_degrees,
    extend_degree_sequence,
    power_law_population,
)
from .sampling import (
    SampleMembership,
    bootstrap_subsample,
    cross_tabulate,
    sample_degree_biased,
    sample_uniform,
    simulate_rds,
    stratum_capture,
    weights_for,
)
from .seeding import derive_rng

DEFAULT_LAMBDAS = (2.0, 2.25, 2.5, 2.75, 3.0, 3.5, 4.0, 5.0)
UGANDA_AGE_LABELS = ("0-19", "20-29", "30-39", "40-49", "50+")
# published sizes sum to 2401; the last group absorbs the missing individual
UGANDA_AGE_SIZES = (47, 484, 660, 496, 715)
WORKERS_ENV = "CAPRECAP_WORKERS"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """Ordered map; a process pool when ``workers > 1``."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


@dataclass(frozen=True)
class EstimatorStats:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "EstimatorStats":
        v = [float(x) for x in values]
        if not v:
            return cls(math.nan, math.nan, 0)
        mean = math.fsum(v) / len(v)
        var = math.fsum((x - mean) ** 2 for x in v) / (len(v) - 1) if len(v) > 1 else 0.0
        return cls(mean, math.sqrt(var), len(v))


def estimate_run(capture: SampleMembership, recapture: SampleMembership,
                 pop: Population, covariate="degree") -> Optional[Tuple[float, float]]:
    """(naive, adjusted) for one capture/recapture pair; None if a11 = 0."""
    counts = cross_tabulate(capture, recapture)
    if counts.a11 == 0:
        return None
    obs = weights_for(capture, recapture, pop, covariate)
    return naive_lp(counts).estimate, adjusted_ht(obs).estimate


def _summarize(results: Iterable[Optional[Tuple[float, float]]]) -> Tuple[EstimatorStats, EstimatorStats, int]:
    results = list(results)
    good = [r for r in results if r is not None]
    return (
        EstimatorStats.of([r[0] for r in good]),
        EstimatorStats.of([r[1] for r in good]),
        len(results) - len(good),
    )


# ---------------------------------------------------------------------------
# power-law lambda sweep


@dataclass(frozen=True)
class SweepConfig:
    lambdas: Tuple[float, ...] = DEFAULT_LAMBDAS
    networks: int = 20
    runs: int = 50
    N: int = 2500
    s1: int = 100
    s2: int = 100
    max_recruits: int = 3
    d_min: int = 3
    d_max: Optional[int] = None  # None -> N - 1
    capture: str = "degree"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(x) for x in self.lambdas))
        if not self.lambdas:
            raise ValueError("lambda grid is empty")
        for name in ("networks", "runs", "N", "s1", "s2", "max_recruits", "d_min"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if max(self.s1, self.s2) > self.N:
            raise SampleTooLarge("sample sizes exceed N")
        if self.capture not in ("degree", "uniform"):
            raise ValueError("capture must be 'degree' or 'uniform'")

    @property
    def effective_d_max(self) -> int:
        return self.N - 1 if self.d_max is None else self.d_max

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambdas"] = list(self.lambdas)
        return d


@dataclass
class LambdaCell:
    lam: float
    naive: EstimatorStats
    adjusted: EstimatorStats
    degenerate_runs: int
    heterogeneity: float  # mean m2/z^2 over the cell's networks
    runs: List[Optional[Tuple[float, float]]] = field(default_factory=list, repr=False)

    def rel_bias(self, N: int) -> Tuple[float, float]:
        return (self.naive.mean - N) / N, (self.adjusted.mean - N) / N


@dataclass
class SweepSummary:
    config: SweepConfig
    cells: List[LambdaCell]

    def rows(self) -> List[dict]:
        out = []
        for c in self.cells:
            for name, st in (("naive", c.naive), ("adjusted", c.adjusted)):
                out.append({"lambda": c.lam, "estimator": name, "mean": st.mean,
                            "std": st.std, "degenerate_runs": c.degenerate_runs})
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "cells": [
                {"lambda": c.lam, "naive": asdict(c.naive), "adjusted": asdict(c.adjusted),
                 "degenerate_runs": c.degenerate_runs, "heterogeneity": c.heterogeneity}
                for c in self.cells
            ],
        }


def _sweep_network_task(args) -> Tuple[float, List[Optional[Tuple[float, float]]]]:
    cfg, li, ni = args
    spec = PowerLawSpec(cfg.lambdas[li], cfg.d_min, cfg.effective_d_max)
    pop = power_law_population(cfg.N, spec, derive_rng(cfg.seed, li, ni))
    out = []
    for ri in range(cfg.runs):
        rng = derive_rng(cfg.seed, li, ni, ri)
        if cfg.capture == "degree":
            capture = sample_degree_biased(pop, cfg.s1, rng)
        else:
            capture = sample_uniform(pop, cfg.s1, rng)
        recapture, _ = simulate_rds(pop.network, cfg.s2, cfg.max_recruits, rng)
        out.append(estimate_run(capture, recapture, pop))
    return pop.moments().heterogeneity, out


def run_lambda_sweep(config: SweepConfig, workers: int = 1) -> SweepSummary:
    tasks = [(config, li, ni) for li in range(len(config.lambdas)) for ni in range(config.networks)]
    results = parallel_map(_sweep_network_task, tasks, workers)
    cells = []
    for li, lam in enumerate(config.lambdas):
        chunk = results[li * config.networks:(li + 1) * config.networks]
        runs = [r for _, rs in chunk for r in rs]
        naive, adj, degenerate = _summarize(runs)
        het = math.fsum(h for h, _ in chunk) / len(chunk)
        cells.append(LambdaCell(lam, naive, adj, degenerate, het, runs))
    return SweepSummary(config, cells)


# ---------------------------------------------------------------------------
# Uganda-like population and its experiments


def uganda_like_population(
    N: int = 2402,
    rds_part: int = 927,
    srs_size: int = 162,
    mean_degree: float = 12.1,
    sd_degree: float = 6.0,
    strata_sizes: Optional[Sequence[int]] = UGANDA_AGE_SIZES,
    strata_labels: Optional[Sequence[str]] = UGANDA_AGE_LABELS,
    degree_correlation: float = 0.0,
    seed: int = 0,
) -> Population:
    """Synthetic analogue of a village census with known size.

    ``rds_part`` individuals get their own discretized-normal degrees; the
    remaining ``N - rds_part`` get a short SRS degree sequence of length
    ``srs_size`` repeated cyclically, mimicking how unobserved degrees were
    filled in. A configuration network and age-like strata are attached.
    """
    if not 0 <= rds_part <= N:
        raise ValueError("rds_part must lie in [0, N]")
    rng = derive_rng(seed, 0)
    own = discretized_normal_degrees(rds_part, mean_degree, sd_degree, rng)
    srs = discretized_normal_degrees(srs_size, mean_degree, sd_degree, rng)
    rest = extend_degree_sequence(srs, N - rds_part) if N > rds_part else np.empty(0, np.int64)
    degrees = np.concatenate([own, rest]).astype(np.int64)
    degrees = np.minimum(degrees, N - 1)
    net_rng = derive_rng(seed, 1)
    if degrees.sum() % 2:
        degrees[net_rng.integers(N)] += 1
    pop = Population(degrees=degrees, network=build_configuration_network(degrees, net_rng))
    if strata_sizes is not None:
        pop = assign_strata(pop, strata_sizes, derive_rng(seed, 2), strata_labels,
                            degree_correlation)
    return pop


@dataclass
class StudySummary:
    label: str
    capture_size: int
    naive: EstimatorStats
    adjusted: EstimatorStats
    degenerate_runs: int
    capture_kind: str = "stratum"

    def rows(self) -> List[dict]:
        return [
            {"group": self.label, "capture_kind": self.capture_kind,
             "capture_size": self.capture_size, "estimator": name,
             "mean": st.mean, "std": st.std, "degenerate_runs": self.degenerate_runs}
            for name, st in (("naive", self.naive), ("adjusted", self.adjusted))
        ]


def _rds_base(pop: Population, rds_size: int, max_recruits: int, seed: int) -> SampleMembership:
    if pop.network is None:
        raise ValueError("population needs a network for RDS recapture")
    membership, _ = simulate_rds(pop.network, rds_size, max_recruits, derive_rng(seed, 0))
    return membership


def run_stratum_experiment(
    pop: Population,
    label: str,
    recapture_size: int,
    replicates: int,
    seed: int = 0,
    rds_size: Optional[int] = 927,
    max_recruits: int = 3,
) -> StudySummary:
    """Stratum as capture list, RDS (sub)sample as recapture.

    With ``rds_size`` set, one RDS sample of that size is drawn and each
    replicate takes a uniform subsample of ``recapture_size`` from it.
    With ``rds_size=None`` every replicate runs a fresh RDS of
    ``recapture_size``.
    """
    capture = stratum_capture(pop, label)
    base = _rds_base(pop, rds_size, max_recruits, seed) if rds_size is not None else None
    results = []
    for r in range(replicates):
        rng = derive_rng(seed, 1, r)
        if base is not None:
            recapture = bootstrap_subsample(base, recapture_size, rng)
        else:
            recapture, _ = simulate_rds(pop.network, recapture_size, max_recruits, rng)
        results.append(estimate_run(capture, recapture, pop))
    naive, adj, degenerate = _summarize(results)
    return StudySummary(str(label), capture.size, naive, adj, degenerate)


def run_capture_size_sweep(
    pop: Population,
    sizes: Sequence[int],
    capture_kinds: Sequence[str] = ("uniform", "degree"),
    recapture_size: int = 200,
    replicates: int = 50,
    seed: int = 0,
    rds_size: int = 927,
    max_recruits: int = 3,
) -> List[StudySummary]:
    """Capture by SRS or degree-biased sampling of each size, recapture by
    uniform subsample of one fixed RDS sample."""
    for s in sizes:
        if s > pop.size:
            raise SampleTooLarge(f"capture size {s} exceeds N={pop.size}")
    base = _rds_base(pop, rds_size, max_recruits, seed)
    out = []
    for ki, kind in enumerate(capture_kinds):
        if kind not in ("uniform", "degree"):
            raise ValueError(f"unknown capture kind {kind!r}")
        sampler = sample_uniform if kind == "uniform" else sample_degree_biased
        for si, size in enumerate(sizes):
            results = []
            for r in range(replicates):
                rng = derive_rng(seed, 2, ki, si, r)
                capture = sampler(pop, int(size), rng)
                recapture = bootstrap_subsample(base, recapture_size, rng)
                results.append(estimate_run(capture, recapture, pop))
            naive, adj, degenerate = _summarize(results)
            out.append(StudySummary(f"{kind}-{size}", int(size), naive, adj, degenerate, kind))
    return out


# ---------------------------------------------------------------------------
# published count tables


@dataclass(frozen=True)
class CountTableRow:
    group: str
    capture_size: int
    recapture_size: int
    recaptured: int
    weights: Optional[Tuple[float, ...]] = None
    in_first: Optional[Tuple[bool, ...]] = None

    def __post_init__(self):
        if self.recaptured > min(self.capture_size, self.recapture_size):
            raise ValueError(f"{self.group}: recaptured exceeds a sample size")
        if min(self.capture_size, self.recapture_size, self.recaptured) < 0:
            raise ValueError(f"{self.group}: counts must be non-negative")
        if (self.weights is None) != (self.in_first is None):
            raise ValueError(f"{self.group}: weights and in_first go together")
        if self.weights is not None:
            if len(self.weights) != self.recapture_size:
                raise ValueError(f"{self.group}: need one weight per recapture member")
            if sum(bool(f) for f in self.in_first) != self.recaptured:
                raise ValueError(f"{self.group}: in_first flags disagree with recaptured")

    @property
    def counts(self) -> CrossCounts:
        return CrossCounts(self.recaptured, self.capture_size - self.recaptured,
                           self.recapture_size - self.recaptured)


@dataclass
class CountTableResult:
    group: str
    naive: Optional[float]
    adjusted: Optional[float]
    error: Optional[str] = None

    @property
    def naive_rounded(self) -> Optional[int]:
        return None if self.naive is None else round_half_up(self.naive)

    @property
    def adjusted_rounded(self) -> Optional[int]:
        return None if self.adjusted is None else round_half_up(self.adjusted)


def run_count_table(rows: Sequence[CountTableRow]) -> List[CountTableResult]:
    out = []
    for row in rows:
        try:
            naive = naive_lp(row.counts).estimate
            adjusted = None
            if row.weights is not None:
                obs = RecaptureObservation.from_arrays(row.capture_size, row.weights, row.in_first)
                adjusted = adjusted_ht(obs).estimate
            out.append(CountTableResult(row.group, naive, adjusted))
        except ZeroRecapture as exc:
            out.append(CountTableResult(row.group, None, None, f"ZeroRecapture: {exc}"))
    return out


ENROLLMENT_ROWS = (
    CountTableRow("White", 6716, 378, 269),
    CountTableRow("Asian", 2191, 378, 58),
    CountTableRow("Hispanic", 748, 378, 8),
    CountTableRow("Black", 712, 378, 14),
    CountTableRow("non US", 1073, 378, 14),
)
