"""Monte Carlo checks of the estimator theory.

The checks run in the independent-inclusion model by default: individual k
enters the first stage with probability beta_k and the second stage with
probability alpha2 * w_k, where w_k is the normalized covariate weight.
``model="fixed_size"`` swaps both stages for successive sampling with the
same weights and fixed sample sizes, which is how the experiments sample,
so the two can be compared.

Replicates are simulated in fixed-size chunks with seeds derived from
(master seed, stream, chunk index), so results do not depend on how the
work is scheduled. The recapture stream is separate from the capture
stream: two scenarios differing only in their first stage see identical
recapture draws.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import AllRunsDegenerate, InvalidNormalization
from .estimators import DegreeMoments, degree_moments, lp_expectation_bounds
from .population import PowerLawSpec, sample_power_law_degrees
from .seeding import derive_rng

CHUNK = 256
CAPTURE_STREAM = 1
RECAPTURE_STREAM = 2
CAPTURE_KINDS = ("uniform", "degree", "top_degree")
RECAPTURE_KINDS = ("uniform", "degree")


@dataclass(frozen=True)
class DegreeModel:
    """How to produce a degree sequence of length N.

    kind is one of:
      regular     every degree equals ``degree``
      two_point   ``round(p_high * N)`` individuals get ``high``, the rest ``low``
      power_law   iid draws from PowerLawSpec(exponent, d_min, d_max)
      explicit    the given ``values`` (N must match)
    """

    kind: str = "regular"
    degree: int = 3
    low: int = 1
    high: int = 3
    p_high: float = 0.5
    exponent: float = 2.5
    d_min: int = 3
    d_max: Optional[int] = None
    seed: int = 0
    values: Optional[Tuple[int, ...]] = None

    def draw(self, N: int) -> np.ndarray:
        if self.kind == "regular":
            return np.full(N, self.degree, dtype=np.int64)
        if self.kind == "two_point":
            n_high = int(round(self.p_high * N))
            d = np.full(N, self.low, dtype=np.int64)
            d[:n_high] = self.high
            return d
        if self.kind == "power_law":
            spec = PowerLawSpec(self.exponent, self.d_min, self.d_max)
            return sample_power_law_degrees(N, spec, self.seed)
        if self.kind == "explicit":
            d = np.asarray(self.values, dtype=np.int64)
            if d.size != N:
                raise ValueError(f"explicit degree list has {d.size} entries, N={N}")
            return d
        raise ValueError(f"unknown degree model {self.kind!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    N: int
    alpha1: float
    alpha2: float
    degrees: DegreeModel = field(default_factory=DegreeModel)
    capture: str = "degree"
    recapture: str = "degree"
    replicates: int = 1000
    seed: int = 0
    normalization: str = "min"
    model: str = "bernoulli"

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        for a in (self.alpha1, self.alpha2):
            if not 0 < a <= 1:
                raise ValueError("sampling fractions must lie in (0, 1]")
        if self.capture not in CAPTURE_KINDS:
            raise ValueError(f"capture must be one of {CAPTURE_KINDS}")
        if self.recapture not in RECAPTURE_KINDS:
            raise ValueError(f"recapture must be one of {RECAPTURE_KINDS}")
        if self.normalization not in ("min", "mean"):
            raise ValueError("normalization must be 'min' or 'mean'")
        if self.model not in ("bernoulli", "fixed_size"):
            raise ValueError("model must be 'bernoulli' or 'fixed_size'")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")

    @property
    def s1(self) -> int:
        return int(round(self.alpha1 * self.N))

    @property
    def s2(self) -> int:
        return int(round(self.alpha2 * self.N))

    def to_dict(self) -> dict:
        return asdict(self)


def sqrt_n_log_n(N: int) -> float:
    return math.sqrt(N * math.log(N))


def normalized_weights(degrees: np.ndarray, how: str) -> np.ndarray:
    d = np.asarray(degrees, dtype=float)
    return d / (d.min() if how == "min" else d.mean())


def first_stage_probabilities(degrees: np.ndarray, alpha1: float, kind: str) -> np.ndarray:
    """Per-individual capture probabilities summing to alpha1 * N."""
    d = np.asarray(degrees, dtype=float)
    N = d.size
    if kind == "uniform":
        beta = np.full(N, alpha1)
    elif kind == "degree":
        beta = alpha1 * d / d.mean()
    elif kind == "top_degree":
        k = int(round(alpha1 * N))
        order = np.argsort(-d, kind="stable")
        beta = np.zeros(N)
        beta[order[:k]] = 1.0
    else:
        raise ValueError(f"unknown capture kind {kind!r}")
    if beta.max() > 1 + 1e-12:
        raise InvalidNormalization(
            f"capture probability {beta.max():.4g} > 1; lower alpha1 or flatten degrees"
        )
    return np.minimum(beta, 1.0)


def recapture_weights(cfg: ScenarioConfig, degrees: np.ndarray) -> np.ndarray:
    if cfg.recapture == "uniform":
        return np.ones(degrees.size)
    return normalized_weights(degrees, cfg.normalization)


def recapture_probabilities(cfg: ScenarioConfig, degrees: np.ndarray) -> np.ndarray:
    pi = cfg.alpha2 * recapture_weights(cfg, degrees)
    if pi.max() > 1 + 1e-12:
        raise InvalidNormalization(
            f"recapture probability {pi.max():.4g} > 1 (alpha2 * max weight); "
            "clipping would change the estimand"
        )
    return pi


def _bernoulli(rng: np.random.Generator, p: np.ndarray, reps: int) -> np.ndarray:
    return rng.random((reps, p.size)) < p


def _fixed_size(rng: np.random.Generator, w: np.ndarray, k: int, reps: int) -> np.ndarray:
    """Successive sampling of k units per row, weights w, via exponential keys."""
    N = w.size
    out = np.zeros((reps, N), dtype=bool)
    if k <= 0:
        return out
    if k >= N:
        out[:] = True
        return out
    keys = rng.standard_exponential((reps, N)) / w
    idx = np.argpartition(keys, k - 1, axis=1)[:, :k]
    np.put_along_axis(out, idx, True, axis=1)
    return out


def _stage_draws(cfg: ScenarioConfig, degrees: np.ndarray, stream: int, chunk: int,
                 reps: int, which: str) -> np.ndarray:
    rng = derive_rng(cfg.seed, stream, chunk)
    if which == "capture":
        beta = first_stage_probabilities(degrees, cfg.alpha1, cfg.capture)
        if cfg.model == "bernoulli" or cfg.capture == "top_degree":
            if cfg.capture == "top_degree":
                return np.broadcast_to(beta > 0.5, (reps, beta.size)).copy()
            return _bernoulli(rng, beta, reps)
        return _fixed_size(rng, beta, cfg.s1, reps)
    pi = recapture_probabilities(cfg, degrees)
    if cfg.model == "bernoulli":
        return _bernoulli(rng, pi, reps)
    return _fixed_size(rng, pi, int(round(pi.sum())), reps)


def _chunks(total: int):
    for i, start in enumerate(range(0, total, CHUNK)):
        yield i, min(CHUNK, total - start)


@dataclass
class ReplicateStats:
    """Per-replicate quantities of a two-stage scenario."""

    s1: np.ndarray
    s2: np.ndarray
    a11: np.ndarray
    w_second: np.ndarray  # sum of 1/w over second stage
    w_both: np.ndarray  # sum of 1/w over doubly caught

    @property
    def degenerate(self) -> np.ndarray:
        return self.a11 == 0

    def adjusted(self) -> np.ndarray:
        ok = ~self.degenerate
        return self.s1[ok] * self.w_second[ok] / self.w_both[ok]

    def naive(self) -> np.ndarray:
        ok = ~self.degenerate
        return self.s1[ok] * self.s2[ok] / self.a11[ok]


def simulate_scenario(cfg: ScenarioConfig, degrees: Optional[np.ndarray] = None) -> ReplicateStats:
    """Run all replicates of a scenario and collect per-replicate sums."""
    if degrees is None:
        degrees = cfg.degrees.draw(cfg.N)
    inv = 1.0 / recapture_weights(cfg, degrees)
    parts: Dict[str, List[np.ndarray]] = {k: [] for k in ReplicateStats.__dataclass_fields__}
    for chunk, reps in _chunks(cfg.replicates):
        i1 = _stage_draws(cfg, degrees, CAPTURE_STREAM, chunk, reps, "capture")
        i2 = _stage_draws(cfg, degrees, RECAPTURE_STREAM, chunk, reps, "recapture")
        both = i1 & i2
        parts["s1"].append(i1.sum(axis=1))
        parts["s2"].append(i2.sum(axis=1))
        parts["a11"].append(both.sum(axis=1))
        parts["w_second"].append(np.where(i2, inv, 0.0).sum(axis=1))
        parts["w_both"].append(np.where(both, inv, 0.0).sum(axis=1))
    return ReplicateStats(**{k: np.concatenate(v) for k, v in parts.items()})


# ---------------------------------------------------------------------------
# closed forms


def expected_double_captures(N: int, alpha1: float, alpha2: float,
                             moments: DegreeMoments) -> float:
    """N * alpha1 * alpha2 * m2 / z^2 under degree-proportional inclusion."""
    return N * alpha1 * alpha2 * moments.heterogeneity


def theorem1_interval(N: int, alpha1: float, alpha2: float) -> Tuple[float, float]:
    """Bounds on N_adj / N holding with probability >= 1 - 4/N^2.

    When ``alpha1 * alpha2 * N <= sqrt(N log N)`` the concentration window
    for the doubly-caught weight sum reaches zero and the upper end is
    vacuous; it is returned as ``inf``.
    """
    t = sqrt_n_log_n(N)
    m = alpha1 * alpha2 * N
    lower = (m - alpha1 * t) / (m + t)
    upper = (m + alpha1 * t) / (m - t) if m > t else math.inf
    return lower, upper


# ---------------------------------------------------------------------------
# reports


def _mc_ok(empirical: float, target: float, se: float, slack: float) -> bool:
    return abs(empirical - target) <= slack * se


@dataclass
class SandwichReport:
    N: int
    replicates: int
    used: int
    dropped: int
    heterogeneity: float
    empirical_mean: float
    standard_error: float
    lower: float
    upper: float
    passed: bool
    check: str = "lp_sandwich"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConcentrationReport:
    statistic: str
    N: int
    replicates: int
    empirical_mean: float
    empirical_std: float
    standard_error: float
    expectation: float
    threshold: float
    violations: int
    violation_fraction: float
    bound: float
    mean_ok: bool
    passed: bool
    check: str = "concentration"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Theorem1Report:
    N: int
    replicates: int
    used: int
    dropped: int
    lower: float
    upper: float
    coverage: float
    required: float
    median_abs_error: float
    mean_ratio: float
    passed: bool
    check: str = "theorem1_interval"

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.upper):
            d["upper"] = None
        return d


@dataclass
class IndifferenceReport:
    capture_a: str
    capture_b: str
    adjusted_mean_a: float
    adjusted_mean_b: float
    adjusted_rel_diff: float
    naive_mean_a: float
    naive_mean_b: float
    naive_rel_diff: float
    dropped_a: int
    dropped_b: int
    tolerance: float
    passed: bool
    check: str = "first_stage_indifference"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrendReport:
    sizes: List[int]
    medians: List[float]
    coverages: List[float]
    strictly_decreasing: bool
    check: str = "theorem1_trend"

    @property
    def passed(self) -> bool:
        return self.strictly_decreasing

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


# ---------------------------------------------------------------------------
# verification operations


def verify_lp_sandwich(cfg: ScenarioConfig, moments: Optional[DegreeMoments] = None,
                       slack: float = 3.0) -> SandwichReport:
    """Monte Carlo E[S1 S2 / a11] against its Jensen/Kantorovich interval.

    Both stages use degree-proportional inclusion ``alpha * d / z``; the
    numerator is the nominal ``S1 * S2 = alpha1 * alpha2 * N^2`` and
    replicates with a11 = 0 are dropped.
    """
    degrees = cfg.degrees.draw(cfg.N)
    if moments is None:
        moments = degree_moments(degrees)
    cfg = replace(cfg, capture="degree", recapture="degree", normalization="mean")
    stats = simulate_scenario(cfg, degrees)
    ok = ~stats.degenerate
    if not ok.any():
        raise AllRunsDegenerate("no replicate had a double capture")
    ratio = cfg.alpha1 * cfg.alpha2 * cfg.N ** 2 / stats.a11[ok]
    mean = float(ratio.mean())
    se = float(ratio.std(ddof=1) / math.sqrt(ratio.size)) if ratio.size > 1 else math.inf
    lower, upper = lp_expectation_bounds(cfg.N, moments, max(cfg.s1, 1), max(cfg.s2, 1))
    passed = lower - slack * se <= mean <= upper + slack * se
    return SandwichReport(cfg.N, cfg.replicates, int(ok.sum()), int((~ok).sum()),
                          moments.heterogeneity, mean, se, lower, upper, bool(passed))


def verify_concentration(cfg: ScenarioConfig, joint: bool = False,
                         slack: float = 3.0) -> ConcentrationReport:
    """Check that the weighted indicator sum stays within sqrt(N log N).

    ``joint=False`` tracks the sum of 1/w over the whole second stage
    (expectation alpha2 N); ``joint=True`` restricts it to individuals caught
    in both stages (expectation alpha1 alpha2 N).
    """
    stats = simulate_scenario(cfg)
    values = stats.w_both if joint else stats.w_second
    expectation = cfg.alpha1 * cfg.alpha2 * cfg.N if joint else cfg.alpha2 * cfg.N
    t = sqrt_n_log_n(cfg.N)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    se = std / math.sqrt(values.size)
    violations = int(np.count_nonzero(np.abs(values - expectation) >= t))
    frac = violations / values.size
    bound = 2.0 / cfg.N ** 2
    mc_bound = bound + slack * math.sqrt(bound * (1 - bound) / values.size)
    mean_ok = abs(mean - expectation) <= slack * se + 1e-9 * max(1.0, expectation)
    return ConcentrationReport(
        "lemma3" if joint else "lemma2", cfg.N, cfg.replicates, mean, std, se,
        expectation, t, violations, frac, bound, bool(mean_ok),
        bool(mean_ok and frac <= mc_bound),
    )


def verify_theorem1_interval(cfg: ScenarioConfig, slack: float = 3.0) -> Theorem1Report:
    stats = simulate_scenario(cfg)
    ok = ~stats.degenerate
    if not ok.any():
        raise AllRunsDegenerate("no replicate had a double capture")
    ratio = stats.adjusted() / cfg.N
    lower, upper = theorem1_interval(cfg.N, cfg.alpha1, cfg.alpha2)
    coverage = float(np.mean((ratio >= lower) & (ratio <= upper)))
    p = 1 - 4 / cfg.N ** 2
    required = p - slack * math.sqrt(max(p * (1 - p), 0.0) / ratio.size)
    return Theorem1Report(
        cfg.N, cfg.replicates, int(ok.sum()), int((~ok).sum()), lower, upper,
        coverage, required, float(np.median(np.abs(ratio - 1))), float(ratio.mean()),
        bool(coverage >= required),
    )


def theorem1_trend(cfg: ScenarioConfig, sizes: Sequence[int] = (1000, 10000, 100000)) -> TrendReport:
    """Median |N_adj/N - 1| over a grid of population sizes."""
    reports = [verify_theorem1_interval(replace(cfg, N=int(n))) for n in sizes]
    medians = [r.median_abs_error for r in reports]
    decreasing = all(b < a for a, b in zip(medians, medians[1:]))
    return TrendReport([int(n) for n in sizes], medians, [r.coverage for r in reports],
                       bool(decreasing))


def verify_first_stage_indifference(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig,
                                    tolerance: float = 0.05) -> IndifferenceReport:
    """Compare estimator means under two first-stage schemes.

    The configs must agree on everything except ``capture``; the shared
    seed gives both the same recapture draws.
    """
    if replace(cfg_a, capture=cfg_b.capture) != cfg_b:
        raise ValueError("configs may differ only in the capture scheme")
    degrees = cfg_a.degrees.draw(cfg_a.N)
    sa = simulate_scenario(cfg_a, degrees)
    sb = simulate_scenario(cfg_b, degrees)
    if (~sa.degenerate).sum() == 0 or (~sb.degenerate).sum() == 0:
        raise AllRunsDegenerate("a scenario had no double captures")
    adj_a, adj_b = float(sa.adjusted().mean()), float(sb.adjusted().mean())
    nv_a, nv_b = float(sa.naive().mean()), float(sb.naive().mean())
    adj_rel = abs(adj_a - adj_b) / abs(adj_a)
    nv_rel = abs(nv_a - nv_b) / abs(nv_a)
    return IndifferenceReport(
        cfg_a.capture, cfg_b.capture, adj_a, adj_b, adj_rel, nv_a, nv_b, nv_rel,
        int(sa.degenerate.sum()), int(sb.degenerate.sum()), tolerance,
        bool(adj_rel < tolerance),
    )


def replicate_trace(cfg: ScenarioConfig) -> List[dict]:
    """Per-replicate rows for external plotting."""
    stats = simulate_scenario(cfg)
    rows = []
    for i in range(stats.a11.size):
        a11 = int(stats.a11[i])
        rows.append({
            "replicate": i,
            "s1": int(stats.s1[i]),
            "s2": int(stats.s2[i]),
            "a11": a11,
            "naive": stats.s1[i] * stats.s2[i] / a11 if a11 else "",
            "adjusted": stats.s1[i] * stats.w_second[i] / stats.w_both[i] if a11 else "",
        })
    return rows
