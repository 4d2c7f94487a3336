"""Closed-form population size estimators and their analytic bounds.

Everything here is deterministic and free of shared state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySequence, NonPositiveWeight, ZeroRecapture


class EstimatorKind(str, enum.Enum):
    NAIVE_LP = "NaiveLP"
    ADJUSTED_HT = "AdjustedHT"


@dataclass(frozen=True)
class CrossCounts:
    """Two-sample cross tabulation.

    a11 individuals were caught in both samples, a10 only in the first and
    a01 only in the second.
    """

    a11: int
    a10: int
    a01: int

    def __post_init__(self):
        for name in ("a11", "a10", "a01"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def s1(self) -> int:
        return self.a10 + self.a11

    @property
    def s2(self) -> int:
        return self.a01 + self.a11


@dataclass(frozen=True)
class Member:
    weight: float
    in_first: bool


@dataclass(frozen=True)
class RecaptureObservation:
    """Minimal data needed by the weighted estimator.

    Only the first-stage sample size is required, plus one (weight, in_first)
    pair per second-stage member.
    """

    first_sample_size: int
    members: Tuple[Member, ...]

    def __post_init__(self):
        if self.first_sample_size < 1:
            raise ValueError("first_sample_size must be >= 1")
        object.__setattr__(self, "members", tuple(self.members))

    @classmethod
    def from_arrays(cls, first_sample_size: int, weights, in_first) -> "RecaptureObservation":
        weights = np.asarray(weights, dtype=float)
        in_first = np.asarray(in_first, dtype=bool)
        if weights.shape != in_first.shape:
            raise ValueError("weights and in_first must have the same length")
        return cls(
            int(first_sample_size),
            tuple(Member(float(w), bool(f)) for w, f in zip(weights, in_first)),
        )

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.members], dtype=float)

    @property
    def in_first(self) -> np.ndarray:
        return np.array([m.in_first for m in self.members], dtype=bool)

    @property
    def counts(self) -> CrossCounts:
        a11 = sum(1 for m in self.members if m.in_first)
        return CrossCounts(
            a11=a11,
            a10=self.first_sample_size - a11,
            a01=len(self.members) - a11,
        )

    def scaled(self, c: float) -> "RecaptureObservation":
        return replace(
            self, members=tuple(Member(m.weight * c, m.in_first) for m in self.members)
        )


@dataclass(frozen=True)
class DegreeMoments:
    z: float
    m2: float

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError("mean degree must be positive")
        # Jensen: m2 >= z^2, with slack for float rounding
        if self.m2 < self.z * self.z * (1 - 1e-12):
            raise ValueError(f"m2={self.m2} < z^2={self.z ** 2}")

    @property
    def heterogeneity(self) -> float:
        """m2 / z^2, equal to 1 for a regular network."""
        return self.m2 / (self.z * self.z)


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    estimator_kind: EstimatorKind
    counts: CrossCounts
    # (W_11, W_01): inverse-weight sums over doubly caught / second-only members
    weight_sums: Optional[Tuple[float, float]] = field(default=None)

    @property
    def rounded(self) -> int:
        return round_half_up(self.estimate)

    def to_dict(self) -> dict:
        out = {
            "estimator": self.estimator_kind.value,
            "estimate": self.estimate,
            "rounded": self.rounded,
            "a11": self.counts.a11,
            "a10": self.counts.a10,
            "a01": self.counts.a01,
            "s1": self.counts.s1,
            "s2": self.counts.s2,
        }
        if self.weight_sums is not None:
            out["w11"], out["w01"] = self.weight_sums
        return out


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def naive_lp(counts: CrossCounts) -> EstimateReport:
    """Lincoln-Petersen estimate (a10 + a11)(a01 + a11) / a11."""
    if counts.a11 < 1:
        raise ZeroRecapture("no individual appears in both samples (a11 = 0)")
    estimate = counts.s1 * counts.s2 / counts.a11
    return EstimateReport(estimate, EstimatorKind.NAIVE_LP, counts)


def adjusted_ht(obs: RecaptureObservation) -> EstimateReport:
    """Covariate-weighted Horvitz-Thompson style estimate.

    Computes ``S1 * (W_11 + W_01) / W_11`` where ``W_11`` sums 1/weight over
    second-stage members also caught in the first stage and ``W_01`` sums
    1/weight over the rest of the second stage.
    """
    w = obs.weights
    flags = obs.in_first
    if np.any(~(w > 0)):
        bad = int(np.flatnonzero(~(w > 0))[0])
        raise NonPositiveWeight(f"member {bad} has non-positive weight {w[bad]!r}")
    if not flags.any():
        raise ZeroRecapture("no second-stage member was caught in the first stage")
    inv = 1.0 / w
    # math.fsum keeps the result independent of member order
    w11 = math.fsum(inv[flags])
    w01 = math.fsum(inv[~flags])
    estimate = obs.first_sample_size * (w11 + w01) / w11
    return EstimateReport(estimate, EstimatorKind.ADJUSTED_HT, obs.counts, (w11, w01))


def adjusted_ht_scaled_invariance_check(obs: RecaptureObservation, c: float) -> bool:
    if not c > 0:
        raise ValueError("scale factor must be positive")
    base = adjusted_ht(obs).estimate
    scaled = adjusted_ht(obs.scaled(c)).estimate
    return math.isclose(base, scaled, rel_tol=1e-12, abs_tol=0.0)


def degree_moments(degrees: Iterable[float]) -> DegreeMoments:
    d = np.asarray(list(degrees) if not isinstance(degrees, np.ndarray) else degrees, dtype=float)
    if d.size == 0:
        raise EmptySequence("degree sequence is empty")
    if np.any(d < 1):
        raise ValueError("degrees must be >= 1")
    return DegreeMoments(z=float(d.mean()), m2=float(np.mean(d * d)))


def lp_expectation_bounds(
    N: int, moments: DegreeMoments, s1: int, s2: int
) -> Tuple[float, float]:
    """Jensen lower and Kantorovich upper bound on E[S1 S2 / a11].

    The lower bound is ``(z^2 / m2) N``; the upper bound multiplies it by
    ``(S + 1)^2 / (4 S)`` with ``S = min(s1, s2)``.
    """
    if N < 1 or s1 < 1 or s2 < 1:
        raise ValueError("N, s1 and s2 must all be >= 1")
    s = min(s1, s2)
    lower = N / moments.heterogeneity
    upper = (s + 1) ** 2 / (4 * s) * lower
    return lower, upper


def estimate_pair(
    first_sample_size: int, weights: Sequence[float], in_first: Sequence[bool]
) -> Tuple[EstimateReport, EstimateReport]:
    """Naive and adjusted estimates from one recapture observation."""
    obs = RecaptureObservation.from_arrays(first_sample_size, weights, in_first)
    return naive_lp(obs.counts), adjusted_ht(obs)
