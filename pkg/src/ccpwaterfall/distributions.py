"""Finite discrete distributions and tail risk measures.

Every conditional law in the engine is a finite list of ``(value, prob)``
atoms.  Risk measures follow the risk-management sign convention: their
argument is the law of a cash flow already expressed as a loss (``-X`` or
``-(X)^+``), and the measure of a sure loss is a positive number.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "DiscreteDistribution",
    "ExtremeDensity",
    "RiskMeasureKind",
    "RiskMeasureSpec",
    "LossTransformMode",
    "lower_quantile",
    "upper_quantile",
    "var",
    "avar",
    "entropic",
    "extreme_density",
    "expectation_under_density",
    "loss_transform",
]

# Values closer than this (relative) are merged into a single atom.
MERGE_RTOL = 1e-12
# Probabilities must sum to one within this absolute tolerance.
PROB_SUM_TOL = 1e-12


class RiskMeasureKind(str, enum.Enum):
    VAR = "VAR"
    AVAR = "AVAR"
    ENTROPIC = "ENTROPIC"


@dataclass(frozen=True)
class RiskMeasureSpec:
    """A risk measure kind together with its significance level."""

    kind: RiskMeasureKind
    level: float

    def __post_init__(self):
        kind = RiskMeasureKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (RiskMeasureKind.VAR, RiskMeasureKind.AVAR):
            if not 0.0 < self.level <= 1.0:
                raise ValueError(f"{kind.value} level must lie in (0, 1], got {self.level}")
        else:
            if not 0.0 < self.level < 1.0:
                raise ValueError(f"ENTROPIC level must lie in (0, 1), got {self.level}")


def _merge_atoms(values: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")
    values = values[order]
    probs = probs[order]
    if values.size <= 1:
        return values, probs
    # Group consecutive values that coincide up to relative tolerance.
    gaps = np.diff(values)
    tol = MERGE_RTOL * np.maximum(np.abs(values[:-1]), np.abs(values[1:]))
    starts = np.concatenate(([0], np.flatnonzero(gaps > tol) + 1))
    merged_p = np.add.reduceat(probs, starts)
    return values[starts].astype(float), merged_p.astype(float)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Immutable finite law: atoms sorted ascending by value, equal values merged."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.ndim != 1 or probs.ndim != 1 or values.size != probs.size:
            raise ValueError("values and probs must be 1-d arrays of equal length")
        if values.size == 0:
            raise ValueError("distribution needs at least one atom")
        if not np.all(np.isfinite(values)):
            raise ValueError("atom values must be finite")
        if np.any(probs < -PROB_SUM_TOL):
            raise ValueError("atom probabilities must be nonnegative")
        probs = np.maximum(probs, 0.0)
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        values, probs = _merge_atoms(values, probs)
        values.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]]) -> "DiscreteDistribution":
        pairs = list(atoms)
        return cls(np.array([v for v, _ in pairs]), np.array([p for _, p in pairs]))

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDistribution":
        return cls(np.array([value]), np.array([1.0]))

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "DiscreteDistribution":
        """Empirical law with uniform weights."""
        samples = np.asarray(samples, dtype=float)
        uniq, counts = np.unique(samples, return_counts=True)
        return cls(uniq, counts / samples.size)

    @property
    def atoms(self) -> tuple[tuple[float, float], ...]:
        return tuple(zip(self.values.tolist(), self.probs.tolist()))

    def expectation(self) -> float:
        return float(np.dot(self.values, self.probs))

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def prob_below(self, x: float) -> float:
        """P(X < x)."""
        return float(self.probs[self.values < x].sum())

    def prob_at(self, x: float) -> float:
        mask = self.values == x
        return float(self.probs[mask].sum())

    def shift(self, m: float) -> "DiscreteDistribution":
        return DiscreteDistribution(self.values + m, self.probs)

    def scale(self, c: float) -> "DiscreteDistribution":
        if c == 0:
            raise ValueError("scale factor must be nonzero")
        return DiscreteDistribution(self.values * c, self.probs)

    def to_json(self) -> str:
        return json.dumps([{"value": v, "prob": p} for v, p in self.atoms])

    @classmethod
    def from_json(cls, text: str) -> "DiscreteDistribution":
        data = json.loads(text)
        return cls.from_atoms((row["value"], row["prob"]) for row in data)


def _check_level(alpha: float, *, closed_right: bool = False) -> None:
    hi_ok = alpha <= 1.0 if closed_right else alpha < 1.0
    if not (0.0 < alpha and hi_ok):
        rng = "(0, 1]" if closed_right else "(0, 1)"
        raise ValueError(f"significance level must lie in {rng}, got {alpha}")


def lower_quantile(dist: DiscreteDistribution, alpha: float) -> float:
    """Lower alpha-quantile: sup{s : P(X < s) < alpha}."""
    _check_level(alpha)
    cdf = dist.cdf()
    idx = int(np.searchsorted(cdf, alpha, side="left"))
    idx = min(idx, dist.values.size - 1)
    return float(dist.values[idx])


def upper_quantile(dist: DiscreteDistribution, alpha: float) -> float:
    """Upper alpha-quantile: sup{s : P(X < s) <= alpha}."""
    _check_level(alpha)
    cdf = dist.cdf()
    below = np.concatenate(([0.0], cdf[:-1]))  # P(X < x_k) as exact prefix sums
    idx = int(np.searchsorted(below, alpha, side="right")) - 1
    return float(dist.values[idx])


def _tail_index(dist: DiscreteDistribution, alpha: float) -> int:
    """First index k (ascending values) with cumulative probability > alpha."""
    cdf = dist.cdf()
    idx = int(np.searchsorted(cdf, alpha, side="right"))
    return min(idx, dist.values.size - 1)


def var(dist: DiscreteDistribution, alpha: float) -> float:
    """Value at Risk of a loss law, reported as a loss magnitude.

    Scans atoms from the worst loss upward and selects the first atom whose
    cumulative probability strictly exceeds ``alpha``; the result is the
    negated atom value (coincides with the negated upper alpha-quantile).
    """
    _check_level(alpha)
    return -float(dist.values[_tail_index(dist, alpha)])


def avar(dist: DiscreteDistribution, alpha: float) -> float:
    """Average Value at Risk (expected shortfall) of a loss law.

    Equals the mean of the worst ``alpha`` fraction of outcomes; at
    ``alpha == 1`` it reduces to the plain expected loss.
    """
    _check_level(alpha, closed_right=True)
    if alpha == 1.0:
        return -dist.expectation()
    k = _tail_index(dist, alpha)
    values = dist.values
    probs = dist.probs
    tail = float(np.dot(-values[:k], probs[:k]))
    below = float(probs[:k].sum())
    tail += -float(values[k]) * (alpha - below)
    return tail / alpha


def entropic(dist: DiscreteDistribution, alpha: float) -> float:
    """Entropic risk of a loss law: (1/a) log E[exp(-a X)], overflow guarded."""
    _check_level(alpha)
    return float(logsumexp(-alpha * dist.values, b=dist.probs)) / alpha


@dataclass(frozen=True)
class ExtremeDensity:
    """Per-atom density weights of the worst-case measure in the AVaR dual form."""

    weights: np.ndarray
    alpha: float

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if np.any(weights < -1e-12) or np.any(weights > 1.0 / self.alpha + 1e-9):
            raise ValueError("weights must lie in [0, 1/alpha]")
        weights = np.clip(weights, 0.0, 1.0 / self.alpha)
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def validate_against(self, dist: DiscreteDistribution, tol: float = 1e-10) -> None:
        if self.weights.size != dist.values.size:
            raise ValueError("density is not aligned with the distribution's atoms")
        mean = float(np.dot(self.weights, dist.probs))
        if abs(mean - 1.0) > tol:
            raise ValueError(f"density expectation is {mean}, not 1")


def extreme_density(dist: DiscreteDistribution, alpha: float) -> ExtremeDensity:
    """Maximizing density of the AVaR dual representation.

    Puts weight ``1/alpha`` strictly below the lower alpha-quantile and a
    fractional weight on the quantile atom so the density integrates to one.
    The lower quantile is a fixed convention; ties in the dual problem admit
    other maximizers.
    """
    _check_level(alpha, closed_right=True)
    if alpha == 1.0:
        return ExtremeDensity(np.ones_like(dist.values), 1.0)
    q = lower_quantile(dist, alpha)
    q_idx = int(np.searchsorted(dist.values, q, side="left"))
    below = float(dist.probs[:q_idx].sum())
    p_at = float(dist.probs[q_idx])
    eps = (alpha - below) / p_at
    eps = min(max(eps, 0.0), 1.0)
    weights = np.zeros_like(dist.values)
    weights[:q_idx] = 1.0 / alpha
    weights[q_idx] = eps / alpha
    return ExtremeDensity(weights, alpha)


def expectation_under_density(
    values: Sequence[float], dist: DiscreteDistribution, z: ExtremeDensity
) -> float:
    """E[Z * Y] for a second variable Y defined atomwise on the same space."""
    values = np.asarray(values, dtype=float)
    if values.size != dist.values.size or z.weights.size != dist.values.size:
        raise ValueError("values, distribution and density must be aligned")
    return float(np.einsum("i,i,i->", values, z.weights, dist.probs))


class LossTransformMode(str, enum.Enum):
    NEG_POS_PART = "NEG_POS_PART"
    NEG = "NEG"


def loss_transform(dist: DiscreteDistribution, mode: LossTransformMode) -> DiscreteDistribution:
    """Map a cash-flow law to its loss law: v -> -max(v, 0) or v -> -v."""
    mode = LossTransformMode(mode)
    if mode is LossTransformMode.NEG_POS_PART:
        values = -np.maximum(dist.values, 0.0)
    else:
        values = -dist.values
    return DiscreteDistribution(values, dist.probs)
