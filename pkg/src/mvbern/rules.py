"""Superiority decision rules over the treatment-difference vector delta.

Four rules partition the delta space: a single primary outcome, at least one
outcome, all outcomes, or a weighted sum (the compensatory rule, where gains
on one outcome can offset losses on another).  All regions use strict
inequalities, so a delta of exactly zero never counts as superior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EmptyDraws, InvalidParams
from .model import DeltaDraws

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class SingleRule:
    """Superior iff the chosen outcome improves; ``outcome`` is 1-based."""

    outcome: int = 1

    def __post_init__(self) -> None:
        if self.outcome < 1:
            raise InvalidParams(f"outcome index is 1-based, got {self.outcome}")


@dataclass(frozen=True)
class AnyRule:
    """Superior iff at least one outcome improves (union of single regions)."""


@dataclass(frozen=True)
class AllRule:
    """Superior iff every outcome improves (intersection of single regions)."""


@dataclass(frozen=True, eq=False)
class CompensatoryRule:
    """Superior iff the weighted sum of treatment differences is positive."""

    weights: np.ndarray

    def __init__(self, weights) -> None:
        arr = np.array(weights, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise InvalidParams("weights must be a nonempty 1-D vector")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InvalidParams("weights must lie in [0, 1]")
        if abs(arr.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidParams(f"weights must sum to 1, got {arr.sum()!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)


DecisionRule = Union[SingleRule, AnyRule, AllRule, CompensatoryRule]


@dataclass(frozen=True)
class Decision:
    """Outcome of comparing the posterior superiority mass to a threshold."""

    superior: bool
    posterior_probability: float
    threshold: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.posterior_probability <= 1.0:
            raise InvalidParams("posterior probability must lie in [0, 1]")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidParams("threshold must lie in (0, 1)")
        if self.superior != (self.posterior_probability > self.threshold):
            raise InvalidParams("decision flag contradicts probability/threshold")


def compensatory_indicator(weights, deltas: np.ndarray) -> np.ndarray:
    """Sign test w . delta > 0 for each row; invariant to rescaling weights."""
    return np.asarray(deltas) @ np.asarray(weights, dtype=np.float64) > 0.0


def _indicator_rows(rule: DecisionRule, deltas: np.ndarray) -> np.ndarray:
    k = deltas.shape[1]
    if isinstance(rule, SingleRule):
        if rule.outcome > k:
            raise InvalidParams(f"rule targets outcome {rule.outcome} but K={k}")
        return deltas[:, rule.outcome - 1] > 0.0
    if isinstance(rule, AnyRule):
        return (deltas > 0.0).any(axis=1)
    if isinstance(rule, AllRule):
        return (deltas > 0.0).all(axis=1)
    if isinstance(rule, CompensatoryRule):
        if rule.weights.size != k:
            raise InvalidParams(f"rule has {rule.weights.size} weights but K={k}")
        return compensatory_indicator(rule.weights, deltas)
    raise TypeError(f"unknown decision rule {rule!r}")


def superiority_indicator(rule: DecisionRule, delta) -> bool:
    """Whether one delta vector lies in the rule's superiority region."""
    arr = np.atleast_2d(np.asarray(delta, dtype=np.float64))
    return bool(_indicator_rows(rule, arr)[0])


def superiority_probability(rule: DecisionRule, draws: DeltaDraws) -> float:
    """Posterior evidence of superiority estimated from delta draws.

    For the single, all, and compensatory rules this is the fraction of
    draws inside the superiority region.  The any rule's decision statistic
    is the largest per-outcome fraction, max_k P(delta_k > 0): the union
    mass would exceed every per-outcome mass and is not controlled by the
    1 - alpha/2 threshold this rule is paired with.
    """
    if draws.n_draws < 1:
        raise EmptyDraws("superiority probability needs at least one draw")
    if isinstance(rule, AnyRule):
        return float((draws.draws > 0.0).mean(axis=0).max())
    return float(_indicator_rows(rule, draws.draws).mean())


def decision_threshold(rule: DecisionRule, alpha: float) -> float:
    """Threshold controlling one-sided type I error at alpha.

    The union-region rule needs the stricter 1 - alpha/2; the others use
    1 - alpha.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParams(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(rule, AnyRule):
        return 1.0 - alpha / 2.0
    return 1.0 - alpha


def decide(prob: float, threshold: float) -> Decision:
    """Strict comparison of posterior mass against the decision threshold."""
    if not 0.0 <= prob <= 1.0:
        raise InvalidParams(f"probability must lie in [0, 1], got {prob}")
    if not 0.0 < threshold < 1.0:
        raise InvalidParams(f"threshold must lie in (0, 1), got {threshold}")
    return Decision(
        superior=prob > threshold,
        posterior_probability=prob,
        threshold=threshold,
    )
