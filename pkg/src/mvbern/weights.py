"""Efficiency weights for the compensatory rule.

Given approximate normal moments (mu, Sigma) of the treatment-difference
posterior, the evidence that the weighted difference is positive is
1 - Phi(-w.mu / sqrt(w' Sigma w)).  Maximizing it over the weight simplex is
scale-free, so whenever the unconstrained ratio maximizer Sigma^{-1} mu is
componentwise nonnegative it is the answer after normalization; otherwise a
constrained simplex search takes over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from .errors import (
    DegenerateVariance,
    DimensionMismatch,
    EmptyCounts,
    InvalidParams,
    NoPositiveDirection,
)
from .model import (
    DirichletParams,
    JointCounts,
    delta_draws,
    dirichlet_margin_moments,
    posterior_update,
    sample_dirichlet,
)

REFERENCE_PRIOR_CELL = 0.01
DEFAULT_MOMENT_DRAWS = 100_000


@dataclass(frozen=True, eq=False)
class DeltaMoments:
    """Mean vector and covariance of the treatment-difference posterior."""

    mu: np.ndarray
    cov: np.ndarray

    def __init__(self, mu, cov) -> None:
        mu = np.array(mu, dtype=np.float64)
        cov = np.array(cov, dtype=np.float64)
        if mu.ndim != 1 or cov.shape != (mu.size, mu.size):
            raise DimensionMismatch(
                f"need mu (K,) and cov (K, K), got {mu.shape} and {cov.shape}"
            )
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise InvalidParams("covariance must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise InvalidParams("covariance must be positive semidefinite")
        mu.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def sigma2(self) -> np.ndarray:
        return np.diag(self.cov)


def moments_from_params(
    params_e: DirichletParams, params_c: DirichletParams
) -> DeltaMoments:
    """Exact delta moments from per-arm Dirichlet parameters (no sampling)."""
    mean_e, cov_e = dirichlet_margin_moments(params_e)
    mean_c, cov_c = dirichlet_margin_moments(params_c)
    return DeltaMoments(mean_e - mean_c, cov_e + cov_c)


def estimate_moments(
    counts_e: JointCounts,
    counts_c: JointCounts,
    n_draws: int,
    rng: np.random.Generator,
    prior_cell: float = REFERENCE_PRIOR_CELL,
) -> DeltaMoments:
    """Sample moments of delta from hypothetical per-arm response counts.

    The counts act as an anticipated dataset: each arm gets the near-flat
    reference prior, the posterior is sampled, and the paired draws yield a
    mean and covariance for the weight optimizer.
    """
    if counts_e.n == 0 or counts_c.n == 0:
        raise EmptyCounts("anticipated counts must include at least one subject")
    if counts_e.counts.size != counts_c.counts.size:
        raise DimensionMismatch("arms must share the pattern count")
    prior = DirichletParams(np.full(counts_e.counts.size, prior_cell))
    post_e = posterior_update(prior, counts_e)
    post_c = posterior_update(prior, counts_c)
    draws = delta_draws(
        sample_dirichlet(post_e, n_draws, rng),
        sample_dirichlet(post_c, n_draws, rng),
    ).draws
    return DeltaMoments(draws.mean(axis=0), np.cov(draws, rowvar=False))


def compensatory_evidence(weights, moments: DeltaMoments) -> float:
    """P(weighted treatment difference > 0) under the normal approximation."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size != moments.mu.size:
        raise DimensionMismatch(
            f"{w.size} weights for {moments.mu.size} outcomes"
        )
    var = float(w @ moments.cov @ w)
    if var <= 0.0:
        raise DegenerateVariance(f"weighted variance {var} is not positive")
    return float(1.0 - norm.cdf(-float(w @ moments.mu) / np.sqrt(var)))


def _simplex_search(moments: DeltaMoments, restarts: int = 32) -> np.ndarray:
    """Constrained maximization over the weight simplex (boundary solutions)."""
    k = moments.mu.size
    rng = np.random.Generator(np.random.PCG64(1812))
    constraints = [{"type": "eq", "fun": lambda w: w.sum() - 1.0}]
    bounds = [(0.0, 1.0)] * k

    def objective(w):
        var = float(w @ moments.cov @ w)
        if var <= 1e-300:
            return np.inf
        return float(w @ moments.mu) / np.sqrt(var) * -1.0

    best, best_val = None, np.inf
    starts = [np.full(k, 1.0 / k)] + list(rng.dirichlet(np.ones(k), restarts - 1))
    for start in starts:
        res = minimize(
            objective, start, method="SLSQP", bounds=bounds,
            constraints=constraints, options={"maxiter": 200, "ftol": 1e-12},
        )
        if res.success and res.fun < best_val:
            best, best_val = res.x, res.fun
    if best is None:
        raise NoPositiveDirection("constrained weight search failed to converge")
    best = np.clip(best, 0.0, None)
    return best / best.sum()


def optimize_weights(moments: DeltaMoments) -> np.ndarray:
    """Weights maximizing the approximate evidence of a positive weighted sum.

    The evidence is monotone in the scale-invariant ratio w.mu / sqrt(w'Sw),
    whose unconstrained maximizer is Sigma^{-1} mu; when that direction has a
    negative component the [0, 1] bounds bind and a constrained search runs
    instead.
    """
    if not np.any(moments.mu > 0.0):
        raise NoPositiveDirection(
            "no outcome has a positive anticipated difference"
        )
    cov = moments.cov + 1e-15 * np.eye(moments.mu.size)
    direction = np.linalg.solve(cov, moments.mu)
    if np.all(direction >= 0.0) and direction.sum() > 0.0:
        weights = direction / direction.sum()
    else:
        weights = _simplex_search(moments)
    if compensatory_evidence(weights, moments) <= 0.5:
        raise NoPositiveDirection(
            "no weight vector achieves better-than-even evidence"
        )
    return weights
