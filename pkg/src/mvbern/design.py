"""A priori sample-size calculators for each decision rule.

All calculators target one-sided type I error ``alpha`` and power
``1 - beta`` for two equal arms, taking anticipated success probabilities and
the outcome correlation from a data-generating configuration.  Variances are
evaluated at the anticipated (alternative) parameters, and results round up
to the next integer per group.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import norm, qmc

from .errors import InfeasibleRule, InvalidParams, ZeroEffect
from .model import CellProbabilities, pairwise_joint
from .rules import AllRule, AnyRule, CompensatoryRule, DecisionRule, SingleRule

if TYPE_CHECKING:
    from .harness import DgmSpec

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)
_MAX_N_SEARCH = 2_000_000


@dataclass(frozen=True)
class DesignTarget:
    """Error-rate targets plus the anticipated data-generating configuration."""

    alpha: float
    beta: float
    anticipated: "DgmSpec"

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise InvalidParams(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise InvalidParams(f"beta must lie in (0, 1), got {self.beta}")


def bivariate_normal_cdf(h: float, k: float, rho: float) -> float:
    """P(X <= h, Y <= k) for standard normals with correlation rho.

    Integrates the known derivative of the CDF in rho from the independent
    case with fixed Gauss-Legendre quadrature; accurate to ~1e-10 for
    |rho| <= 0.99 and exact at rho in {-1, 0, 1}.
    """
    if not -1.0 <= rho <= 1.0:
        raise InvalidParams(f"correlation must lie in [-1, 1], got {rho}")
    ph, pk = norm.cdf(h), norm.cdf(k)
    if rho == 0.0 or np.isinf(h) or np.isinf(k):
        return float(ph * pk)
    if rho == 1.0:
        return float(min(ph, pk))
    if rho == -1.0:
        return float(max(0.0, ph + pk - 1.0))
    t = 0.5 * rho * (_GL_NODES + 1.0)
    dens = np.exp(
        -(h * h - 2.0 * t * h * k + k * k) / (2.0 * (1.0 - t * t))
    ) / (2.0 * np.pi * np.sqrt(1.0 - t * t))
    return float(ph * pk + 0.5 * rho * np.dot(_GL_WEIGHTS, dens))


def mvn_cdf(upper, corr, n_points: int = 2**13, seed: int = 20210905) -> float:
    """P(Z <= upper) for Z ~ N(0, corr) of any dimension.

    Dimensions one and two use closed form / deterministic quadrature;
    higher dimensions use separation-of-variables with a scrambled Sobol
    rule under a fixed seed, so results are reproducible.
    """
    b = np.asarray(upper, dtype=np.float64)
    r = np.asarray(corr, dtype=np.float64)
    dim = b.size
    if r.shape != (dim, dim):
        raise InvalidParams(f"correlation must be {dim}x{dim}, got {r.shape}")
    if dim == 1:
        return float(norm.cdf(b[0]))
    if dim == 2:
        return bivariate_normal_cdf(b[0], b[1], r[0, 1])
    order = np.argsort(b)
    b = b[order]
    r = r[np.ix_(order, order)]
    chol = np.linalg.cholesky(r + 1e-12 * np.eye(dim))
    sob = qmc.Sobol(d=dim - 1, scramble=True, seed=seed)
    u = sob.random(n_points)
    y = np.zeros((n_points, dim - 1))
    cond = np.full(n_points, norm.cdf(b[0] / chol[0, 0]))
    prob = cond.copy()
    for i in range(1, dim):
        y[:, i - 1] = norm.ppf(np.clip(u[:, i - 1] * cond, 1e-15, 1.0 - 1e-15))
        cond = norm.cdf((b[i] - y[:, :i] @ chol[i, :i]) / chol[i, i])
        prob *= cond
    return float(prob.mean())


def _margin_variances(theta: np.ndarray) -> np.ndarray:
    return theta * (1.0 - theta)


def _pair_covariance(phi: CellProbabilities, theta: np.ndarray, k: int, l: int) -> float:
    return pairwise_joint(phi, k, l) - theta[k] * theta[l]


def _arm_weighted_variance(w: np.ndarray, theta: np.ndarray, phi: CellProbabilities) -> float:
    """Variance of the weighted success score for one subject in one arm."""
    var = float(np.dot(w * w, _margin_variances(theta)))
    k_out = theta.size
    for k in range(k_out):
        for l in range(k + 1, k_out):
            var += 2.0 * w[k] * w[l] * _pair_covariance(phi, theta, k, l)
    return var


def _ceil_n(raw: float) -> int:
    n = int(np.ceil(raw - 1e-9))
    return max(n, 2)


def sample_size_single(target: DesignTarget, outcome: int = 1) -> int:
    """Per-group n for a two-proportion z-test on one primary outcome."""
    dgm = target.anticipated
    idx = outcome - 1
    delta = float(dgm.theta_e[idx] - dgm.theta_c[idx])
    if delta == 0.0:
        raise ZeroEffect(f"outcome {outcome} has zero anticipated difference")
    z_sum = norm.ppf(1.0 - target.alpha) + norm.ppf(1.0 - target.beta)
    var_sum = float(
        _margin_variances(dgm.theta_e)[idx] + _margin_variances(dgm.theta_c)[idx]
    )
    return _ceil_n(z_sum**2 * var_sum / delta**2)


def sample_size_compensatory(target: DesignTarget, weights) -> int:
    """Per-group n for the weighted-sum rule via its normal approximation."""
    w = np.asarray(weights, dtype=np.float64)
    dgm = target.anticipated
    effect = float(np.dot(w, dgm.theta_e - dgm.theta_c))
    if effect == 0.0:
        raise ZeroEffect("weighted anticipated difference is zero")
    z_sum = norm.ppf(1.0 - target.alpha) + norm.ppf(1.0 - target.beta)
    var_sum = _arm_weighted_variance(w, dgm.theta_e, dgm.phi_e) + \
        _arm_weighted_variance(w, dgm.theta_c, dgm.phi_c)
    return _ceil_n(z_sum**2 * var_sum / effect**2)


def _test_statistic_geometry(dgm) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-outcome sd of delta-hat * sqrt(n) and correlation of the z stats."""
    k_out = dgm.theta_e.size
    var_e = _margin_variances(dgm.theta_e)
    var_c = _margin_variances(dgm.theta_c)
    var_sum = var_e + var_c
    corr = np.eye(k_out)
    for k in range(k_out):
        for l in range(k + 1, k_out):
            cov = _pair_covariance(dgm.phi_e, dgm.theta_e, k, l) + \
                _pair_covariance(dgm.phi_c, dgm.theta_c, k, l)
            corr[k, l] = corr[l, k] = cov / np.sqrt(var_sum[k] * var_sum[l])
    delta = np.asarray(dgm.theta_e - dgm.theta_c, dtype=np.float64)
    return delta, np.sqrt(var_sum), corr


def _mvn_power(rule, delta, sd, pooled_sd, corr, n: int, alpha: float) -> float:
    root_n = np.sqrt(n)
    if isinstance(rule, AllRule):
        # Co-primary tests standardize under the pooled null; power evaluates
        # the alternative-variance distribution against that critical value.
        crit = norm.ppf(1.0 - alpha) * pooled_sd
        return mvn_cdf((delta * root_n - crit) / sd, corr)
    crit = norm.ppf(1.0 - alpha / 2.0)
    return 1.0 - mvn_cdf(crit - delta * root_n / sd, corr)


def sample_size_mvn(rule: DecisionRule, target: DesignTarget) -> int:
    """Per-group n for the any/all rules via a joint normal approximation.

    The K per-outcome z statistics are treated as jointly normal with the
    correlation implied by the anticipated cell tables; n increases until
    the approximated power reaches 1 - beta.
    """
    if not isinstance(rule, (AllRule, AnyRule)):
        raise InvalidParams("joint-normal sizing applies to the any/all rules")
    dgm = target.anticipated
    delta, sd, corr = _test_statistic_geometry(dgm)
    if isinstance(rule, AllRule) and np.any(delta <= 0.0):
        raise InfeasibleRule("the all rule needs every anticipated difference > 0")
    if isinstance(rule, AnyRule) and not np.any(delta > 0.0):
        raise InfeasibleRule("the any rule needs some anticipated difference > 0")
    pooled = (dgm.theta_e + dgm.theta_c) / 2.0
    pooled_sd = np.sqrt(2.0 * pooled * (1.0 - pooled))
    goal = 1.0 - target.beta
    for n in range(2, _MAX_N_SEARCH):
        if _mvn_power(rule, delta, sd, pooled_sd, corr, n, target.alpha) >= goal:
            return n
    raise InfeasibleRule("no sample size under the search cap reaches the power goal")


def _scalar_effect(rule: DecisionRule, target: DesignTarget) -> tuple[float, float]:
    """(effect, per-pair variance) of the scalar statistic a rule monitors."""
    dgm = target.anticipated
    if isinstance(rule, SingleRule):
        w = np.zeros(dgm.theta_e.size)
        w[rule.outcome - 1] = 1.0
    elif isinstance(rule, CompensatoryRule):
        w = rule.weights
    else:
        raise InvalidParams(
            "sequential sizing is defined for the single and compensatory rules"
        )
    effect = float(np.dot(w, dgm.theta_e - dgm.theta_c))
    var_sum = _arm_weighted_variance(w, dgm.theta_e, dgm.phi_e) + \
        _arm_weighted_variance(w, dgm.theta_c, dgm.phi_c)
    return effect, var_sum


def sequential_mvn_power(
    n_looks, effect: float, var_sum: float, p_cut: float
) -> float:
    """Probability that a monitored z process ever crosses a flat boundary.

    The z statistics at the looks are jointly normal with correlation
    sqrt(n_i / n_j) and drift effect * sqrt(n_m / var_sum); the boundary is
    the normal quantile of the posterior threshold.
    """
    n = np.asarray(n_looks, dtype=np.float64)
    if n.ndim != 1 or n.size < 1 or np.any(np.diff(n) <= 0.0):
        raise InvalidParams("looks must be a strictly increasing vector")
    crit = norm.ppf(p_cut)
    drift = effect * np.sqrt(n / var_sum)
    corr = np.sqrt(np.minimum.outer(n, n) / np.maximum.outer(n, n))
    return 1.0 - mvn_cdf(crit - drift, corr)


def sample_size_sequential(
    target: DesignTarget, rule: DecisionRule, ratios, p_cut: float
) -> int:
    """Maximum per-group n for a group-sequential design at a flat threshold.

    Inflates the fixed-design n until the joint crossing probability over the
    interim looks reaches the power goal, the same sizing step external
    group-sequential software performs.
    """
    effect, var_sum = _scalar_effect(rule, target)
    if effect == 0.0:
        raise ZeroEffect("monitored anticipated difference is zero")
    frac = np.asarray(ratios, dtype=np.float64)
    goal = 1.0 - target.beta
    z_sum = norm.ppf(1.0 - target.alpha) + norm.ppf(1.0 - target.beta)
    start = max(2, int(z_sum**2 * var_sum / effect**2))
    for n_max in range(start, _MAX_N_SEARCH):
        looks = np.unique(np.maximum(2, np.floor(n_max * frac + 0.5).astype(int)))
        if sequential_mvn_power(looks, effect, var_sum, p_cut) >= goal:
            return n_max
    raise InfeasibleRule("no sample size under the search cap reaches the power goal")
