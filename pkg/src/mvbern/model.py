"""Multivariate Bernoulli data model with Dirichlet-multinomial inference.

A joint response on K binary outcomes is one of Q = 2^K patterns.  Patterns
are kept in descending binary order throughout the package (for K=2:
``11, 10, 01, 00``), i.e. index q encodes the bits of Q-1-q with outcome 1 as
the most significant bit.  Every vector over patterns (cell probabilities,
counts, Dirichlet parameters, posterior draws) uses this order; it is part of
the wire contract for files and reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateMargin,
    DimensionMismatch,
    EmptyDraws,
    InfeasibleCorrelation,
    InvalidParams,
)

SIMPLEX_TOL = 1e-12


@lru_cache(maxsize=None)
def pattern_bits(k_outcomes: int) -> np.ndarray:
    """(Q, K) 0/1 matrix: row q holds the response pattern of cell q.

    Row 0 is all ones, row Q-1 all zeros (descending binary order).
    """
    if k_outcomes < 1:
        raise InvalidParams(f"need at least one outcome, got K={k_outcomes}")
    q = 2**k_outcomes
    codes = np.arange(q - 1, -1, -1, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(k_outcomes - 1, -1, -1)) & 1
    bits = bits.astype(np.float64)
    bits.setflags(write=False)
    return bits


def pattern_labels(k_outcomes: int) -> list[str]:
    """Bit-string labels ('11', '10', ...) in pattern order."""
    bits = pattern_bits(k_outcomes).astype(int)
    return ["".join(str(b) for b in row) for row in bits]


def pattern_index(label: str, k_outcomes: int) -> int:
    """Position of a bit-string pattern such as '10' in the fixed order."""
    if len(label) != k_outcomes or set(label) - {"0", "1"}:
        raise DimensionMismatch(
            f"pattern {label!r} is not a {k_outcomes}-bit string"
        )
    return 2**k_outcomes - 1 - int(label, 2)


def _outcome_count(length: int) -> int:
    k = int(length).bit_length() - 1
    if length < 2 or 2**k != length:
        raise DimensionMismatch(
            f"pattern vectors must have length 2^K >= 2, got {length}"
        )
    return k


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class CellProbabilities:
    """Probability of each joint-response pattern; a point on the Q-simplex."""

    probs: np.ndarray

    def __init__(self, probs) -> None:
        arr = _frozen(probs, np.float64)
        _outcome_count(arr.size)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InvalidParams("cell probabilities must lie in [0, 1]")
        if abs(arr.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidParams(
                f"cell probabilities must sum to 1, got {arr.sum()!r}"
            )
        object.__setattr__(self, "probs", arr)

    @property
    def k_outcomes(self) -> int:
        return _outcome_count(self.probs.size)

    @property
    def n_patterns(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class JointCounts:
    """Observed frequency of each joint-response pattern."""

    counts: np.ndarray

    def __init__(self, counts) -> None:
        arr = np.asarray(counts)
        if arr.dtype.kind == "f" and not np.all(arr == np.floor(arr)):
            raise InvalidParams("joint counts must be integers")
        arr = _frozen(arr, np.int64)
        _outcome_count(arr.size)
        if np.any(arr < 0):
            raise InvalidParams("joint counts must be nonnegative")
        object.__setattr__(self, "counts", arr)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def k_outcomes(self) -> int:
        return _outcome_count(self.counts.size)


@dataclass(frozen=True, eq=False)
class DirichletParams:
    """Hyperparameters of a Dirichlet over the pattern simplex (all > 0).

    Internally the vector is kept as a real prior part plus an exact integer
    count part so that repeated conjugate updates commute with batching: the
    float rounding happens once, when ``alpha`` is materialized.
    """

    alpha: np.ndarray

    def __init__(self, alpha, _counts=None) -> None:
        base = _frozen(alpha, np.float64)
        _outcome_count(base.size)
        if _counts is None:
            _counts = np.zeros(base.size, dtype=np.int64)
        total = base + _counts
        total.setflags(write=False)
        if np.any(total <= 0.0) or not np.all(np.isfinite(total)):
            raise InvalidParams("Dirichlet parameters must be finite and > 0")
        object.__setattr__(self, "alpha", total)
        object.__setattr__(self, "_base", base)
        object.__setattr__(self, "_count_part", _counts)

    @property
    def k_outcomes(self) -> int:
        return _outcome_count(self.alpha.size)

    @property
    def total(self) -> float:
        return float(self.alpha.sum())


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Prior as (prior sample size, prior mean cell probabilities).

    Expands to Dirichlet parameters n0 * phi0; n0 acts like a number of
    pseudo-observations spread over the patterns.
    """

    n0: float
    phi0: CellProbabilities

    def __post_init__(self) -> None:
        if not (self.n0 > 0.0 and np.isfinite(self.n0)):
            raise InvalidParams(f"prior sample size must be > 0, got {self.n0}")


@dataclass(frozen=True, eq=False)
class DeltaDraws:
    """Monte Carlo draws of the treatment difference vector delta (L x K)."""

    draws: np.ndarray

    def __init__(self, draws) -> None:
        arr = np.array(draws, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatch(f"delta draws must be L x K, got {arr.shape}")
        # support is the open interval; values at or 1 ulp beyond +-1 appear
        # only as float rounding of near-improper-prior draws
        if arr.size and np.any(np.abs(arr) > 1.0 + 1e-9):
            raise InvalidParams("treatment differences must lie in [-1, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "draws", arr)

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    @property
    def k_outcomes(self) -> int:
        return self.draws.shape[1]


def margins_of(phi: CellProbabilities) -> np.ndarray:
    """Per-outcome success probabilities: sum of cells with that bit set."""
    return phi.probs @ pattern_bits(phi.k_outcomes)


def pairwise_joint(phi: CellProbabilities, k: int, l: int) -> float:
    """P(outcome k and outcome l both succeed); k, l are 0-based indices."""
    bits = pattern_bits(phi.k_outcomes)
    mask = (bits[:, k] == 1.0) & (bits[:, l] == 1.0)
    return float(phi.probs[mask].sum())


def pairwise_correlation(phi: CellProbabilities, k: int = 0, l: int = 1) -> float:
    """Correlation between outcomes k and l implied by the cell table."""
    if k == l:
        raise DimensionMismatch("correlation needs two distinct outcomes")
    theta = margins_of(phi)
    tk, tl = theta[k], theta[l]
    if not (0.0 < tk < 1.0) or not (0.0 < tl < 1.0):
        raise DegenerateMargin(
            f"margins ({tk}, {tl}) give a zero-variance outcome"
        )
    tkl = pairwise_joint(phi, k, l)
    return (tkl - tk * tl) / np.sqrt(tk * (1.0 - tk) * tl * (1.0 - tl))


def cell_probs_from_margins(theta, rho: float) -> CellProbabilities:
    """Build the K=2 cell table with given margins and correlation.

    Inverts the correlation identity: the joint success cell is
    phi_11 = rho * sqrt(prod theta_k (1 - theta_k)) + theta_1 * theta_2,
    and must fall strictly inside the Frechet window
    (max(0, theta_1 + theta_2 - 1), min(theta_1, theta_2)).

    Only implemented for two outcomes: for K > 2 a set of pairwise
    correlations does not pin down the cell table, so callers supply the
    full table directly.
    """
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != (2,):
        raise DimensionMismatch(
            f"margins->cells inversion is defined for K=2, got shape {th.shape}"
        )
    if np.any(th <= 0.0) or np.any(th >= 1.0):
        raise InvalidParams("margins must lie strictly in (0, 1)")
    if not -1.0 <= rho <= 1.0:
        raise InvalidParams(f"correlation must lie in [-1, 1], got {rho}")
    t1, t2 = float(th[0]), float(th[1])
    p11 = rho * np.sqrt(t1 * (1.0 - t1) * t2 * (1.0 - t2)) + t1 * t2
    lo = max(0.0, t1 + t2 - 1.0)
    hi = min(t1, t2)
    if not (lo + SIMPLEX_TOL < p11 < hi - SIMPLEX_TOL):
        raise InfeasibleCorrelation(
            f"rho={rho} with margins ({t1}, {t2}) needs phi_11={p11:.6g} "
            f"outside the open window ({lo:.6g}, {hi:.6g})"
        )
    return CellProbabilities(
        [p11, t1 - p11, t2 - p11, 1.0 - t1 - t2 + p11]
    )


def prior_from_spec(spec: PriorSpec) -> DirichletParams:
    """Expand an (n0, phi0) prior into Dirichlet hyperparameters n0 * phi0."""
    return DirichletParams(spec.n0 * spec.phi0.probs)


def posterior_update(prior: DirichletParams, counts: JointCounts) -> DirichletParams:
    """Conjugate update: posterior alpha = prior alpha + observed counts.

    Exact in the integer part: updating with s1 then s2 equals updating with
    s1 + s2, bit for bit.
    """
    if prior.alpha.size != counts.counts.size:
        raise DimensionMismatch(
            f"prior has {prior.alpha.size} cells, counts {counts.counts.size}"
        )
    return DirichletParams(prior._base, prior._count_part + counts.counts)


def sample_dirichlet(
    params: DirichletParams, n_draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw an (L, Q) matrix of simplex points via normalized gammas.

    Valid for arbitrarily small positive shapes.  Rows whose gamma draws all
    underflow to zero (possible only when every alpha is tiny) are redrawn.
    """
    if n_draws < 1:
        raise EmptyDraws(f"need at least one draw, got {n_draws}")
    if np.any(params.alpha <= 0.0):
        raise InvalidParams("Dirichlet parameters must be > 0")
    gam = rng.standard_gamma(params.alpha, size=(n_draws, params.alpha.size))
    total = gam.sum(axis=1)
    while np.any(total == 0.0):
        dead = np.flatnonzero(total == 0.0)
        gam[dead] = rng.standard_gamma(params.alpha, size=(dead.size, params.alpha.size))
        total[dead] = gam[dead].sum(axis=1)
    return gam / total[:, None]


def sample_multinomial(
    phi: CellProbabilities, n: int, rng: np.random.Generator
) -> JointCounts:
    """Joint-response frequencies of n subjects drawn from the cell table."""
    if n < 0:
        raise InvalidParams(f"sample size must be >= 0, got {n}")
    return JointCounts(rng.multinomial(n, phi.probs))


def delta_draws(draws_e: np.ndarray, draws_c: np.ndarray) -> DeltaDraws:
    """Pair posterior cell draws by index and difference their margins.

    Row l of the result is margins(draws_e[l]) - margins(draws_c[l]).
    """
    de = np.asarray(draws_e, dtype=np.float64)
    dc = np.asarray(draws_c, dtype=np.float64)
    if de.shape != dc.shape:
        raise DimensionMismatch(
            f"draw matrices must share a shape, got {de.shape} vs {dc.shape}"
        )
    if de.ndim != 2:
        raise DimensionMismatch("draw matrices must be L x Q")
    bits = pattern_bits(_outcome_count(de.shape[1]))
    return DeltaDraws((de - dc) @ bits)


def dirichlet_margin_moments(params: DirichletParams) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and covariance of the margins theta under a Dirichlet.

    With m_k the prior-mean margin and m_kl the prior-mean pairwise joint,
    cov(theta_k, theta_l) = (m_kl - m_k m_l) / (total + 1); the diagonal uses
    m_kk = m_k.
    """
    bits = pattern_bits(params.k_outcomes)
    weights = params.alpha / params.total
    mean = weights @ bits
    joint = (bits * weights[:, None]).T @ bits
    cov = (joint - np.outer(mean, mean)) / (params.total + 1.0)
    return mean, cov


def posterior_mean_delta(
    params_e: DirichletParams, params_c: DirichletParams
) -> np.ndarray:
    """Exact posterior mean of delta = theta_E - theta_C."""
    mean_e, _ = dirichlet_margin_moments(params_e)
    mean_c, _ = dirichlet_margin_moments(params_c)
    return mean_e - mean_c
