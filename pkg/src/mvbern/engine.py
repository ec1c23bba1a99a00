"""Trial execution: fixed designs, interim monitoring, threshold calibration.

A trial evaluates accumulating two-arm count data at one or more scheduled
per-arm sample sizes.  Each analysis updates the Dirichlet posterior per arm,
draws treatment-difference samples, and compares the superiority mass to the
decision threshold; monitored designs stop at the first crossing.

Two evaluation paths share the same statistics: a scalar path built from the
public model/rules operations (used for single trials and the CLI), and a
batched float32 gamma kernel used by the replication-heavy calibration and
simulation entry points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import (
    CountMismatch,
    InvalidParams,
    InvalidRatios,
    StreamExhausted,
)
from .model import (
    CellProbabilities,
    DirichletParams,
    JointCounts,
    delta_draws,
    pattern_bits,
    posterior_mean_delta,
    posterior_update,
    sample_dirichlet,
)
from .rules import (
    AllRule,
    AnyRule,
    CompensatoryRule,
    Decision,
    DecisionRule,
    SingleRule,
    decide,
    superiority_probability,
)

FIXED = "fixed"
GROUP_SEQUENTIAL = "group_sequential"
ADAPTIVE = "adaptive"
_KINDS = (FIXED, GROUP_SEQUENTIAL, ADAPTIVE)


@dataclass(frozen=True, eq=False)
class DesignSpec:
    """Everything needed to run one trial design end to end."""

    kind: str
    schedule: tuple[int, ...]
    threshold: float
    rule: DecisionRule
    prior_e: DirichletParams
    prior_c: DirichletParams
    draws_per_analysis: int = 10_000

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise InvalidParams(f"design kind must be one of {_KINDS}")
        sched = tuple(int(n) for n in self.schedule)
        if not sched or any(n < 1 for n in sched):
            raise InvalidParams("schedule must be a nonempty vector of n >= 1")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise InvalidParams("schedule must be strictly increasing")
        if self.kind == FIXED and len(sched) != 1:
            raise InvalidParams("a fixed design has exactly one analysis")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidParams("threshold must lie in (0, 1)")
        if self.draws_per_analysis < 1:
            raise InvalidParams("draws_per_analysis must be >= 1")
        if self.prior_e.k_outcomes != self.prior_c.k_outcomes:
            raise InvalidParams("arm priors must share the outcome count")
        object.__setattr__(self, "schedule", sched)

    @property
    def n_analyses(self) -> int:
        return len(self.schedule)

    @property
    def k_outcomes(self) -> int:
        return self.prior_e.k_outcomes


@dataclass(frozen=True, eq=False)
class TrialResult:
    """Decision plus where and how the trial stopped."""

    decision: Decision
    n_at_stop: int
    analyses_performed: int
    posterior_mean_delta: np.ndarray
    mle_delta: np.ndarray
    trajectory: tuple[float, ...]


class ResponseStream(Protocol):
    """Source of joint responses for one arm, consumed analysis by analysis."""

    def take(self, count: int) -> JointCounts:
        """Joint-response frequencies of the next ``count`` subjects."""
        ...


class SimulatedStream:
    """Stream that draws subjects from a fixed cell table."""

    def __init__(self, phi: CellProbabilities, rng: np.random.Generator) -> None:
        self._phi = phi
        self._rng = rng

    def take(self, count: int) -> JointCounts:
        return JointCounts(self._rng.multinomial(count, self._phi.probs))


class RecordedStream:
    """Stream replaying recorded subjects (cell indices in arrival order)."""

    def __init__(self, cells: Sequence[int], k_outcomes: int) -> None:
        self._cells = list(cells)
        self._q = 2**k_outcomes
        if any(not 0 <= c < self._q for c in self._cells):
            raise InvalidParams("cell indices must lie in [0, 2^K)")
        self._pos = 0

    def __len__(self) -> int:
        return len(self._cells)

    def take(self, count: int) -> JointCounts:
        if self._pos + count > len(self._cells):
            raise StreamExhausted(
                f"stream holds {len(self._cells)} subjects, "
                f"{self._pos + count} requested"
            )
        chunk = self._cells[self._pos : self._pos + count]
        self._pos += count
        return JointCounts(np.bincount(chunk, minlength=self._q))


def recorded_streams_from_file(path) -> tuple[RecordedStream, RecordedStream]:
    """Per-arm replay streams from a subject-level file.

    One record per subject in arrival order, comma-separated ``arm,bits``
    (e.g. ``E,10``); arms are E and C.  Blank lines and ``#`` comments are
    skipped.
    """
    from .model import pattern_index

    arms: dict[str, list[int]] = {"E": [], "C": []}
    k_outcomes = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2 or parts[0] not in arms:
                raise InvalidParams(f"{path}:{lineno}: bad subject record {line!r}")
            if k_outcomes is None:
                k_outcomes = len(parts[1])
            arms[parts[0]].append(pattern_index(parts[1], k_outcomes))
    if k_outcomes is None:
        raise InvalidParams(f"{path}: no subject records found")
    return (
        RecordedStream(arms["E"], k_outcomes),
        RecordedStream(arms["C"], k_outcomes),
    )


def group_sequential_schedule(n_fd: int, ratios: Iterable[float]) -> tuple[int, ...]:
    """Interim sample sizes at fixed fractions of a final sample size.

    Fractions are rounded half-up, clamped to at least 2 subjects, and
    deduplicated.
    """
    frac = [float(r) for r in ratios]
    if not frac or any(not 0.0 < r <= 1.0 for r in frac):
        raise InvalidRatios("ratios must lie in (0, 1]")
    if any(b <= a for a, b in zip(frac, frac[1:])):
        raise InvalidRatios("ratios must be strictly ascending")
    if frac[-1] != 1.0:
        raise InvalidRatios("the final ratio must be 1")
    if n_fd < 1:
        raise InvalidParams(f"final sample size must be >= 1, got {n_fd}")
    looks = [max(2, int(np.floor(n_fd * r + 0.5))) for r in frac]
    out: list[int] = []
    for n in looks:
        if not out or n > out[-1]:
            out.append(n)
    return tuple(out)


def adaptive_schedule(
    start: int = 5, dense_until: int = 50, step: int = 5, cap: int = 500
) -> tuple[int, ...]:
    """Monitoring schedule: every subject up to a point, then coarser steps.

    Defaults give the 136-look schedule (5, 6, ..., 50, 55, ..., 500).
    """
    if not 2 <= start <= dense_until <= cap or step < 1:
        raise InvalidParams("need 2 <= start <= dense_until <= cap and step >= 1")
    looks = list(range(start, dense_until + 1))
    looks += list(range(dense_until + step, cap + 1, step))
    return tuple(looks)


def _analysis_probability(
    rule: DecisionRule,
    post_e: DirichletParams,
    post_c: DirichletParams,
    n_draws: int,
    rng: np.random.Generator,
) -> float:
    draws_e = sample_dirichlet(post_e, n_draws, rng)
    draws_c = sample_dirichlet(post_c, n_draws, rng)
    return superiority_probability(rule, delta_draws(draws_e, draws_c))


def _mle_delta(counts_e: JointCounts, counts_c: JointCounts) -> np.ndarray:
    bits = pattern_bits(counts_e.k_outcomes)
    freq_e = counts_e.counts / max(counts_e.n, 1)
    freq_c = counts_c.counts / max(counts_c.n, 1)
    return (freq_e - freq_c) @ bits


def run_fixed_trial(
    spec: DesignSpec,
    counts_e: JointCounts,
    counts_c: JointCounts,
    rng: np.random.Generator,
) -> TrialResult:
    """Single-analysis decision from complete per-arm count data."""
    if spec.kind != FIXED:
        raise InvalidParams(f"expected a fixed design, got {spec.kind!r}")
    n = spec.schedule[0]
    if counts_e.n != n or counts_c.n != n:
        raise CountMismatch(
            f"scheduled n={n} per arm, observed ({counts_e.n}, {counts_c.n})"
        )
    post_e = posterior_update(spec.prior_e, counts_e)
    post_c = posterior_update(spec.prior_c, counts_c)
    prob = _analysis_probability(
        spec.rule, post_e, post_c, spec.draws_per_analysis, rng
    )
    return TrialResult(
        decision=decide(prob, spec.threshold),
        n_at_stop=n,
        analyses_performed=1,
        posterior_mean_delta=posterior_mean_delta(post_e, post_c),
        mle_delta=_mle_delta(counts_e, counts_c),
        trajectory=(prob,),
    )


def run_sequential_trial(
    spec: DesignSpec,
    stream_e: ResponseStream,
    stream_c: ResponseStream,
    rng: np.random.Generator,
) -> TrialResult:
    """Monitor accumulating data, stopping at the first threshold crossing.

    Posterior draws at each analysis come from a generator spawned per
    analysis index, so a trial's trajectory prefix does not depend on where
    it stops.
    """
    analysis_rngs = rng.spawn(spec.n_analyses)
    cum_e = JointCounts(np.zeros(2**spec.k_outcomes, dtype=np.int64))
    cum_c = JointCounts(np.zeros(2**spec.k_outcomes, dtype=np.int64))
    trajectory: list[float] = []
    previous_n = 0
    for m, n in enumerate(spec.schedule):
        cum_e = JointCounts(cum_e.counts + stream_e.take(n - previous_n).counts)
        cum_c = JointCounts(cum_c.counts + stream_c.take(n - previous_n).counts)
        previous_n = n
        post_e = posterior_update(spec.prior_e, cum_e)
        post_c = posterior_update(spec.prior_c, cum_c)
        prob = _analysis_probability(
            spec.rule, post_e, post_c, spec.draws_per_analysis, analysis_rngs[m]
        )
        trajectory.append(prob)
        if prob > spec.threshold:
            break
    return TrialResult(
        decision=decide(trajectory[-1], spec.threshold),
        n_at_stop=previous_n,
        analyses_performed=len(trajectory),
        posterior_mean_delta=posterior_mean_delta(post_e, post_c),
        mle_delta=_mle_delta(cum_e, cum_c),
        trajectory=tuple(trajectory),
    )


# ---------------------------------------------------------------------------
# Batched kernel
# ---------------------------------------------------------------------------

def _rule_cell_scores(rule: DecisionRule, k_outcomes: int) -> np.ndarray | None:
    """Per-cell score c with w.theta = c.phi for scalar-score rules.

    Returns None for the any/all rules, which need the full margin vector.
    """
    bits = pattern_bits(k_outcomes)
    if isinstance(rule, SingleRule):
        return bits[:, rule.outcome - 1].copy()
    if isinstance(rule, CompensatoryRule):
        return bits @ rule.weights
    return None


def _score_groups(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse cells sharing a score: (one-hot Q x G matrix, G scores)."""
    uniq, inverse = np.unique(scores, return_inverse=True)
    onehot = np.zeros((scores.size, uniq.size))
    onehot[np.arange(scores.size), inverse] = 1.0
    return onehot, uniq


def trajectory_probabilities(
    rule: DecisionRule,
    alpha_e: np.ndarray,
    alpha_c: np.ndarray,
    n_draws: int,
    rng: np.random.Generator,
    dtype=np.float32,
) -> np.ndarray:
    """Posterior superiority mass for a batch of analyses.

    ``alpha_e``/``alpha_c`` hold one Dirichlet parameter vector per row; the
    result has one probability per row, each estimated from ``n_draws``
    paired draws.  Cells that enter a scalar-score rule with equal weight are
    aggregated before sampling (exact, by Dirichlet aggregation).  Draws are
    float32 by default; pattern comparisons use products, not ratios, so no
    division noise enters.  Intended for data-informed parameter rows; for
    prior-only rows with all-tiny alpha pass dtype=np.float64 so gamma draws
    cannot underflow to an all-zero row.
    """
    alpha_e = np.atleast_2d(alpha_e)
    alpha_c = np.atleast_2d(alpha_c)
    if alpha_e.shape != alpha_c.shape:
        raise InvalidParams("arm parameter batches must share a shape")
    k_out = int(np.log2(alpha_e.shape[1]))
    scores = _rule_cell_scores(rule, k_out)
    if scores is not None:
        onehot, group_scores = _score_groups(scores)
        ae = alpha_e @ onehot
        ac = alpha_c @ onehot
        gs = group_scores.astype(dtype)
        ge = rng.standard_gamma(ae, size=(n_draws,) + ae.shape, dtype=dtype)
        gc = rng.standard_gamma(ac, size=(n_draws,) + ac.shape, dtype=dtype)
        hits = (ge @ gs) * gc.sum(axis=2) > (gc @ gs) * ge.sum(axis=2)
        return hits.mean(axis=0, dtype=np.float64)
    bits = pattern_bits(k_out).astype(dtype)
    ge = rng.standard_gamma(alpha_e, size=(n_draws,) + alpha_e.shape, dtype=dtype)
    gc = rng.standard_gamma(alpha_c, size=(n_draws,) + alpha_c.shape, dtype=dtype)
    se = ge.sum(axis=2)[..., None]
    sc = gc.sum(axis=2)[..., None]
    wins = (ge @ bits) * sc > (gc @ bits) * se
    if isinstance(rule, AllRule):
        return wins.all(axis=2).mean(axis=0, dtype=np.float64)
    if isinstance(rule, AnyRule):
        # max over outcomes of the per-outcome evidence, as in the scalar path
        return wins.mean(axis=0, dtype=np.float64).max(axis=1)
    raise InvalidParams(f"unsupported rule {rule!r}")  # pragma: no cover


def _cumulative_alphas(
    schedule: Sequence[int],
    phi_e: CellProbabilities,
    phi_c: CellProbabilities,
    prior_e: DirichletParams,
    prior_c: DirichletParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate one trial's data and return per-analysis posterior alphas."""
    incs = np.diff(np.concatenate([[0], np.asarray(schedule)]))
    counts_e = np.cumsum(
        np.stack([rng.multinomial(int(i), phi_e.probs) for i in incs]), axis=0
    )
    counts_c = np.cumsum(
        np.stack([rng.multinomial(int(i), phi_c.probs) for i in incs]), axis=0
    )
    return prior_e.alpha + counts_e, prior_c.alpha + counts_c


def replication_rngs(seed, label: str, reps: int) -> list[np.random.Generator]:
    """One independent generator per replication.

    Streams derive from (seed, crc32(label), replication index), so any
    replication can be reproduced in isolation and results do not depend on
    chunking or worker count.
    """
    import zlib

    root = np.random.SeedSequence([int(seed), zlib.crc32(label.encode())])
    return [np.random.Generator(np.random.PCG64(c)) for c in root.spawn(reps)]


def calibrate_threshold(
    least_favorable,
    spec: DesignSpec,
    alpha: float,
    reps: int,
    seed: int,
) -> float:
    """Decision threshold with empirical type I error alpha under monitoring.

    Simulates ``reps`` trials from the least favorable (null boundary)
    configuration, records each trial's maximum posterior superiority mass
    over all scheduled analyses, and returns the (1 - alpha) empirical
    quantile of that maximum: the smallest sample value whose exceedance
    fraction is at most alpha.  ``spec.threshold`` is ignored.
    """
    maxima = calibration_maxima(least_favorable, spec, reps, seed)
    return _quantile_threshold(maxima, alpha)


def calibration_maxima(least_favorable, spec: DesignSpec, reps: int, seed: int) -> np.ndarray:
    """Per-replication maxima of the posterior trajectory under the null."""
    if reps < 1:
        raise InvalidParams("calibration needs at least one replication")
    label = f"calibrate|{least_favorable.id}|{spec.kind}|{len(spec.schedule)}"
    maxima = np.empty(reps)
    for i, rng in enumerate(replication_rngs(seed, label, reps)):
        alpha_e, alpha_c = _cumulative_alphas(
            spec.schedule,
            least_favorable.phi_e,
            least_favorable.phi_c,
            spec.prior_e,
            spec.prior_c,
            rng,
        )
        probs = trajectory_probabilities(
            spec.rule, alpha_e, alpha_c, spec.draws_per_analysis, rng
        )
        maxima[i] = probs.max()
    return maxima


def _quantile_threshold(maxima: np.ndarray, alpha: float) -> float:
    if not 0.0 < alpha < 1.0:
        raise InvalidParams(f"alpha must lie in (0, 1), got {alpha}")
    ordered = np.sort(maxima)
    allowed = int(np.floor(alpha * maxima.size))
    return float(ordered[maxima.size - allowed - 1])
