"""Replicated-trial study harness over the 24 benchmark configurations.

Encodes the eight treatment-difference patterns crossed with three outcome
correlations used throughout the numerical evaluation, runs replicated
trials for a chosen (configuration, design) pair, and aggregates the
superiority rate, stopping sample sizes, and estimation bias.
"""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .design import (
    DesignTarget,
    sample_size_compensatory,
    sample_size_mvn,
    sample_size_single,
)
from .engine import (
    DesignSpec,
    FIXED,
    _cumulative_alphas,
    replication_rngs,
    trajectory_probabilities,
)
from .errors import InfeasibleRule, InvalidParams, ZeroEffect
from .model import (
    CellProbabilities,
    DirichletParams,
    cell_probs_from_margins,
    pattern_bits,
)
from .rules import (
    AllRule,
    AnyRule,
    CompensatoryRule,
    DecisionRule,
    SingleRule,
    decision_threshold,
)

DELTA_GROUPS: dict[str, tuple[tuple[float, float], tuple[float, float]]] = {
    # group id -> (theta_E, theta_C); delta = theta_E - theta_C
    "1": ((0.40, 0.40), (0.60, 0.60)),
    "2": ((0.50, 0.50), (0.50, 0.50)),
    "3": ((0.55, 0.55), (0.45, 0.45)),
    "4": ((0.60, 0.60), (0.40, 0.40)),
    "5": ((0.70, 0.70), (0.30, 0.30)),
    "6": ((0.70, 0.50), (0.30, 0.50)),
    "7": ((0.60, 0.30), (0.40, 0.70)),
    "8": ((0.62, 0.54), (0.38, 0.46)),
}
CORRELATIONS: dict[str, float] = {"1": -0.30, "2": 0.00, "3": 0.30}

NULL_EVALUATION_N = 1000  # per-arm n for conditions that must not conclude

# The six decision rules evaluated side by side.  The two unequal-weight
# compensatory rules carry the weights that maximize approximate evidence for
# group 8 with zero / negative correlation respectively.
RULE_COLUMNS: dict[str, DecisionRule] = {
    "single": SingleRule(1),
    "any": AnyRule(),
    "all": AllRule(),
    "ce": CompensatoryRule((0.50, 0.50)),
    "cuu": CompensatoryRule((0.76, 0.24)),
    "cuc": CompensatoryRule((0.64, 0.36)),
}

# Weights used when *sizing* the unequal compensatory columns.  The
# uncorrelated column was sized with the simplified effect-proportional
# weights (delta of group 8 normalized), not the exact optimizer output.
PLANNING_WEIGHTS: dict[str, tuple[float, float]] = {
    "ce": (0.50, 0.50),
    "cuu": (0.75, 0.25),
    "cuc": (0.64, 0.36),
}


@dataclass(frozen=True, eq=False)
class DgmSpec:
    """One data-generating configuration: margins per arm, one correlation."""

    id: str
    theta_e: np.ndarray
    theta_c: np.ndarray
    rho: float
    phi_e: CellProbabilities
    phi_c: CellProbabilities

    @property
    def delta(self) -> np.ndarray:
        return self.theta_e - self.theta_c

    @property
    def k_outcomes(self) -> int:
        return self.theta_e.size


def dgm_from_margins(dgm_id: str, theta_e, theta_c, rho: float) -> DgmSpec:
    """Build a two-outcome configuration from margins and correlation."""
    phi_e = cell_probs_from_margins(theta_e, rho)
    phi_c = cell_probs_from_margins(theta_c, rho)
    the = np.asarray(theta_e, dtype=np.float64)
    thc = np.asarray(theta_c, dtype=np.float64)
    the.setflags(write=False)
    thc.setflags(write=False)
    return DgmSpec(dgm_id, the, thc, float(rho), phi_e, phi_c)


def dgm_table() -> list[DgmSpec]:
    """All 24 benchmark configurations (8 effect patterns x 3 correlations)."""
    out = []
    for group, (the, thc) in DELTA_GROUPS.items():
        for sub, rho in CORRELATIONS.items():
            out.append(dgm_from_margins(f"{group}.{sub}", the, thc, rho))
    return out


def get_dgm(dgm_id: str) -> DgmSpec:
    group, _, sub = dgm_id.partition(".")
    if group not in DELTA_GROUPS or sub not in CORRELATIONS:
        raise InvalidParams(f"unknown configuration id {dgm_id!r}")
    the, thc = DELTA_GROUPS[group]
    return dgm_from_margins(dgm_id, the, thc, CORRELATIONS[sub])


def least_favorable_dgm(rule: DecisionRule) -> str:
    """Group id of the null-boundary configuration hardest for the rule.

    The all rule's boundary has one truly positive outcome (group 6); every
    other rule is hardest against the global null (group 2).
    """
    return "6" if isinstance(rule, AllRule) else "2"


def shifted_dgm(dgm: DgmSpec, delta_shift: float) -> DgmSpec:
    """Configuration with every anticipated difference moved by delta_shift.

    Margins move symmetrically (E up by half, C down by half); correlation is
    kept.  Raises if the shifted margins leave (0, 1) or break feasibility.
    """
    return dgm_from_margins(
        f"{dgm.id}{delta_shift:+g}",
        dgm.theta_e + delta_shift / 2.0,
        dgm.theta_c - delta_shift / 2.0,
        dgm.rho,
    )


# ---------------------------------------------------------------------------
# Priors used in the sensitivity comparison
# ---------------------------------------------------------------------------

PRIOR_NAMES = {
    "1": "ref", "2": "jeffreys", "3": "matched",
    "4": "understated", "5": "overstated", "6": "opposing",
}
_PRIOR_CODES = {v: k for k, v in PRIOR_NAMES.items()}


def _shift_cells(phi: CellProbabilities, amount: float) -> CellProbabilities:
    """Move mass between the all-success and all-failure cells.

    Shifts every margin by ``amount`` while keeping the pairwise covariance
    structure of the remaining cells.
    """
    probs = phi.probs.copy()
    probs[0] += amount
    probs[-1] -= amount
    if np.any(probs <= 0.0):
        raise InvalidParams(f"cell shift {amount} leaves the simplex")
    return CellProbabilities(probs)


def named_priors(
    name: str, dgm: DgmSpec
) -> tuple[DirichletParams, DirichletParams]:
    """Per-arm Dirichlet priors from the six-point comparison catalog.

    ``ref`` is the near-flat reference (0.01 per cell), ``jeffreys`` the
    half-count prior; the informative four put 20 pseudo-subjects per arm at
    the true cells (``matched``), at margins shifted 0.05 toward the null
    (``understated``), 0.05 away (``overstated``), or with the arms swapped
    (``opposing``).
    """
    code = _PRIOR_CODES.get(name, name)
    q = 2**dgm.k_outcomes
    if code == "1":
        return (DirichletParams(np.full(q, 0.01)),) * 2
    if code == "2":
        return (DirichletParams(np.full(q, 0.5)),) * 2
    if code not in ("3", "4", "5", "6"):
        raise InvalidParams(f"unknown prior {name!r}; options: {sorted(_PRIOR_CODES)}")
    n0 = 20.0
    if code == "3":
        pe, pc = dgm.phi_e, dgm.phi_c
    elif code == "4":
        pe, pc = _shift_cells(dgm.phi_e, -0.05), _shift_cells(dgm.phi_c, +0.05)
    elif code == "5":
        pe, pc = _shift_cells(dgm.phi_e, +0.05), _shift_cells(dgm.phi_c, -0.05)
    else:
        pe, pc = dgm.phi_c, dgm.phi_e
    return DirichletParams(n0 * pe.probs), DirichletParams(n0 * pc.probs)


# ---------------------------------------------------------------------------
# Sample sizes for the rule columns
# ---------------------------------------------------------------------------

def planned_sample_size(
    dgm: DgmSpec, column: str, alpha: float = 0.05, beta: float = 0.20
) -> int | None:
    """Per-group n for one rule column, or None when not powerable.

    None marks conditions that should not conclude superiority; the study
    grid evaluates those at NULL_EVALUATION_N.
    """
    target = DesignTarget(alpha=alpha, beta=beta, anticipated=dgm)
    try:
        if column == "single":
            if dgm.delta[0] <= 0.0:
                return None
            return sample_size_single(target, 1)
        if column in ("any", "all"):
            return sample_size_mvn(RULE_COLUMNS[column], target)
        weights = np.asarray(PLANNING_WEIGHTS[column])
        if float(weights @ dgm.delta) <= 0.0:
            return None
        return sample_size_compensatory(target, weights)
    except (ZeroEffect, InfeasibleRule):
        return None


# ---------------------------------------------------------------------------
# Replicated simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SimulationReport:
    """Aggregates of one (configuration, design) condition."""

    condition: str
    reps: int
    p_conclude_superiority: float
    mean_n_at_stop: float  # over superiority-concluding trials; nan if none
    mean_n_overall: float  # over all trials at their stopping analysis
    bias: np.ndarray       # mean posterior-mean delta minus true delta
    mc_standard_error: float

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "reps": self.reps,
            "rate": self.p_conclude_superiority,
            "mean_n": self.mean_n_at_stop,
            "mean_n_overall": self.mean_n_overall,
            "bias": [float(b) for b in self.bias],
            "se": self.mc_standard_error,
        }


def _margin_means(alpha_rows: np.ndarray, bits: np.ndarray) -> np.ndarray:
    return (alpha_rows @ bits) / alpha_rows.sum(axis=1, keepdims=True)


def _simulate_block(args) -> np.ndarray:
    """Per-replication records for reps [start, stop): win, n, look, bias_k."""
    dgm, spec, seed, label, reps, start, stop = args
    bits = pattern_bits(dgm.k_outcomes)
    schedule = np.asarray(spec.schedule)
    rngs = replication_rngs(seed, label, reps)[start:stop]
    out = np.empty((stop - start, 3 + dgm.k_outcomes))
    for i, rng in enumerate(rngs):
        alpha_e, alpha_c = _cumulative_alphas(
            spec.schedule, dgm.phi_e, dgm.phi_c, spec.prior_e, spec.prior_c, rng
        )
        stop_look = len(schedule) - 1
        win = False
        for lo in range(0, len(schedule), 16):
            hi = min(lo + 16, len(schedule))
            probs = trajectory_probabilities(
                spec.rule, alpha_e[lo:hi], alpha_c[lo:hi],
                spec.draws_per_analysis, rng,
            )
            crossed = np.flatnonzero(probs > spec.threshold)
            if crossed.size:
                stop_look = lo + int(crossed[0])
                win = True
                break
        post_delta = (
            _margin_means(alpha_e[stop_look : stop_look + 1], bits)
            - _margin_means(alpha_c[stop_look : stop_look + 1], bits)
        )[0]
        out[i, 0] = win
        out[i, 1] = schedule[stop_look]
        out[i, 2] = stop_look
        out[i, 3:] = post_delta - dgm.delta
    return out


def simulate_condition(
    dgm: DgmSpec,
    spec: DesignSpec,
    reps: int,
    seed: int,
    workers: int = 1,
) -> SimulationReport:
    """Run ``reps`` independent trials of one design under one configuration.

    Every replication has its own generator stream derived from (seed,
    condition, index), so the report is identical for any worker count.
    Stopping data are drawn fresh per replication; a trial stops at the
    first scheduled analysis whose posterior superiority mass exceeds the
    design threshold.
    """
    if reps < 1:
        raise InvalidParams("need at least one replication")
    label = _condition_label(dgm, spec)
    bounds = np.linspace(0, reps, max(1, workers) + 1).astype(int)
    blocks = [
        (dgm, spec, seed, label, reps, int(a), int(b))
        for a, b in zip(bounds, bounds[1:])
        if b > a
    ]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_block, blocks))
    else:
        parts = [_simulate_block(b) for b in blocks]
    records = np.concatenate(parts, axis=0)
    wins = records[:, 0].astype(bool)
    rate = float(wins.mean())
    return SimulationReport(
        condition=label,
        reps=reps,
        p_conclude_superiority=rate,
        mean_n_at_stop=float(records[wins, 1].mean()) if wins.any() else float("nan"),
        mean_n_overall=float(records[:, 1].mean()),
        bias=records[:, 3:].mean(axis=0),
        mc_standard_error=float(np.sqrt(rate * (1.0 - rate) / reps)),
    )


def rule_tag(rule: DecisionRule) -> str:
    for tag, member in RULE_COLUMNS.items():
        if isinstance(rule, type(member)) and repr(rule) == repr(member):
            return tag
    if isinstance(rule, SingleRule):
        return f"single{rule.outcome}"
    if isinstance(rule, CompensatoryRule):
        return "comp[" + ",".join(f"{w:g}" for w in rule.weights) + "]"
    return type(rule).__name__.replace("Rule", "").lower()


def _condition_label(dgm: DgmSpec, spec: DesignSpec) -> str:
    return (
        f"dgm={dgm.id}|rule={rule_tag(spec.rule)}|design={spec.kind}"
        f"|n={spec.schedule[-1]}|looks={len(spec.schedule)}"
        f"|pcut={spec.threshold:g}"
    )


def fixed_design_bias(
    dgm: DgmSpec,
    n: int,
    reps: int,
    seed: int,
    prior_e: DirichletParams | None = None,
    prior_c: DirichletParams | None = None,
) -> np.ndarray:
    """Mean estimation bias of a fixed design, without decision draws.

    The estimand is the posterior mean of delta, which is available in
    closed form per replication, so only the data need simulating.  Averages
    over all replications.
    """
    if prior_e is None or prior_c is None:
        prior_e, prior_c = named_priors("ref", dgm)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, n])))
    counts_e = rng.multinomial(n, dgm.phi_e.probs, size=reps)
    counts_c = rng.multinomial(n, dgm.phi_c.probs, size=reps)
    bits = pattern_bits(dgm.k_outcomes)
    mean_e = _margin_means(prior_e.alpha + counts_e, bits)
    mean_c = _margin_means(prior_c.alpha + counts_c, bits)
    return (mean_e - mean_c).mean(axis=0) - dgm.delta


# ---------------------------------------------------------------------------
# Report output
# ---------------------------------------------------------------------------

CSV_FIELDS = ["condition", "reps", "rate", "mean_n", "mean_n_overall", "bias", "se"]


def write_csv(reports: list[SimulationReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for rep in reports:
            row = rep.as_dict()
            row["bias"] = ";".join(f"{b:.6f}" for b in rep.bias)
            writer.writerow(row)


def write_json(reports: list[SimulationReport], path) -> None:
    with open(path, "w") as fh:
        json.dump([rep.as_dict() for rep in reports], fh, indent=2)
        fh.write("\n")


def study_grid(
    rules: list[str],
    dgm_ids: list[str],
    reps: int,
    seed: int,
    alpha: float = 0.05,
    draws: int = 10_000,
    workers: int = 1,
) -> list[SimulationReport]:
    """Fixed-design rate/bias grid over configurations x rule columns.

    Powerable cells run at their computed per-group n; the rest at
    NULL_EVALUATION_N.  Cells whose sizing is infeasible are skipped with a
    warning.
    """
    reports = []
    for dgm_id in dgm_ids:
        dgm = get_dgm(dgm_id)
        for tag in rules:
            rule = RULE_COLUMNS[tag]
            try:
                n = planned_sample_size(dgm, tag)
            except InvalidParams as err:
                warnings.warn(f"skipping {dgm_id}/{tag}: {err}")
                continue
            prior_e, prior_c = named_priors("ref", dgm)
            spec = DesignSpec(
                kind=FIXED,
                schedule=(n if n is not None else NULL_EVALUATION_N,),
                threshold=decision_threshold(rule, alpha),
                rule=rule,
                prior_e=prior_e,
                prior_c=prior_c,
                draws_per_analysis=draws,
            )
            reports.append(simulate_condition(dgm, spec, reps, seed, workers))
    return reports
