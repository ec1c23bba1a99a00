"""Command-line front end.

Subcommands mirror the library surface: ``decide`` evaluates observed counts,
``samplesize`` runs the a priori calculators, ``weights`` optimizes
compensatory weights from anticipated counts, ``simulate`` runs replicated
trials (or the full benchmark grid), and ``calibrate`` finds a monitoring
threshold with controlled type I error.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or input errors.
Machine-readable outputs are byte-stable for a fixed seed and flag set.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import engine, harness, rules
from .design import (
    DesignTarget,
    sample_size_compensatory,
    sample_size_mvn,
    sample_size_sequential,
    sample_size_single,
)
from .errors import MvbernError
from .model import DirichletParams, JointCounts, pattern_index
from .weights import estimate_moments, optimize_weights

_USAGE_ERROR = 2
_RUNTIME_ERROR = 1


class UsageError(Exception):
    """Invalid flags or malformed input files."""


def _parse_weights(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(","))
    except ValueError as err:
        raise UsageError(f"bad weights {text!r}: {err}") from None
    return values


def _build_rule(args) -> rules.DecisionRule:
    name = args.rule
    if name in harness.RULE_COLUMNS and not (name == "single" and args.outcome != 1):
        if name == "ce" and args.weights:
            return rules.CompensatoryRule(_parse_weights(args.weights))
        return harness.RULE_COLUMNS[name]
    if name == "single":
        return rules.SingleRule(args.outcome)
    if name == "comp":
        if not args.weights:
            raise UsageError("--rule comp requires --weights w1,w2,...")
        return rules.CompensatoryRule(_parse_weights(args.weights))
    raise UsageError(f"unknown rule {name!r}")


def _load_counts(path: str) -> dict[str, JointCounts]:
    """Read per-arm counts from a text file.

    Two record shapes, one per line, comma-separated:
      arm,pattern,count   e.g. ``E,10,358`` (joint-response frequencies)
      arm,bits            e.g. ``E,10``     (one subject per line)
    Arms are E and C; blank lines and ``#`` comments are ignored.  The
    outcome count K is the length of the bit patterns.
    """
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as err:
        raise UsageError(f"cannot read counts file {path}: {err}") from None
    k_outcomes = None
    totals: dict[str, np.ndarray] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        try:
            if len(parts) == 3:
                arm, pattern, count = parts
            elif len(parts) == 2:
                (arm, pattern), count = parts, "1"
            else:
                raise ValueError(f"expected 2 or 3 fields, got {len(parts)}")
            if arm not in ("E", "C"):
                raise ValueError(f"arm must be E or C, got {arm!r}")
            if k_outcomes is None:
                k_outcomes = len(pattern)
                totals = {
                    "E": np.zeros(2**k_outcomes, dtype=np.int64),
                    "C": np.zeros(2**k_outcomes, dtype=np.int64),
                }
            totals[arm][pattern_index(pattern, k_outcomes)] += int(count)
        except (ValueError, MvbernError) as err:
            raise UsageError(f"{path}:{lineno}: bad record {line!r} ({err})") from None
    if k_outcomes is None:
        raise UsageError(f"{path}: no count records found")
    return {arm: JointCounts(vec) for arm, vec in totals.items()}


def _load_prior(
    spec: str, k_outcomes: int, dgm=None
) -> tuple[DirichletParams, DirichletParams]:
    if spec in ("ref", "1"):
        flat = DirichletParams(np.full(2**k_outcomes, 0.01))
        return flat, flat
    if spec in ("jeffreys", "2"):
        half = DirichletParams(np.full(2**k_outcomes, 0.5))
        return half, half
    named = set(harness.PRIOR_NAMES) | set(harness.PRIOR_NAMES.values())
    if spec in named:
        if dgm is None:
            raise UsageError(f"prior {spec!r} needs --dgm to anchor its cells")
        return harness.named_priors(spec, dgm)
    try:
        with open(spec) as fh:
            data = json.load(fh)
        return (
            DirichletParams(np.asarray(data["alpha_e"], dtype=float)),
            DirichletParams(np.asarray(data["alpha_c"], dtype=float)),
        )
    except (OSError, KeyError, ValueError) as err:
        raise UsageError(f"bad prior spec {spec!r}: {err}") from None


def _dgm_from_args(args) -> harness.DgmSpec:
    if args.dgm:
        return harness.get_dgm(args.dgm)
    if args.theta_e and args.theta_c:
        return harness.dgm_from_margins(
            "custom",
            _parse_weights(args.theta_e),
            _parse_weights(args.theta_c),
            args.rho,
        )
    raise UsageError("specify --dgm ID or --theta-e/--theta-c/--rho")


def _emit(payload, args) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _round_probability(value: float) -> float:
    return float(np.round(value, 3))


def cmd_decide(args) -> int:
    counts = _load_counts(args.counts)
    rule = _build_rule(args)
    n = counts["E"].n
    if counts["C"].n != n:
        raise UsageError(
            f"arms have unequal sizes ({n} vs {counts['C'].n}); "
            "the engine assumes equal per-arm n"
        )
    dgm = harness.get_dgm(args.dgm) if args.dgm else None
    prior_e, prior_c = _load_prior(args.prior, counts["E"].k_outcomes, dgm)
    spec = engine.DesignSpec(
        kind=engine.FIXED,
        schedule=(n,),
        threshold=rules.decision_threshold(rule, args.alpha),
        rule=rule,
        prior_e=prior_e,
        prior_c=prior_c,
        draws_per_analysis=args.draws,
    )
    rng = np.random.Generator(np.random.PCG64(args.seed))
    result = engine.run_fixed_trial(spec, counts["E"], counts["C"], rng)
    payload = {
        "rule": harness.rule_tag(rule),
        "n_per_arm": n,
        "probability": result.decision.posterior_probability,
        "probability_rounded": _round_probability(
            result.decision.posterior_probability
        ),
        "threshold": result.decision.threshold,
        "superior": result.decision.superior,
        "posterior_mean_delta": [float(d) for d in result.posterior_mean_delta],
        "mle_delta": [float(d) for d in result.mle_delta],
        "seed": args.seed,
    }
    _emit(payload, args)
    return 0


def cmd_samplesize(args) -> int:
    dgm = _dgm_from_args(args)
    target = DesignTarget(alpha=args.alpha, beta=args.beta, anticipated=dgm)
    rule = _build_rule(args)
    if isinstance(rule, rules.SingleRule):
        n = sample_size_single(target, rule.outcome)
    elif isinstance(rule, (rules.AnyRule, rules.AllRule)):
        n = sample_size_mvn(rule, target)
    else:
        n = sample_size_compensatory(target, rule.weights)
    payload = {
        "rule": harness.rule_tag(rule),
        "dgm": dgm.id,
        "alpha": args.alpha,
        "beta": args.beta,
        "n_per_group": n,
    }
    if args.design == "gs":
        ratios = _parse_weights(args.ratios)
        n_max = sample_size_sequential(target, rule, ratios, args.pcut)
        payload["sequential_n_max"] = n_max
        payload["sequential_schedule"] = list(
            engine.group_sequential_schedule(n_max, ratios)
        )
    _emit(payload, args)
    return 0


def cmd_weights(args) -> int:
    counts = _load_counts(args.counts)
    rng = np.random.Generator(np.random.PCG64(args.seed))
    moments = estimate_moments(counts["E"], counts["C"], args.draws, rng)
    w = optimize_weights(moments)
    payload = {
        "weights": [float(x) for x in w],
        "weights_rounded": [float(np.round(x, 2)) for x in w],
        "mu": [float(x) for x in moments.mu],
        "sigma2": [float(x) for x in moments.sigma2],
        "seed": args.seed,
        "draws": args.draws,
    }
    _emit(payload, args)
    return 0


def _design_spec_from_args(args, dgm, rule) -> engine.DesignSpec:
    prior_e, prior_c = _load_prior(args.prior, dgm.k_outcomes, dgm)
    threshold = args.pcut if args.pcut else rules.decision_threshold(rule, args.alpha)
    if args.design == "fixed":
        if args.n:
            n = args.n
        elif args.rule in harness.RULE_COLUMNS:
            n = harness.planned_sample_size(dgm, args.rule, args.alpha, args.beta)
            n = n if n is not None else harness.NULL_EVALUATION_N
        else:
            target = DesignTarget(args.alpha, args.beta, dgm)
            n = sample_size_compensatory(target, rule.weights)
        return engine.DesignSpec(
            engine.FIXED, (n,), threshold, rule, prior_e, prior_c, args.draws
        )
    if args.design == "gs":
        ratios = _parse_weights(args.ratios)
        if args.n:
            n_max = args.n
        else:
            target = DesignTarget(args.alpha, args.beta, dgm)
            n_max = sample_size_sequential(target, rule, ratios, args.pcut or 0.98)
        schedule = engine.group_sequential_schedule(n_max, ratios)
        return engine.DesignSpec(
            engine.GROUP_SEQUENTIAL, schedule, args.pcut or 0.98,
            rule, prior_e, prior_c, args.draws,
        )
    schedule = engine.adaptive_schedule()
    return engine.DesignSpec(
        engine.ADAPTIVE, schedule, args.pcut or 0.9968,
        rule, prior_e, prior_c, args.draws,
    )


def cmd_simulate(args) -> int:
    if args.full_grid:
        return _simulate_grid(args)
    dgm = _dgm_from_args(args)
    rule = _build_rule(args)
    spec = _design_spec_from_args(args, dgm, rule)
    report = harness.simulate_condition(
        dgm, spec, args.reps, args.seed, workers=args.threads
    )
    payload = report.as_dict()
    payload["seed"] = args.seed
    if args.out and args.format == "csv":
        harness.write_csv([report], args.out)
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        _emit(payload, args)
    return 0


def _simulate_grid(args) -> int:
    """Rate/bias grid over all 24 configurations and the six rule columns."""
    dgm_ids = [d.id for d in harness.dgm_table()]
    reports = harness.study_grid(
        list(harness.RULE_COLUMNS),
        dgm_ids,
        reps=args.reps,
        seed=args.seed,
        alpha=args.alpha,
        draws=args.draws,
        workers=args.threads,
    )
    if args.out:
        if args.format == "csv":
            harness.write_csv(reports, args.out)
        else:
            harness.write_json(reports, args.out)
    for rep in reports:
        print(
            f"{rep.condition:60s} rate={rep.p_conclude_superiority:.3f} "
            f"se={rep.mc_standard_error:.3f}"
        )
    return 0


def cmd_calibrate(args) -> int:
    rule = _build_rule(args)
    group = harness.least_favorable_dgm(rule)
    dgm = harness.get_dgm(args.dgm) if args.dgm else harness.get_dgm(f"{group}.1")
    prior_e, prior_c = _load_prior(args.prior, dgm.k_outcomes, dgm)
    if args.design == "adaptive" or not args.schedule:
        schedule = engine.adaptive_schedule()
    else:
        schedule = tuple(int(x) for x in args.schedule.split(","))
    spec = engine.DesignSpec(
        engine.ADAPTIVE if args.design == "adaptive" else engine.GROUP_SEQUENTIAL,
        schedule, 0.5, rule, prior_e, prior_c, args.draws,
    )
    threshold = engine.calibrate_threshold(dgm, spec, args.alpha, args.reps, args.seed)
    payload = {
        "rule": harness.rule_tag(rule),
        "dgm": dgm.id,
        "alpha": args.alpha,
        "analyses": len(schedule),
        "reps": args.reps,
        "seed": args.seed,
        "threshold": threshold,
    }
    _emit(payload, args)
    return 0


def _add_common(parser, *, seed: bool, draws: int | None = None) -> None:
    parser.add_argument("--out", help="write machine-readable output here")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    if seed:
        parser.add_argument(
            "--seed", type=int, required=True,
            help="generator seed (required: stochastic subcommand)",
        )
    if draws is not None:
        parser.add_argument(
            "--draws", type=int, default=draws,
            help="posterior draws per analysis",
        )


def _add_rule_flags(parser) -> None:
    parser.add_argument(
        "--rule", default="ce",
        choices=("single", "any", "all", "ce", "cuu", "cuc", "comp"),
    )
    parser.add_argument("--outcome", type=int, default=1,
                        help="1-based outcome for --rule single")
    parser.add_argument("--weights", help="comma-separated compensatory weights")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvbern",
        description="Bayesian superiority decisions for correlated binary outcomes",
    )
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decide", help="evaluate observed two-arm counts")
    p.add_argument("--counts", required=True, help="counts file (arm,pattern,count)")
    _add_rule_flags(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--prior", default="ref")
    p.add_argument("--dgm", help="configuration anchoring an informative prior")
    _add_common(p, seed=True, draws=100_000)
    p.set_defaults(func=cmd_decide)

    p = sub.add_parser("samplesize", help="a priori per-group sample size")
    _add_rule_flags(p)
    p.add_argument("--dgm", help="benchmark configuration id such as 4.2")
    p.add_argument("--theta-e", help="anticipated success probabilities, arm E")
    p.add_argument("--theta-c", help="anticipated success probabilities, arm C")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.20)
    p.add_argument("--design", choices=("fixed", "gs"), default="fixed")
    p.add_argument("--ratios", default="0.3333333333,0.6666666667,1")
    p.add_argument("--pcut", type=float, default=0.98,
                   help="flat monitoring threshold for --design gs")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_samplesize)

    p = sub.add_parser("weights", help="efficiency weights from anticipated counts")
    p.add_argument("--counts", required=True)
    _add_common(p, seed=True, draws=100_000)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("simulate", help="replicated trials of one condition")
    _add_rule_flags(p)
    p.add_argument("--dgm", help="benchmark configuration id such as 4.2")
    p.add_argument("--theta-e")
    p.add_argument("--theta-c")
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--design", choices=("fixed", "gs", "adaptive"), default="fixed")
    p.add_argument("--n", type=int, help="per-arm n (fixed) or max n (gs)")
    p.add_argument("--ratios", default="0.3333333333,0.6666666667,1")
    p.add_argument("--pcut", type=float,
                   help="decision threshold; defaults per rule/design")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--beta", type=float, default=0.20)
    p.add_argument("--prior", default="ref")
    p.add_argument("--reps", type=int, default=5000)
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes; output is identical for any count")
    p.add_argument("--full-grid", action="store_true",
                   help="run all 24 configurations x 6 rules instead of one cell")
    _add_common(p, seed=True, draws=10_000)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="monitoring threshold with type I = alpha")
    _add_rule_flags(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--design", choices=("gs", "adaptive"), default="adaptive")
    p.add_argument("--schedule", help="comma-separated per-arm analysis sizes")
    p.add_argument("--dgm", help="null configuration (default: least favorable)")
    p.add_argument("--prior", default="ref")
    p.add_argument("--reps", type=int, default=5000)
    _add_common(p, seed=True, draws=10_000)
    p.set_defaults(func=cmd_calibrate)
    return parser


def _splice_config(argv: list[str]) -> list[str]:
    """Insert config-file values as flags right after the subcommand.

    Explicit command-line flags still win because argparse keeps the last
    occurrence of a single-value option.
    """
    if "--config" not in argv:
        return argv
    path = argv[argv.index("--config") + 1]
    try:
        with open(path) as fh:
            overrides = json.load(fh)
        if not isinstance(overrides, dict):
            raise ValueError("config must be a JSON object")
    except (OSError, ValueError, IndexError) as err:
        raise UsageError(f"bad config file {path!r}: {err}") from None
    extra: list[str] = []
    for key, value in overrides.items():
        flag = "--" + str(key).replace("_", "-")
        if isinstance(value, bool):
            if value:
                extra.append(flag)
        else:
            extra.extend([flag, str(value)])
    subcommands = {"decide", "samplesize", "weights", "simulate", "calibrate"}
    for i, token in enumerate(argv):
        if token in subcommands:
            return argv[: i + 1] + extra + argv[i + 1 :]
    return argv + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _splice_config(argv)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return _USAGE_ERROR
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return _USAGE_ERROR
    except MvbernError as err:
        print(f"error: {err}", file=sys.stderr)
        return _RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
