"""Exception hierarchy shared across the package.

Most errors derive from ValueError so callers can catch them with either the
semantic type or the builtin.
"""


class MvbernError(Exception):
    """Base class for all package-specific errors."""


class InfeasibleCorrelation(MvbernError, ValueError):
    """Requested (margins, correlation) combination has no valid joint table."""


class DegenerateMargin(MvbernError, ValueError):
    """A marginal probability of 0 or 1 makes the correlation undefined."""


class DimensionMismatch(MvbernError, ValueError):
    """Vectors that must share a length or pattern order do not."""


class InvalidParams(MvbernError, ValueError):
    """Distribution parameters outside their domain (e.g. alpha <= 0)."""


class EmptyDraws(MvbernError, ValueError):
    """An operation needing at least one Monte Carlo draw received none."""


class EmptyCounts(MvbernError, ValueError):
    """An operation needing observed data received an all-zero count vector."""


class ZeroEffect(MvbernError, ValueError):
    """Anticipated effect is zero; no finite sample size exists."""


class InfeasibleRule(MvbernError, ValueError):
    """Decision rule cannot be powered under the anticipated effects."""


class DegenerateVariance(MvbernError, ValueError):
    """Weighted variance is not positive; evidence is undefined."""


class NoPositiveDirection(MvbernError, ValueError):
    """No weight vector gives better-than-even evidence of superiority."""


class CountMismatch(MvbernError, ValueError):
    """Observed counts do not sum to the scheduled sample size."""


class StreamExhausted(MvbernError, RuntimeError):
    """A response stream ran out of subjects before the final analysis."""


class InvalidRatios(MvbernError, ValueError):
    """Interim analysis fractions are not ascending in (0, 1] ending at 1."""
