"""Exception types shared across the package.

Configuration problems (bad grammar, inconsistent dimensions, invalid
metric data) raise ConfigError subclasses; runtime numerical problems
(degenerate metrics, diverging integrations, unresolvable boundary
events) raise NumericalError subclasses.  The CLI maps the former to
exit code 2 and the latter to exit code 3.
"""


class EdgeRayError(Exception):
    """Base class for all package errors."""


class ConfigError(EdgeRayError):
    """Invalid configuration, scene file, or argument."""


class ExprSyntaxError(ConfigError):
    """Coefficient-expression syntax error with source position."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = "line %d, col %d: %s" % (line, col, message)
        super().__init__(message)


class DimensionError(ConfigError):
    """Matrix shapes or variable usage inconsistent with (b, f)."""


class NumericalError(EdgeRayError):
    """Numerical failure during simulation."""


class DegenerateMetricError(NumericalError):
    """Metric block not invertible (condition number beyond threshold)."""


class IntegrationDivergedError(NumericalError):
    """Integrator failed or a conserved quantity drifted beyond bounds."""


class StepLimitError(NumericalError):
    """Integration exceeded its step budget."""


class IllConditionedEventError(NumericalError):
    """Boundary-event extrapolation residual beyond tolerance."""


class LaunchFailedError(NumericalError):
    """Could not construct an interior seed for the requested boundary data."""


class FlowEscapedError(NumericalError):
    """Boundary-flow parameter outside the maximal interval."""
