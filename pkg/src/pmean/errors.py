"""Exception types shared across the package."""


class PMeanError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(PMeanError, ValueError):
    """Malformed input: empty instance, wrong dimensions, unparsable file."""


class DomainError(PMeanError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ScalingError(PMeanError, ValueError):
    """An instance violates the unit-total scaling of agent valuations."""

    def __init__(self, report):
        self.report = report
        super().__init__(
            f"scaling violated: agent {report.agent} sums to "
            f"{report.total:.12g} (deviation {report.deviation:.3g})"
        )


class PreconditionError(PMeanError, ValueError):
    """An operation was called in a state its contract does not allow."""


class ConfigurationError(PMeanError, ValueError):
    """Invalid parameters for a generator, adversary or experiment."""


class GridTooLarge(PMeanError, ValueError):
    """The brute-force oracle refuses instances it cannot enumerate."""


class InvariantViolation(PMeanError, AssertionError):
    """A property the construction guarantees was observed to fail."""
