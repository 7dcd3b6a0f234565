"""Exception hierarchy shared across the package.

Three broad categories map onto the CLI exit codes: configuration
problems (exit 2), data problems (exit 3), and estimation or
simulation failures (exit 4).
"""

from __future__ import annotations

__all__ = [
    "DecayLabError",
    "ConfigError",
    "InvalidConfig",
    "DataError",
    "EmptyFile",
    "EmptySourceSet",
    "DuplicateUnitId",
    "DuplicateSourceId",
    "MissingColumn",
    "ParseError",
    "NonPositiveOutcome",
    "ModifierMissing",
    "UnbalancedPanel",
    "EstimationError",
    "DomainError",
    "NonPositiveRate",
    "NonPositiveKappa",
    "NonPositiveTime",
    "TooFewObservations",
    "SingularJacobian",
    "MissingResiduals",
    "BoundaryUndefined",
    "StratumTooSmall",
    "UnstableTimestep",
    "WindowTooSmall",
    "NoVariationInTreatment",
    "InsufficientPrePeriods",
    "EmptyBand",
    "NoModifierVariation",
]


class DecayLabError(Exception):
    """Base class for all package errors."""


class ConfigError(DecayLabError):
    """A run configuration is malformed or inconsistent."""


class InvalidConfig(ConfigError):
    """A configuration value is outside its valid range."""


class DataError(DecayLabError):
    """Input data violates the expected schema or invariants."""


class EmptyFile(DataError):
    """An input file contains no data rows."""


class EmptySourceSet(DataError):
    """A nearest-source query was issued against an empty source set."""


class DuplicateUnitId(DataError):
    """Unit identifiers must be unique within a table."""


class DuplicateSourceId(DataError):
    """Source identifiers must be unique within a source set."""


class MissingColumn(DataError):
    """A required column is absent from an input file."""


class ParseError(DataError):
    """An input file could not be parsed at all."""


class NonPositiveOutcome(DataError):
    """Log-outcome regression requires strictly positive outcomes."""


class ModifierMissing(DataError):
    """A requested effect modifier is not present in the panel."""


class UnbalancedPanel(DataError):
    """Fixed-effects estimators here require a balanced panel."""


class EstimationError(DecayLabError):
    """An estimator or simulation could not produce a valid result."""


class DomainError(EstimationError):
    """A model was evaluated outside its mathematical domain."""


class NonPositiveRate(EstimationError):
    """A rate that must be strictly positive was zero or negative."""


class NonPositiveKappa(EstimationError):
    """A decay rate that must be strictly positive was zero or negative."""


class NonPositiveTime(EstimationError):
    """A time argument that must be strictly positive was not."""


class TooFewObservations(EstimationError):
    """Not enough observations to identify the requested parameters."""


class SingularJacobian(EstimationError):
    """The fit design is degenerate (for example, all distances equal)."""


class MissingResiduals(EstimationError):
    """Sandwich covariance needs residuals from a completed fit."""


class BoundaryUndefined(EstimationError):
    """No positive decay boundary exists; the fitted rate is not positive.

    This is a diagnostic outcome rather than a numerical failure: a
    non-positive rate means the outcome does not decay with distance.
    """


class StratumTooSmall(EstimationError):
    """A stratum has too few units for a separate fit."""


class UnstableTimestep(EstimationError):
    """The requested timestep violates the explicit stability bound."""


class WindowTooSmall(EstimationError):
    """The radial fit window contains too few usable cells."""


class NoVariationInTreatment(EstimationError):
    """Treatment status has no within-variation after demeaning."""


class InsufficientPrePeriods(EstimationError):
    """Event-study estimation needs pre-treatment periods beyond the reference."""


class EmptyBand(EstimationError):
    """A distance band contains no treated units."""


class NoModifierVariation(EstimationError):
    """An effect modifier is constant across treated units."""
