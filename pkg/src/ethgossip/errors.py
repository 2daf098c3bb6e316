"""Exception types, grouped by the CLI exit code they map to."""


class EthgossipError(Exception):
    """Base class for all package errors."""


class ConfigError(EthgossipError):
    """Invalid configuration, CLI usage or generator parameters (exit 1)."""


class DataError(EthgossipError):
    """Malformed input data: record files, scenarios, manifests (exit 2)."""


class InvariantError(EthgossipError):
    """Internal invariant violation; indicates a simulator bug (exit 3)."""


class SchedulingError(EthgossipError):
    """An event was scheduled before the engine's current time."""


class EstimatorError(EthgossipError):
    """An analysis precondition failed (e.g. zero tx packets)."""


class SingularSystemError(EthgossipError):
    """The hop-model system is singular or underdetermined."""


class InconsistentSolutionError(EthgossipError):
    """The hop-model solution has a non-positive component."""
