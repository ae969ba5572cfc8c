"""Exception types shared across the package."""


class LatvarError(Exception):
    """Base class for all package errors."""


class ValidationError(LatvarError):
    """A domain object violates one of its structural invariants.

    ``violations`` lists every broken constraint with indices where relevant.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ConfigError(LatvarError):
    """A configuration document is malformed or inconsistent."""


class DegenerateConfigError(ConfigError):
    """A generator configuration implies an impossible sampling distribution."""


class SimulationError(LatvarError):
    """A rollout produced non-finite values (non-stationary configuration)."""

    def __init__(self, message, timestep=None):
        self.timestep = timestep
        super().__init__(message)


class SpectralRadiusError(LatvarError):
    """The spectral radius computation did not converge."""


class TrainingDivergenceError(LatvarError):
    """The optimizer produced a non-finite or exploding objective.

    Carries the objective trace recorded up to the failing epoch.
    """

    def __init__(self, message, trace=None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(message)
