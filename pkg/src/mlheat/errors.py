"""Exception hierarchy shared by all modules."""


class MlheatError(Exception):
    """Base class for library errors."""


class ParameterError(MlheatError, ValueError):
    """Invalid medium, SDE parameters, or numerical arguments."""


class OrderCapError(ParameterError):
    """Requested erfc_k order exceeds the configured cap."""


class MatchingConditionError(MlheatError):
    """The closed-form two-interface kernel requires rho2*sqrt(a2) == rho3*sqrt(a3)."""


class InterfacePointError(MlheatError, ValueError):
    """A formula valid only away from (or only at) the interfaces was misused."""


class DerivativeOrderError(MlheatError):
    """Initial data cannot supply the derivative order requested."""


class ConvergenceError(MlheatError, RuntimeError):
    """A numerical iteration failed to converge or produced non-finite values."""
