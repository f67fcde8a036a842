"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument or state violates a documented precondition."""


class EmptySetError(ContractViolation):
    """A sampler or loss was asked to work on an empty point set."""


class GuardRefusal(RuntimeError):
    """A size guard refused an operation (dense Hessian, validation oracle)."""


class SingularHessianError(RuntimeError):
    """Damping escalation exhausted without a successful factorization."""


class StaleHessianError(RuntimeError):
    """A Hessian operator was used with parameters it was not assembled at."""


class OracleUnavailableError(RuntimeError):
    """The retraining oracle could not converge; its value is unusable."""


class NumericalFailure(RuntimeError):
    """A non-finite value was encountered during optimization."""


class ConfigError(ValueError):
    """A run configuration failed validation.

    Carries the dotted path of the offending field so CLI diagnostics can
    name it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")
