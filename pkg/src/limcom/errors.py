"""Exception types carrying a machine-readable violation code."""


class _Coded:
    def __init__(self, code: str, message: str = ""):
        self.code = code
        text = f"{code}: {message}" if message else code
        super().__init__(text)


class ParameterError(_Coded, ValueError):
    """A model assumption is violated (for example ``RHO_HAT_NONPOSITIVE``)."""


class DomainError(_Coded, ValueError):
    """An argument lies outside the domain of a function."""


class InfeasiblePromiseError(_Coded, ValueError):
    """The promised value is below the agent's autarky value."""

    def __init__(self, message: str = ""):
        super().__init__("W_INFEASIBLE", message)


class SolverError(_Coded, RuntimeError):
    """A numerical procedure failed (bracketing, iteration cap, tail truncation)."""
