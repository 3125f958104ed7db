"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An argument breaks a documented precondition (dimension, sign, range)."""


class ConstructionError(ValueError):
    """A compound object cannot be built from the given ingredients."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its cap without meeting its tolerance.

    Carries the final defect so callers can decide whether the partial
    answer is usable.
    """

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class CertificateError(RuntimeError):
    """A stability certificate came out structurally invalid (e.g. rho outside (0,1))."""


class SolverAbort(RuntimeError):
    """A closed-loop run stopped early because the packet solver failed.

    Carries the offending step index and the partial simulation record.
    """

    def __init__(self, message, step, record=None):
        super().__init__(message)
        self.step = step
        self.record = record
