from typing import Optional


class HorizonLabError(Exception):
    pass


class ContractViolationError(HorizonLabError, ValueError):
    pass


class DomainError(HorizonLabError, ValueError):
    pass


class BlowUpError(HorizonLabError):
    """Non-finite or exploding state, stamped with the first offending node."""

    def __init__(self, message: str, time: float, node: Optional[int] = None):
        super().__init__(f"{message} (t={time:.6g}, node={node})")
        self.time = time
        self.node = node


class ConvergenceError(HorizonLabError):
    pass


class ConfigurationError(HorizonLabError):
    pass


class UnsupportedFamilyError(HorizonLabError):
    pass
