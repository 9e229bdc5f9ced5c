"""
Exception hierarchy untuk Infoflow Lab
Semua error library turun dari ValueError supaya caller lama tetap bisa catch ValueError

"""


class InfoFlowError(ValueError):
    """Base class for every error raised by the library"""


class InvalidInputError(InfoFlowError):
    """Unknown state/symbol/variable, malformed file, length mismatch"""


class BudgetExceededError(InfoFlowError):

    def __init__(self, what: str, size: int, budget: int):
        self.what = what
        self.size = size
        self.budget = budget
        super().__init__(f"{what}: enumeration size {size} exceeds budget {budget}")


class AlphabetTooSmallError(InfoFlowError):
    """Raised when an interfering mimic cannot be built"""


class ContractError(InfoFlowError):
    """Precondition of a statistic or test violated"""


class UnsupportedOperationError(InfoFlowError):
    pass


class TrackerFault(InfoFlowError):
    """Simulated tracker refused or failed to serve a request"""
