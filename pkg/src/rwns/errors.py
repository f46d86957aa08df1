"""Exception hierarchy shared across the package."""


class RWNSError(Exception):
    """Base class for all package errors."""


class GridMismatch(RWNSError):
    pass


class PeriodizationError(RWNSError):
    """Kernel too wide for the periodic box."""


class ConfigError(RWNSError):
    pass


class CflViolation(ConfigError):
    pass


class HeterogeneousParams(RWNSError):
    pass


class NumericalBlowup(RWNSError):
    def __init__(self, message, last_good_time):
        super().__init__(message)
        self.last_good_time = last_good_time


class DegenerateDetuning(RWNSError):
    pass


class ZeroSidebandPower(RWNSError):
    pass


class InsufficientSnapshots(RWNSError):
    pass


class NoPeak(RWNSError):
    pass


class OffLattice(RWNSError):
    pass


class WeakCarrier(RWNSError):
    pass


class InsufficientData(RWNSError):
    pass


class NoConvergence(RWNSError):
    pass
