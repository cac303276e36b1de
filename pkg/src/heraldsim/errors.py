"""Exception types raised across the package."""


class HeraldSimError(Exception):
    """Base class for all package errors."""


class GridTooCoarse(HeraldSimError, ValueError):
    """Sample spacing too large for a cavity filter (kappa * dt >= 0.5)."""


class EmptyInput(HeraldSimError, ValueError):
    pass


class DegenerateModel(HeraldSimError, ValueError):
    pass


class ZeroMode(HeraldSimError, ValueError):
    """The requested mode has no support inside the sampling window."""


class InsufficientData(HeraldSimError, ValueError):
    pass


class NoSignal(HeraldSimError, ValueError):
    """Variance trace shows no excess noise above the vacuum level."""


class UnsupportedOrder(HeraldSimError, ValueError):
    """Fock order outside the supported truncation."""


class Degenerate(HeraldSimError, ValueError):
    pass


class ConfigParseError(HeraldSimError, ValueError):
    pass


class ConfigValidationError(HeraldSimError, ValueError):
    pass


class FormatError(HeraldSimError, ValueError):
    """Trace file header has the wrong magic bytes or version."""


class TruncatedFile(HeraldSimError, ValueError):
    pass
