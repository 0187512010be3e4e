"""Exception types raised across the package."""


class BinnetError(Exception):
    """Base class for all package errors."""


class NotBinary(BinnetError, ValueError):
    pass


class CorruptPadding(BinnetError, ValueError):
    pass


class BadGeometry(BinnetError, ValueError):
    pass


class LengthMismatch(BinnetError, ValueError):
    pass


class DimMismatch(BinnetError, ValueError):
    pass


class MissingContext(BinnetError, RuntimeError):
    pass


class DegenerateBatch(BinnetError, ValueError):
    pass


class InvalidConfig(BinnetError, ValueError):
    pass


class OddGrowth(InvalidConfig):
    pass


class UnresolvedGeometry(BinnetError, ValueError):
    pass


class ShapeMismatch(BinnetError, ValueError):
    pass


class DivergedLoss(BinnetError, RuntimeError):
    pass


class HashMismatch(BinnetError, ValueError):
    pass


class CheckpointError(BinnetError, ValueError):
    pass
