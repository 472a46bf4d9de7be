"""Exception types raised by cubeclust."""


class CubeClustError(Exception):
    """Base class for all library errors."""


class ParameterError(CubeClustError, ValueError):
    """Invalid algorithm parameter (eps, k, m, schedule, ...)."""


class InvalidDimensionError(ParameterError):
    pass


class InvalidPointError(CubeClustError, ValueError):
    """Non-finite coordinate or a lattice index that would overflow."""


class InsufficientPointsError(CubeClustError, ValueError):
    """Fewer reference points than the neighbour count requires."""


class OracleCapError(ParameterError):
    """Brute-force oracle refused an input above its size cap."""


class InfiniteScoreError(CubeClustError, ArithmeticError):
    """A condensed class is born at scale 0, so its persistence diverges."""


class ParseError(CubeClustError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
