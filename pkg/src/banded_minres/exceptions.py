class BandedMinresError(Exception):
    """Base exception for banded-minres errors.

    These exceptions are meant to be caught at the CLI level and
    displayed as user-friendly error messages without stack traces.
    """

    pass


class DimensionMismatch(BandedMinresError):
    """Raised when operand shapes do not agree."""

    pass


class NotSymmetric(BandedMinresError):
    """Raised when a matrix expected to be symmetric is not."""

    pass


class ParseError(BandedMinresError):
    """Raised when a Matrix Market file cannot be parsed."""

    def __init__(self, message: str, line: int | None = None) -> None:
        if line is not None:
            message = f'line {line}: {message}'
        super().__init__(message)
        self.line = line


class ConfigError(BandedMinresError):
    """Raised for invalid solver or project configuration."""

    pass


class RankDeficientStart(BandedMinresError):
    """Raised when the starting block does not have full column rank."""

    pass


class ReplacementExhausted(BandedMinresError):
    """Raised when no random replacement vector survives orthogonalization."""

    pass


class SingularR(BandedMinresError):
    """Raised when the triangular factor of the Hessenberg matrix is singular.

    This signals an internal inconsistency; a properly handled breakdown
    never produces it.
    """

    pass


class PivotBreakdown(BandedMinresError):
    """Raised when incomplete Cholesky meets a non-positive pivot."""

    def __init__(self, row: int, pivot: float) -> None:
        super().__init__(
            f'non-positive pivot {pivot:.6g} at row {row} '
            'during incomplete Cholesky factorization',
        )
        self.row = row
        self.pivot = pivot


class ZeroDiagonal(BandedMinresError):
    """Raised when a triangular factor has a zero on its diagonal."""

    def __init__(self, row: int) -> None:
        super().__init__(f'zero diagonal entry at row {row}')
        self.row = row


class MaxIterReached(UserWarning):
    """Issued when the iteration cap is hit before every column converged."""

    pass
