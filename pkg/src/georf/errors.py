"""Exception hierarchy.

Every error raised on purpose by georf derives from ``GeorfError`` so the CLI
can map it to a data-error exit code.
"""


class GeorfError(ValueError):
    """Base class for georf data and model errors."""


class EmptyData(GeorfError):
    pass


class NonNumericCell(GeorfError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: {value!r} is not a finite number")


class MissingColumn(GeorfError):
    def __init__(self, column):
        self.column = column
        super().__init__(f"missing column {column!r}")


class AllWeightsZero(GeorfError):
    pass


class DimensionMismatch(GeorfError):
    pass


class LengthMismatch(GeorfError):
    pass


class KTooLarge(GeorfError):
    pass


class NonPositiveBandwidthDistance(GeorfError):
    pass


class ZeroVariance(GeorfError):
    pass


class EmptyGrid(GeorfError):
    pass


class BandwidthTooLarge(GeorfError):
    pass


class ModelNotFitted(GeorfError):
    pass


class TooFewRows(GeorfError):
    pass
