"""Exception hierarchy shared across the package.

Everything raised on bad input data derives from DataError so the CLI can
map it to a single exit code.
"""


class LusnetError(Exception):
    """Base class for all package errors."""


class ShapeError(LusnetError, ValueError):
    """Tensor rank/extent mismatch or an unsupported kernel configuration."""


class ArchSyntaxError(LusnetError, ValueError):
    """Architecture string does not conform to the grammar."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ShapeConflict(LusnetError):
    """Computed layer output dims disagree with the annotated dims.

    ``stage`` is 1-based to match the human-readable stage numbering in
    the architecture string.
    """

    def __init__(self, stage: int, annotated: tuple, computed: tuple):
        super().__init__(
            f"shape conflict at stage {stage}: annotated "
            f"{'x'.join(map(str, annotated))}, computed {'x'.join(map(str, computed))}"
        )
        self.stage = stage
        self.annotated = tuple(annotated)
        self.computed = tuple(computed)


class MissingWeightError(LusnetError):
    """A parameter tensor required by the forward pass is absent."""

    def __init__(self, name: str):
        super().__init__(f"missing weight tensor {name!r}")
        self.name = name


class DataError(LusnetError):
    """Bad input data: files, formats, manifests."""


class PgmError(DataError):
    """Malformed or unsupported PGM payload."""


class ManifestError(DataError):
    """Dataset directory or manifest file violates the expected layout."""


class WeightFormatError(DataError):
    """Base for LUSW weight-file problems."""


class BadMagicError(WeightFormatError):
    pass


class UnsupportedVersionError(WeightFormatError):
    pass


class ChecksumError(WeightFormatError):
    pass


class TruncatedFileError(WeightFormatError):
    pass
