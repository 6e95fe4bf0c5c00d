"""Exception hierarchy shared by every stage of the pipeline.

Two branches matter to callers: `DataError` covers anything wrong with
inputs on disk or shape/label mismatches between arrays, `NumericError`
covers solver breakdowns.  The CLI maps them to distinct exit codes so
batch drivers can tell bad data from numerical failure.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class DataError(PipelineError):
    """Invalid or inconsistent input data (CLI exit code 3)."""


class NumericError(PipelineError):
    """A numerical routine failed to produce a usable result (exit code 4)."""


# -- file and format problems -------------------------------------------------

class MissingFileError(DataError):
    def __init__(self, path):
        super().__init__(f"file not found: {path}")
        self.path = str(path)


class ParseError(DataError):
    """A text input (manifest, landmark file) violated its line format."""

    def __init__(self, path, line, reason):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = str(path)
        self.line = line
        self.reason = reason


class DuplicateIdError(DataError):
    def __init__(self, sample_id):
        super().__init__(f"duplicate sample id: {sample_id!r}")
        self.sample_id = sample_id


class UnsupportedFormatError(DataError):
    def __init__(self, path, detail):
        super().__init__(f"{path}: unsupported image format ({detail})")
        self.path = str(path)


class CorruptImageError(DataError):
    def __init__(self, path, detail):
        super().__init__(f"{path}: cannot decode image ({detail})")
        self.path = str(path)


class WrongPointCountError(DataError):
    def __init__(self, path, found, expected):
        super().__init__(
            f"{path}: expected {expected} landmark points, found {found}")
        self.found = found
        self.expected = expected


class VersionMismatchError(DataError):
    def __init__(self, path, found, expected):
        super().__init__(
            f"{path}: model format version {found}, this build reads {expected}")
        self.found = found


class ChecksumMismatchError(DataError):
    def __init__(self, path):
        super().__init__(f"{path}: model file checksum mismatch")


class BundleIncompleteError(DataError):
    def __init__(self, detail):
        super().__init__(f"incomplete model bundle: {detail}")


# -- geometry -----------------------------------------------------------------

class OutOfBoundsError(DataError):
    def __init__(self, detail):
        super().__init__(f"box outside image bounds: {detail}")


class DegenerateRegionError(DataError):
    def __init__(self, region):
        super().__init__(f"region {region} collapses to an empty box")
        self.region = region


class ImageTooSmallError(DataError):
    def __init__(self, shape, minimum):
        super().__init__(
            f"image of shape {shape} is smaller than the required {minimum}")


class RegionTooSmallError(DataError):
    def __init__(self, shape, grid_n):
        super().__init__(
            f"region of shape {shape} cannot host a {grid_n}x{grid_n} grid "
            f"of 3x3-or-larger cells")


# -- array/label consistency --------------------------------------------------

class RowMismatchError(DataError):
    def __init__(self, detail):
        super().__init__(f"row count mismatch: {detail}")


class ColumnMismatchError(DataError):
    def __init__(self, found, expected):
        super().__init__(
            f"feature count mismatch: got {found} columns, fitted on {expected}")


class LengthMismatchError(DataError):
    def __init__(self, detail):
        super().__init__(f"length mismatch: {detail}")


class BadCountError(DataError):
    def __init__(self, detail):
        super().__init__(detail)


class TooFewSamplesError(DataError):
    def __init__(self, label, count, needed):
        super().__init__(
            f"class {label} has {count} samples, need at least {needed}")
        self.label = label


class SingleClassError(DataError):
    def __init__(self, detail="training labels contain a single class"):
        super().__init__(detail)


class AllZeroWeightsError(DataError):
    def __init__(self):
        super().__init__("fusion weights are all zero")


# -- numerics -----------------------------------------------------------------

class DidNotConvergeError(NumericError):
    def __init__(self, what, iterations):
        super().__init__(f"{what} did not converge within {iterations} iterations")
        self.iterations = iterations


class SingularSystemError(NumericError):
    def __init__(self, detail):
        super().__init__(f"linear system could not be solved: {detail}")


class DegenerateDataError(NumericError):
    def __init__(self, detail):
        super().__init__(f"degenerate input: {detail}")


class DegenerateFitnessSetError(NumericError):
    def __init__(self, detail):
        super().__init__(f"fitness set is degenerate: {detail}")
