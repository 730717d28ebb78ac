"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """A file or byte stream does not follow one of the documented formats."""


class KernelSpecError(ValueError):
    """A kernel specification string or parameter set is invalid."""


class NumericError(RuntimeError):
    """A numeric routine failed: non-finite values, non-PSD matrix, breakdown."""
