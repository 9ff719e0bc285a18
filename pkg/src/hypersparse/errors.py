"""Exception hierarchy shared by all hypersparse modules."""


class HyperSparseError(Exception):
    pass


class ShapeError(HyperSparseError, ValueError):
    """Array dimensions do not match the model or parameter layout."""


class ContractError(HyperSparseError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateDistributionError(HyperSparseError, ValueError):
    """Weight distribution cannot support the requested computation (e.g. all zeros)."""


class FormatError(HyperSparseError, ValueError):
    """A binary file (IDX, checkpoint) is malformed."""


class ConsistencyError(HyperSparseError, ValueError):
    """Two inputs that must agree do not (e.g. image and label counts)."""


class TruncatedFileError(HyperSparseError, OSError):
    """A file ended before its header said it would."""


class ConfigError(HyperSparseError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
