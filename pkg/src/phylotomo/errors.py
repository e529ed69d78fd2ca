"""Exception hierarchy shared by every module."""


class TomographyError(Exception):
    """Base class for all errors raised by phylotomo."""


class ValidationError(TomographyError, ValueError):
    """Invalid input: malformed tree, out-of-range parameter, bad config."""


class IncompatibleBipartitionsError(TomographyError):
    """Two bipartitions cannot coexist in one tree."""

    def __init__(self, first, second):
        self.pair = (first, second)
        super().__init__(f"incompatible bipartitions: {first} vs {second}")


class ReconstructionError(TomographyError):
    """Topology reconstruction detected an inconsistency and refused to guess."""

    def __init__(self, message, pairs=()):
        self.pairs = tuple(pairs)
        super().__init__(message)


class ExtenderInconsistencyError(ReconstructionError):
    """A leaf is connected to both sides of a local split, or to neither."""


class MissingMomentError(TomographyError):
    """A lower-order moment needed by a recursion step is not available yet."""


class GuardError(TomographyError):
    """An exact computation would exceed its size guard."""
