"""Exception hierarchy shared by every stage of the pipeline."""


class MammosegError(Exception):
    """Base class for all errors raised by this package."""


# imaging
class UnsupportedFormat(MammosegError):
    pass


class CorruptFile(MammosegError):
    pass


class DimensionMismatch(MammosegError):
    pass


class EmptyImage(MammosegError):
    pass


# preprocess
class TooManyLevels(MammosegError):
    pass


class InvalidTiling(MammosegError):
    pass


# texture
class EmptyOverlap(MammosegError):
    pass


class InvalidRange(MammosegError):
    pass


# hcluster
class EmptyHistogram(MammosegError):
    pass


class NotAdjacent(MammosegError):
    pass


class TooFewLevels(MammosegError):
    pass


class InvalidCut(MammosegError):
    pass


# segment
class OutOfBounds(MammosegError):
    pass


# features
class EmptyBackground(MammosegError):
    pass


class DegenerateShape(MammosegError):
    pass


# classify / eval
class SingleClass(MammosegError):
    pass


class InsufficientData(MammosegError):
    pass


class NoNormals(MammosegError):
    pass


class IdMismatch(MammosegError):
    pass
