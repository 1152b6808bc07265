"""Exception hierarchy shared by all modules."""


class ForefrontError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(ForefrontError, ValueError):
    pass


class InvalidState(ForefrontError, RuntimeError):
    pass


class EmptySeriesError(InvalidArgument):
    """A series (or a channel of it) holds fewer samples than required."""


class PrefixUnavailable(ForefrontError):
    """Not enough samples after the onset for the requested prefix.

    Callers in the cascade treat this as "stage not yet reached".
    """


class NoCoverageError(ForefrontError, ZeroDivisionError):
    """Accuracy over accepted samples is undefined when nothing was accepted."""


class NoDecisionError(ForefrontError):
    """The cascade could not evaluate even its first stage."""


class DataFormatError(ForefrontError, ValueError):
    pass


class DatasetIOError(ForefrontError, OSError):
    pass
