"""Early time-series classification with an agreement-based reject option.

Pairs of diverse RBF-SVMs are trained on growing prefixes of a multichannel
sensor response; a label is accepted at the first prefix on which both members
of the stage's pair agree.
"""

from forefront.errors import (
    DataFormatError,
    DatasetIOError,
    EmptySeriesError,
    ForefrontError,
    InvalidArgument,
    InvalidState,
    NoCoverageError,
    NoDecisionError,
    PrefixUnavailable,
)

__version__ = "0.1.0"

__all__ = [
    "DataFormatError",
    "DatasetIOError",
    "EmptySeriesError",
    "ForefrontError",
    "InvalidArgument",
    "InvalidState",
    "NoCoverageError",
    "NoDecisionError",
    "PrefixUnavailable",
    "__version__",
]
