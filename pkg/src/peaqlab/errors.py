"""Exception hierarchy shared by all toolkit modules.

Every error raised on bad user input derives from :class:`InputError`, which
the command line maps to exit code 2.
"""


class PeaqlabError(Exception):
    """Base class for all toolkit errors."""


class InputError(PeaqlabError, ValueError):
    """Bad or inconsistent user-supplied input."""


# dataset
class MissingColumn(InputError):
    pass


class DuplicateKey(InputError):
    pass


class OutOfRangeScore(InputError):
    pass


class NonPositiveCI(InputError):
    pass


class UnmatchedKeys(InputError):
    def __init__(self, missing_features, missing_scores):
        self.missing_features = sorted(missing_features)
        self.missing_scores = sorted(missing_scores)
        parts = []
        if self.missing_features:
            parts.append(f"no feature row for {self.missing_features}")
        if self.missing_scores:
            parts.append(f"no score row for {self.missing_scores}")
        super().__init__("; ".join(parts))


class InconsistentFeatureSet(InputError):
    pass


class InconsistentContentType(InputError):
    pass


class EmptySelection(UserWarning):
    """A content filter matched no rows (issued as a warning)."""


# audio
class UnsupportedFormat(InputError):
    pass


class CorruptHeader(InputError):
    pass


class LagOutOfRange(InputError):
    pass


class SilentInput(InputError):
    pass


# ear model / MOVs
class ConfigMismatch(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class EmptyAfterWarmup(InputError):
    pass


# regression
class DegenerateDesign(InputError):
    pass


class TooFewRows(InputError):
    pass


class PenaltyExceedsRows(InputError):
    pass


class FeatureMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


# evaluation
class ConstantInput(InputError):
    pass


class LengthMismatch(InputError):
    pass


class TooFewSamples(InputError):
    pass


class DegenerateSplit(PeaqlabError):
    pass


class SchemaVersionMismatch(InputError):
    pass
