"""Exception classes.

The class name doubles as the machine-parsable error tag printed by the CLI.
"""


class Curv4dError(Exception):
    exit_code = 2


class DegenerateConfiguration(Curv4dError, ValueError):
    pass


class EmptyCloud(Curv4dError, ValueError):
    pass


class TooFewPoints(Curv4dError, ValueError):
    pass


class NonMonotonicPositions(Curv4dError, ValueError):
    pass


class IndexOutOfRange(Curv4dError, IndexError):
    pass


class LengthMismatch(Curv4dError, ValueError):
    pass


class TooFewFrames(Curv4dError, ValueError):
    pass


class DimensionMismatch(Curv4dError, ValueError):
    pass


class EmptyTrainingSet(Curv4dError, ValueError):
    pass


class NonConverged(Curv4dError, RuntimeError):
    pass


class NoAttackSamples(Curv4dError, ValueError):
    pass


class NoBonaFideSamples(Curv4dError, ValueError):
    pass


class SingleClass(Curv4dError, ValueError):
    pass


class InsufficientSubjects(Curv4dError, ValueError):
    pass


class ParseError(Curv4dError, ValueError):
    pass


class MissingLandmark(Curv4dError, ValueError):
    pass


class IOFailure(Curv4dError, OSError):
    pass


class ConfigError(Curv4dError, ValueError):
    exit_code = 1
