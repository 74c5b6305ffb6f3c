"""Exception types raised across the package.

All of them derive from ``ValueError`` so callers that only care about
"bad input" can catch one thing.
"""


class LevelMoelError(ValueError):
    pass


class UnknownSymbol(LevelMoelError):
    def __init__(self, row: int, col: int, char: str):
        super().__init__(f"unknown tile symbol {char!r} at row {row}, column {col}")
        self.row = row
        self.col = col
        self.char = char


class RaggedLines(LevelMoelError):
    pass


class EmptyInput(LevelMoelError):
    pass


class NonFiniteInput(LevelMoelError):
    pass


class PatternTooLarge(LevelMoelError):
    pass


class ShapeMismatch(LevelMoelError):
    pass


class EmptyTrace(LevelMoelError):
    pass


class PatternSizeMismatch(LevelMoelError):
    pass


class TooFewSamples(LevelMoelError):
    pass


class NonFiniteGradient(LevelMoelError):
    pass


class EmptyCorpus(LevelMoelError):
    pass


class PoolTooSmall(LevelMoelError):
    pass


class PointBeyondNadir(LevelMoelError):
    pass


class UnsupportedDimension(LevelMoelError):
    pass


class EmptyReference(LevelMoelError):
    pass


class NonFiniteObjective(LevelMoelError):
    pass


class ConfigError(LevelMoelError):
    pass


class CorruptCheckpoint(LevelMoelError):
    pass


class MissingLogs(LevelMoelError):
    pass
