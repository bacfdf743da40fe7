"""
Exception hierarchy for the tracking pipeline.
Every error carries the process exit code the CLI reports for it.
"""


class TRLFError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 1


class UsageError(TRLFError, ValueError):
    exit_code = 2


class MissingArtifactError(TRLFError, FileNotFoundError):
    exit_code = 3

    def __init__(self, stage: str, path):
        super().__init__(f"stage '{stage}' needs {path}, which does not exist; run the upstream stage first")
        self.stage = stage
        self.path = path


class NumericalError(TRLFError, ArithmeticError):
    exit_code = 4


class ShapeError(UsageError):
    pass


class GridTooSmallError(UsageError):
    pass


class SeedOutsideMaskError(UsageError):
    pass


class EpisodeFinishedError(TRLFError, RuntimeError):
    pass


class EmptyMaskError(NumericalError):
    pass


class InsufficientTrajectoriesError(UsageError):
    def __init__(self, source, needed: int, available: int):
        super().__init__(f"source {source!r} supplies {available} trajectories, {needed} required")
        self.source = source
        self.needed = needed
        self.available = available


class FormatError(UsageError):
    pass
