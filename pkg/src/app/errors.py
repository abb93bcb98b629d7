"""Exception hierarchy shared by every module.

Each error carries a stable ``category`` that the CLI maps to a process exit code.
"""

from typing import Optional

EXIT_CODES = {
    "internal": 1,
    "config": 2,
    "data": 3,
    "checkpoint": 4,
    "numerical": 5,
}


class SelfPoseError(Exception):
    """Base exception for all domain errors."""

    category: str = "internal"

    def __init__(self, message: str):
        self.message = message
        super().__init__(message)

    @property
    def exit_code(self) -> int:
        """Process exit code for this error's category."""
        return EXIT_CODES.get(self.category, 1)


# =====================================================
# GEOMETRY / NUMERICAL
# =====================================================


class NumericalError(SelfPoseError):
    category = "numerical"


class InvalidGeometry(NumericalError):
    """A geometric type invariant was violated at construction."""


class EmptyCloud(NumericalError):
    pass


class NonUnitQuaternion(NumericalError):
    pass


class InvalidCount(NumericalError):
    pass


class IsolatedVertex(NumericalError):
    pass


class ConnectivityMismatch(NumericalError):
    pass


class DegenerateFace(NumericalError):
    pass


class ZeroAreaMesh(NumericalError):
    pass


class ZeroVector(NumericalError):
    pass


class TooFewPoints(NumericalError):
    pass


class GraphMismatch(NumericalError):
    pass


class ShapeMismatch(NumericalError):
    pass


class LevelMismatch(NumericalError):
    pass


class FrameMismatch(NumericalError):
    pass


class TooFewCandidates(NumericalError):
    pass


class EmptySet(NumericalError):
    pass


class DegenerateConfiguration(NumericalError):
    pass


class AllGroupsDegenerate(NumericalError):
    pass


class CountMismatch(NumericalError):
    pass


class EmptyModel(NumericalError):
    pass


# =====================================================
# DATA / IO
# =====================================================


class DataError(SelfPoseError):
    category = "data"


class EmptyDataset(DataError):
    pass


class InvalidSpec(DataError):
    pass


class NotVisible(DataError):
    pass


class TooFewViews(DataError):
    pass


class IoFailure(DataError):
    """Reading or writing an artifact failed."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message if path is None else f"{message}: {path}")


class MalformedDataset(DataError):
    """The dataset on disk does not follow the expected layout."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(message if path is None else f"{message}: {path}")


# =====================================================
# CONFIG / CHECKPOINTS
# =====================================================


class ConfigError(SelfPoseError):
    """Invalid configuration key or value."""

    category = "config"

    def __init__(self, message: str, key_path: Optional[str] = None):
        self.key_path = key_path
        super().__init__(message if key_path is None else f"{message} (at '{key_path}')")


class MissingCheckpoint(SelfPoseError):
    category = "checkpoint"


class CheckpointMismatch(SelfPoseError):
    """A checkpoint's architecture hash does not match the active config."""

    category = "checkpoint"
