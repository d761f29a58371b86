"""Exception and warning hierarchy shared across the package."""
from __future__ import annotations


class ScenecraftError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(ScenecraftError, ValueError):
    pass


class ConfigError(ScenecraftError):
    pass


# -- blueprint -------------------------------------------------------------

class BlueprintError(ScenecraftError):
    pass


class BlueprintParseError(BlueprintError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class BlueprintSchemaError(BlueprintError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class BlueprintReferenceError(BlueprintError):
    def __init__(self, scene_index: int, name: str):
        super().__init__(f"scene {scene_index} references unknown character {name!r}")
        self.scene_index = scene_index
        self.name = name


class BlueprintValidationError(BlueprintError):
    def __init__(self, violations):
        self.violations = list(violations)
        codes = ", ".join(v.code for v in self.violations)
        super().__init__(f"blueprint violates invariants: {codes}")


# -- backends --------------------------------------------------------------

class BackendError(ScenecraftError):
    pass


class BackendUnavailableError(BackendError):
    pass


class MalformedBackendOutputError(BackendError):
    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


# -- pipeline --------------------------------------------------------------

class PipelineError(ScenecraftError):
    """A backend failure annotated with the stage (and scene) it happened in."""

    def __init__(self, stage: str, cause: Exception, scene_index: int | None = None):
        where = stage if scene_index is None else f"{stage} (scene {scene_index})"
        super().__init__(f"{where}: {cause}")
        self.stage = stage
        self.scene_index = scene_index
        self.cause = cause


class CompositionError(ScenecraftError):
    pass


class CorruptedRunError(ScenecraftError):
    def __init__(self, artifact: str, message: str = "digest mismatch"):
        super().__init__(f"{artifact}: {message}")
        self.artifact = artifact


class CorruptedClipError(ScenecraftError):
    pass


class IncompleteRunError(ScenecraftError):
    def __init__(self, stage: str):
        super().__init__(f"run is incomplete; last completed stage: {stage}")
        self.stage = stage


class RunLockedError(ScenecraftError):
    pass


# -- metrics ---------------------------------------------------------------

class UndefinedSimilarityError(ScenecraftError, ValueError):
    pass


class InsufficientSignalError(ScenecraftError):
    pass


# -- warnings --------------------------------------------------------------

class ScenecraftWarning(UserWarning):
    pass


class UnknownFieldWarning(ScenecraftWarning):
    pass


class ScoreClampedWarning(ScenecraftWarning):
    pass


class SamplingWarning(ScenecraftWarning):
    pass


class DroppedFrameWarning(ScenecraftWarning):
    pass


class BridgeFallbackWarning(ScenecraftWarning):
    pass
