"""Exception hierarchy shared by every subpackage."""


class HierSegError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(HierSegError, ValueError):
    """Inputs that must share a shape do not."""


class RleDecodeError(HierSegError, ValueError):
    """Run lengths do not describe a mask of the declared size."""


class SceneGenerationError(HierSegError, ValueError):
    """The generator cannot satisfy the requested scene layout."""


class PromptError(HierSegError, ValueError):
    """A prompt cannot be built or pooled from the given labels."""


class ConfigError(HierSegError, ValueError):
    """A run configuration failed schema validation."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = errors or {}


class CheckpointError(HierSegError):
    """A checkpoint is missing, corrupt or incompatible."""


class TrainingDivergedError(HierSegError, FloatingPointError):
    """The training loss became non-finite."""

    def __init__(self, message, iteration=None, terms=None):
        super().__init__(message)
        self.iteration = iteration
        self.terms = terms or {}


class UnknownTaskError(HierSegError, ValueError):
    """The requested task name is not supported."""


class OverlappingSegmentsError(HierSegError, ValueError):
    """Predicted panoptic segments overlap."""
