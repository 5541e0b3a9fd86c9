"""Custom exceptions for the corrtrack toolkit."""


class CorrTrackError(Exception):
    """Base exception for all corrtrack errors."""

    pass


class ConfigurationError(CorrTrackError):
    """Raised when configuration is invalid or missing."""

    pass


class PluginError(CorrTrackError):
    """Raised when command or reporter plugin loading fails."""

    pass


class OrchestratorError(CorrTrackError):
    """Raised when the orchestrator encounters an error."""

    pass


class GeometryError(CorrTrackError):
    """Raised by camera and pointmap operations."""

    pass


class NonPositiveDepth(GeometryError):
    """Raised when a point lies on or behind the camera plane."""

    pass


class EmptyPointMap(GeometryError):
    """Raised when a pointmap has no valid pixel."""

    pass


class SceneError(CorrTrackError):
    """Raised for invalid scene specs or frame requests."""

    pass


class SamplingError(CorrTrackError):
    """Raised when training pairs or match sets cannot be sampled."""

    pass


class NoFeasibleStride(SamplingError):
    """Raised when every stride is too long for the video."""

    pass


class NoPositives(SamplingError):
    """Raised when a frame pair shares no visible surfel."""

    pass


class ModelError(CorrTrackError):
    """Raised by the correspondence network and its checkpoints."""

    pass


class ShapeMismatch(ModelError):
    """Raised when input images disagree in shape."""

    pass


class ArchMismatch(ModelError):
    """Raised when a checkpoint does not match the configured architecture."""

    pass


class LossError(CorrTrackError):
    """Raised when a loss term cannot be evaluated."""

    pass


class EmptyMatchSet(LossError):
    """Raised when a matching loss receives no positive pair."""

    pass


class EmptyLabels(LossError):
    """Raised when the visibility loss receives no labelled pixel."""

    pass


class TrackingError(CorrTrackError):
    """Raised by the pairwise tracker."""

    pass


class OutOfBounds(TrackingError):
    """Raised when a lookup pixel falls outside the image."""

    pass


class MissingDepth(TrackingError):
    """Raised when lifting hits a pixel without depth."""

    pass


class EvaluationError(CorrTrackError):
    """Raised by the evaluation harness."""

    pass


class EmptyEval(EvaluationError):
    """Raised when there is nothing to score."""

    pass


class ZeroNormPrediction(EvaluationError):
    """Raised when median scaling meets a zero-norm prediction."""

    pass


class QueryMismatch(EvaluationError):
    """Raised when predicted and ground-truth query sets disagree."""

    pass


class StorageError(CorrTrackError):
    """Raised when reading or writing artifacts fails."""

    pass


class TensorFormatError(StorageError):
    """Raised when a binary tensor container is malformed."""

    pass
