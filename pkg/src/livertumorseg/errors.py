"""Exception types raised across the pipeline."""


class LiverTumorSegError(Exception):
    """Base class for all package-specific errors."""


class MalformedHeaderError(LiverTumorSegError):
    """File is not a readable NIfTI-1 image."""


class NonScalarImageError(LiverTumorSegError):
    """Image is not a 3D scalar volume (e.g. 2D, 4D or vector data)."""


class InvalidShapeError(LiverTumorSegError):
    """Requested volume shape is out of the supported range."""


class OddDimensionError(LiverTumorSegError):
    """Spatial dimension must be even for factor-2 resampling/pooling."""


class EmptyTargetError(LiverTumorSegError):
    """No voxel of the requested class exists; the case contributes no slices."""


class ShapeMismatchError(LiverTumorSegError):
    """Arrays that must be aligned have different shapes."""


class NonfiniteInputError(LiverTumorSegError):
    """Input contains NaN or Inf."""


class InvalidSpecError(LiverTumorSegError):
    """Network specification is inconsistent."""


class NoEligibleSlicesError(LiverTumorSegError):
    """Every slice plan is empty; nothing to sample."""


class NonfiniteLossError(LiverTumorSegError):
    """Training loss became NaN/Inf; aborting with diagnostics."""


class EmptyMaskError(LiverTumorSegError):
    """Surface distances need both masks non-empty."""


class EmptyLiverError(LiverTumorSegError):
    """Tumor burden is undefined for a case without ground-truth liver."""


class ModelInputMismatchError(LiverTumorSegError):
    """Volume geometry or channel count does not fit the loaded model."""


class UnmatchedCasesError(LiverTumorSegError):
    """Prediction and ground-truth directories disagree on case ids."""

    def __init__(self, missing_pred=(), missing_gt=()):
        self.missing_pred = sorted(missing_pred)
        self.missing_gt = sorted(missing_gt)
        parts = []
        if self.missing_pred:
            parts.append("missing predictions: " + ", ".join(self.missing_pred))
        if self.missing_gt:
            parts.append("missing ground truth: " + ", ".join(self.missing_gt))
        super().__init__("; ".join(parts) or "unmatched cases")


class InvalidCountError(LiverTumorSegError):
    """Requested number of items must be positive."""


class ConfigError(LiverTumorSegError):
    """Config file is malformed; message carries file and line."""
