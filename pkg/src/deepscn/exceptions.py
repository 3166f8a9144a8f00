"""Exception types shared across the package."""


class DeepSCNError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DeepSCNError, ValueError):
    """Input data violates a precondition (non-finite entries, empty, bad range)."""


class DimensionError(DeepSCNError, ValueError):
    """Shapes of the supplied arrays are inconsistent."""


class ConfigError(DeepSCNError, ValueError):
    """A build configuration value or document is invalid."""


class DegenerateCandidateError(DeepSCNError):
    """A candidate node produced a zero hidden vector; the trial is discarded."""


class ModelFormatError(DeepSCNError, ValueError):
    """A serialized model document cannot be parsed or fails validation."""


class ModelVersionError(ModelFormatError):
    """A serialized model document declares an unsupported format version."""
