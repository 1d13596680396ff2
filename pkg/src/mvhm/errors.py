"""Exception hierarchy shared by all mvhm modules."""


class MVHMError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MVHMError, ValueError):
    """Input outside the domain of an operation (bad shape, zero vector, ...)."""


class ConfigError(MVHMError, ValueError):
    pass


class ReachabilityError(DomainError):
    """Keypoints whose segment lengths disagree with the rig's bone lengths."""

    def __init__(self, message, bone=None, relative_error=None):
        super().__init__(message)
        self.bone = bone
        self.relative_error = relative_error


class DegenerateReferenceError(DomainError):
    """Spin reference vector parallel to the bone vector."""


class BehindCameraError(DomainError):
    pass


class TriangulationError(DomainError):
    pass


class GenerationError(MVHMError):
    pass


class ValidationError(MVHMError):
    """A serialized asset or dataset failed its integrity checks."""


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
