"""Exception types shared across the package."""


class HerlError(Exception):
    """Base class for all package errors."""


class StructuralError(HerlError):
    """Operands disagree on level, representation, shape, or parameters."""


class ScaleMismatch(StructuralError):
    """Ciphertext/plaintext scales too far apart to combine."""


class DepthExhausted(HerlError):
    """No levels left for a multiplication/rescale."""


class DecryptionFailure(HerlError):
    """Tracked noise no longer fits the remaining modulus (budget exhausted)."""


class ApproximationDomainError(HerlError):
    """Input outside the domain the polynomial approximation was built for."""


class ConfigError(HerlError):
    """Invalid experiment configuration (rejected before any computation)."""


class ProtocolError(HerlError):
    """Client/cloud message-flow violation."""


class FramingError(ProtocolError):
    """Truncated or malformed wire payload."""


class ChecksumError(ProtocolError):
    """Payload checksum does not match."""


class VersionError(ProtocolError):
    """Unsupported wire-format version."""
