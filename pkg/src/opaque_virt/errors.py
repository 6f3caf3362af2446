"""Exception roots shared by every opaque-virt module."""


class OpaqueVirtError(Exception):
    """Base class for all opaque-virt errors."""
    pass


class ValidationFailure(OpaqueVirtError, ValueError):
    """Raised for invalid input data or configuration (CLI exit code 1)."""
    pass


class RuntimeFailure(OpaqueVirtError, RuntimeError):
    """Raised for network, I/O and other runtime failures (CLI exit code 2)."""
    pass
