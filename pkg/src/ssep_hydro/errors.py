"""Exception types shared across the package."""


class NonUniqueStationary(RuntimeError):
    """The boundary chain has more than one closed communicating class."""


class SizeLimit(ValueError):
    """Requested instance exceeds a hard size cap (exact methods only)."""


class Unsupported(ValueError):
    """Operation is undefined for this boundary kind or parameter regime."""
