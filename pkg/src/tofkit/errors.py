"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """Bad user-supplied configuration (CLI exit code 2)."""


class VerificationError(RuntimeError):
    """A verification suite (gradient checks, manifests) failed (exit code 3)."""


class DivergenceError(RuntimeError):
    """Training produced non-finite values (exit code 4)."""
