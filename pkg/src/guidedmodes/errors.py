"""Exception types; the CLI maps them to exit codes."""


class ConfigError(ValueError):
    """Invalid input or configuration (CLI exit code 2)."""


class InvariantViolation(RuntimeError):
    """A numerical invariant failed at run time (CLI exit code 3)."""


class AmbiguousMatching(InvariantViolation):
    """Band matching could not separate two branches; refine the k-grid."""
