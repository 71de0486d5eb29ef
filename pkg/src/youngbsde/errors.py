"""Exception taxonomy shared by the library and the experiment CLI.

The CLI maps these onto distinct exit codes, so solvers should raise the
narrowest type that applies instead of bare ValueError/RuntimeError.
"""


class ConfigError(Exception):
    """Malformed or inconsistent experiment configuration (exit code 2)."""


class DomainError(ValueError):
    """Operation precondition violated by the caller (exit code 3)."""


class NumericalError(RuntimeError):
    """Computation failed numerically: overflow, singular matrix, failed
    factorization (exit code 4)."""


class ResourceError(RuntimeError):
    """Requested problem size exceeds a configured desk-scale limit."""
