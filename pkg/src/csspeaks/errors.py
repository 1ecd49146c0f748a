"""Shared error types mapped to CLI exit codes."""


class SolverError(RuntimeError):
    """An iterative solver failed to converge (CLI exit code 2)."""


class InfeasibleError(ValueError):
    """The requested configuration is outside the admissible regime (exit 3)."""
