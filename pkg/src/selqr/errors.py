"""Exception types mapped to CLI exit codes."""


class InputError(ValueError):
    """Malformed user input (bad CSV, bad column map, bad config). Exit code 2."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (rank condition, non-convergence). Exit code 3."""
