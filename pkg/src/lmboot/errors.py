"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: configuration/validation problems
exit 2, data problems exit 3, internal invariant violations exit 4.
"""


class ConfigError(ValueError):
    """A parameter or configuration value is out of range or inconsistent."""


class DataError(ValueError):
    """An input file or record is malformed or violates a data invariant."""


class InvariantError(RuntimeError):
    """An internal consistency check failed; indicates a bug, not bad input."""
