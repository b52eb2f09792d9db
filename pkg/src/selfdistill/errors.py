"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed or out-of-domain input (shapes, non-finite values, bad ranges)."""


class DegenerateParametrizationError(ValueError):
    """The xibar -> xi map has no inverse at the requested point."""


class DataError(InputError):
    """A dataset file is absent or unreadable."""


class SchemaError(DataError):
    """A dataset file is missing a required column or has malformed structure."""


class ConfigError(InputError):
    """An experiment configuration could not be interpreted."""


class InfeasibleError(RuntimeError):
    """A requested experiment needs a solve that the numerics cannot deliver."""
