"""Exception types shared across modules."""


class ConfigError(ValueError):
    """Scenario, meta or parameter file is incomplete or inconsistent."""


class ValidationError(ConfigError):
    """A loaded object violates its invariants (e.g. a non-convex region)."""


class FormatError(ValueError):
    """Image file is not in the expected binary PGM layout."""


class ConsistencyError(ValueError):
    """Two grids that must share geometry do not."""
