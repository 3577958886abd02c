"""Exception types shared across the package."""


class FormatError(ValueError):
    """Malformed input: bad record fields, broken invariants, unparseable lines."""


class ParameterError(ValueError):
    """Out-of-range configuration value (temperature, top-p, bin count, ...)."""


class ImpossibleToken(ValueError):
    """The observed token has zero probability under the evaluation distribution."""


class EmptyInputError(ValueError):
    """An operation that needs at least one usable record received none."""
