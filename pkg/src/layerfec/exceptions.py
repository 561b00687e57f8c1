"""Error taxonomy. The CLI maps these onto exit codes."""


class LayerFecError(Exception):
    """Base class for all library errors."""


class ParameterError(LayerFecError, ValueError):
    """An argument violates a documented precondition."""


class FormatError(LayerFecError, ValueError):
    """Byte-level inputs are malformed or inconsistent."""


class ConfigError(LayerFecError, ValueError):
    """A stream or experiment configuration is invalid."""


class PlanError(ConfigError):
    """A layer plan cannot be realized, e.g. non-integral reshaping."""


class DataError(LayerFecError, ValueError):
    """Derived data violates an invariant, e.g. a non-monotone curve."""
