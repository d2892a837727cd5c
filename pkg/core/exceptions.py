"""User exceptions for s2d."""


class S2DError(Exception):
    """Base class for all s2d errors."""
    pass


class DimensionError(S2DError):
    """Operand extents do not fit the operation."""
    pass


class NumericError(S2DError):
    """Non-finite input or a quantity that cannot be normalized."""
    pass


class ContractError(S2DError):
    """A caller violated an operation pre-condition."""
    pass


class ConfigurationError(S2DError):
    """Invalid run configuration or unknown parameter / component name."""
    pass


class DataFormatError(S2DError):
    """Malformed tensor file or dataset manifest."""
    pass


class CheckpointError(S2DError):
    """Checkpoint cannot be restored into the current run."""
    pass
