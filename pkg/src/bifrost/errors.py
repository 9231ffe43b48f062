"""Exception hierarchy shared across the package."""


class BifrostError(Exception):
    """Base class for all errors raised by this package."""


class ModelError(BifrostError):
    """Malformed model document or inconsistent layer graph."""


class ShapeError(ModelError):
    """Tensor shapes of consecutive layers do not compose."""


class ConfigError(BifrostError):
    """Hardware configuration violates one or more validity rules.

    ``diagnostics`` holds every violated rule, one message per rule.
    """

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class MappingError(BifrostError):
    """Dataflow mapping out of range or over the multiplier budget."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class SimulatorError(BifrostError):
    """Simulation invoked with the wrong controller type or bad operands."""


class TunerError(BifrostError):
    """Tuning could not run: empty space, bad budget, or oversized grid."""
