"""Exception hierarchy shared by the solver, training and CLI layers."""


class TwinforgeError(Exception):
    """Base class for all package errors."""


class ConfigError(TwinforgeError, ValueError):
    """Invalid configuration or input data. ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ShapeError(TwinforgeError, ValueError):
    pass


class FieldFormatError(TwinforgeError, ValueError):
    pass


class NumericalError(TwinforgeError, ArithmeticError):
    """A solver or optimizer failed numerically."""


class CFLError(NumericalError):
    def __init__(self, message, required_substeps):
        super().__init__(f"{message} (requires at least {required_substeps} substeps per output interval)")
        self.required_substeps = required_substeps


class BlowUpError(NumericalError):
    def __init__(self, step):
        super().__init__(f"non-finite state at output step {step}")
        self.step = step


class SingularStepError(NumericalError):
    def __init__(self, step):
        super().__init__(f"singular step Jacobian at timestep {step}")
        self.step = step


class DivergenceError(NumericalError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
