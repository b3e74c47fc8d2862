"""Gray-box twin models for 1-D conservation laws.

A twin model replaces the unknown flux of a gray-box simulator by a trained
expansion in logistic sigmoid bases and runs the same scheme with a discrete
adjoint, so gradients of objectives with respect to space-time controls can be
estimated from the gray box's output field alone.
"""

from .basis import BasisId, Dictionary, load_dictionary, save_dictionary
from .control import ControlField
from .errors import (BlowUpError, CFLError, ConfigError, DivergenceError, FieldFormatError, NumericalError,
                     ShapeError, SingularStepError, TwinforgeError)
from .field import Grid, QuadratureWeights, SpaceTimeField, build_grid, read_field, trapezoid_weights, write_field
from .graybox import GrayBoxCase, InitialCondition, graybox_run, graybox_solve
from .train import Objective, TrainConfig, adaptive_train, pretrain_finetune, sgd_pretrain, train_coefficients
from .twin import Discretization, TwinModel, twin_solve, value_and_grad

__version__ = "0.1.0"

__all__ = [
    "BasisId", "Dictionary", "load_dictionary", "save_dictionary", "ControlField",
    "BlowUpError", "CFLError", "ConfigError", "DivergenceError", "FieldFormatError", "NumericalError",
    "ShapeError", "SingularStepError", "TwinforgeError",
    "Grid", "QuadratureWeights", "SpaceTimeField", "build_grid", "read_field", "trapezoid_weights", "write_field",
    "GrayBoxCase", "InitialCondition", "graybox_run", "graybox_solve",
    "Objective", "TrainConfig", "adaptive_train", "pretrain_finetune", "sgd_pretrain", "train_coefficients",
    "Discretization", "TwinModel", "twin_solve", "value_and_grad",
]
