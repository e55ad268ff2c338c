"""Numerical lab for the incompressible Oldroyd-B model on periodic boxes."""

from .grid_spectral import Grid, ScalarField, SymTensorField, TensorField, VectorField
from .params import ModelParams

__all__ = ["Grid", "ScalarField", "VectorField", "SymTensorField", "TensorField", "ModelParams"]
__version__ = "0.1.0"
