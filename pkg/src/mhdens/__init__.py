"""Ensemble finite-element solver for reduced MHD at low magnetic Reynolds number."""

from .assembly import FieldB
from .mesh import Mesh, build_rect_mesh, mesh_size
from .spaces import FESpace, FeFunction, build_space, interpolate
from .stepper import BCProvider, EnsembleState, EnsembleStepper, ModelParams, compute_mean

__all__ = [
    "BCProvider",
    "EnsembleState",
    "EnsembleStepper",
    "FESpace",
    "FeFunction",
    "FieldB",
    "Mesh",
    "ModelParams",
    "build_rect_mesh",
    "build_space",
    "compute_mean",
    "interpolate",
    "mesh_size",
]

__version__ = "0.1.0"
