"""Generalized Dirichlet classifiers for compositional data."""
from .distribution import GDParams, log_density, moment_init, sample
from .dgd import DGDModel, FitConfig, fit, fit_generative
from .errors import GDClassifyError, InputError, NumericalError
from .hmgd import HMGDConfig, HMGDTree
from .simplex import CompositionalSample, Dataset, alpha_transform, v_inverse, v_transform

__version__ = "0.1.0"

__all__ = [
    "CompositionalSample", "DGDModel", "Dataset", "FitConfig", "GDClassifyError", "GDParams",
    "HMGDConfig", "HMGDTree", "InputError", "NumericalError", "alpha_transform", "fit",
    "fit_generative", "log_density", "moment_init", "sample", "v_inverse", "v_transform",
]
