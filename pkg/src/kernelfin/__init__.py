"""Kernel-method toolkit for pricing extrapolation, reverse stress tests,
generative time series and conditioned portfolio strategies."""

from ._backend import BACKEND
from .kernels import KernelSpec, discrepancy, gradient, gram, kernel_eval, project, regularized_solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "KernelSpec",
    "discrepancy",
    "gradient",
    "gram",
    "kernel_eval",
    "project",
    "regularized_solve",
]
