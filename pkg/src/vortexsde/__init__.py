"""Stochastic point-vortex dynamics on the torus, a pseudo-spectral solver
for the limiting vorticity equation with transport noise, and a harness that
couples the two through shared Wiener increments."""

from ._kernels import BACKEND as kernel_backend
from .grid import GridSpec, SpectralField, VectorField

__version__ = "0.1.0"

__all__ = ["GridSpec", "SpectralField", "VectorField", "kernel_backend", "__version__"]
