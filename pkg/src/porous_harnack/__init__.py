"""Spectral-Galerkin simulation of stochastic porous media equations with
coalescent coupling, Girsanov reweighting and Monte Carlo Harnack checks."""

from .kernels import BACKEND
from .spectral import EigenBasis, SpectralMap, build_basis, norms
from .model import ModelSpec, drift_galerkin
from .integrator import PathConfig, coupled_simulate, simulate_paths

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EigenBasis",
    "SpectralMap",
    "build_basis",
    "norms",
    "ModelSpec",
    "drift_galerkin",
    "PathConfig",
    "coupled_simulate",
    "simulate_paths",
]
