"""Radial perfectly matched layers, Hardy-space infinite elements and 1D error oracles."""

__version__ = "0.1.0"

from .anisotropy import Anisotropy, beta, mu_star, nu_star  # noqa: E402
from .scaling import DampingProfile, ShiftedScaling  # noqa: E402

__all__ = ["__version__", "Anisotropy", "DampingProfile", "ShiftedScaling", "beta", "mu_star", "nu_star"]
