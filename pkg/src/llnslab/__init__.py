"""Numerical laboratory for the truncated fluctuating Navier-Stokes system.

Three independent routes to the effective diffusivity of the limiting
stochastic heat equation (closed forms, limit integrals, finite-cutoff
operator sums), the Fock-space generator algebra behind them, and a
spectral Galerkin simulator with statistical estimators.
"""

from .params import ModelParams, CouplingSchedule, coupling_attenuation
from .basis import (DivergenceError, decompose, frame, leray_matrix,
                    recompose)
from .chaos import ChaosKernel, sigma_kernel, sym_pair
from .operators import (apply_Aminus, apply_Aplus, apply_L0_power,
                        apply_momentum, apply_number, apply_T)
from .stack import KernelStack, ResolventError, resolvent_solve

__version__ = "0.1.0"

__all__ = [
    "ModelParams", "CouplingSchedule", "coupling_attenuation",
    "DivergenceError", "decompose", "frame", "leray_matrix", "recompose",
    "ChaosKernel", "sigma_kernel", "sym_pair",
    "apply_Aminus", "apply_Aplus", "apply_L0_power", "apply_momentum",
    "apply_number", "apply_T",
    "KernelStack", "ResolventError", "resolvent_solve",
    "__version__",
]
