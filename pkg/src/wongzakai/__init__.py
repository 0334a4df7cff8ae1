"""Wong-Zakai-Galerkin simulation of semilinear stochastic heat equations.

Submodules: ``spectral`` (sine basis and transforms), ``noise`` (counter-based
Brownian increments), ``ou`` (exact and WZ Ornstein-Uhlenbeck modes),
``drift`` (monotone polynomial drifts), ``solver`` (ETD1 integrators),
``harness`` (coupled Monte Carlo studies) and ``cli``.
"""
__version__ = "0.1.0"

from .drift import DriftSpec, NumericalBlowUp, allen_cahn, odd_poly, zero_drift
from .noise import NoisePath, coarsen, sample_path
from .ou import ou_error_breakdown, ou_mse_analytic, tail_variance
from .solver import SolverConfig, Trajectory, make_config, solve_reference, solve_wz
from .spectral import GridField, SpectralField

__all__ = [
    "DriftSpec", "GridField", "NoisePath", "NumericalBlowUp", "SolverConfig", "SpectralField", "Trajectory",
    "allen_cahn", "coarsen", "make_config", "odd_poly", "ou_error_breakdown", "ou_mse_analytic", "sample_path",
    "solve_reference", "solve_wz", "tail_variance", "zero_drift",
]
