"""Bloch-wave analysis and long-wave approximations of a periodic Boussinesq equation.

Modules
-------
spectral_core
    Grids, spectral derivatives, Sobolev norms and the discrete Bloch transform.
bloch_spectrum
    Periodic media, Bloch operator matrices and dispersion curves.
effective_model
    Wave speed, dispersion and nonlinear coefficients of the first band.
amplitude_sim
    KdV, inviscid Burgers and Whitham amplitude equations.
boussinesq_sim
    Pseudospectral RK4 solver of the full equation.
approximant
    Leading and improved approximations synthesized from amplitudes.
residual_meter, energy_meter
    Residual norms, error energies and their audits.
experiment
    Configurations, validation sweeps and reports.
"""

__version__ = "0.1.0"

from .bloch_spectrum import PeriodicCoefficients, dispersion_curve
from .effective_model import EffectiveModel, build_effective_model
from .spectral_core import GridField, SpectralGrid

__all__ = [
    "__version__",
    "PeriodicCoefficients",
    "dispersion_curve",
    "EffectiveModel",
    "build_effective_model",
    "GridField",
    "SpectralGrid",
]
