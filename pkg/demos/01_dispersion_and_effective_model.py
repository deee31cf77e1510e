"""Band structure of a periodic medium and its long-wave coefficients.

Run with ``python3 demos/01_dispersion_and_effective_model.py``.
"""

import numpy as np

from bloch_boussinesq import PeriodicCoefficients, build_effective_model, dispersion_curve
from bloch_boussinesq.experiment import ExperimentConfig

# %% The constant medium a = b = c = 1 has lambda_1(l) = l^2 + l^4 exactly.
constant = PeriodicCoefficients.constant()
l = np.linspace(-0.5, 0.5, 11)
band = dispersion_curve(constant, 2, l)
print("constant medium, max |lambda_1 - (l^2 + l^4)|:", np.max(np.abs(band.lam(1) - (l ** 2 + l ** 4))))

# %% The periodic preset: a = 1 + 0.5 cos x, b = 1, c = 1 + 0.3 cos x.
periodic = ExperimentConfig(medium="periodic").coefficients()
band = dispersion_curve(periodic, 3, np.linspace(0.0, 0.5, 6))
print("\nperiodic medium, first three bands")
for li, row in zip(band.l, band.eigenvalues):
    print(f"  l = {li:4.2f}: " + "  ".join(f"{v:9.5f}" for v in row))
print("gap half-width around the first band near l = 0:", band.gap_margin)

# %% Effective coefficients: the same numbers feed every amplitude equation.
for name, coeffs in (("constant", constant), ("periodic", periodic)):
    model = build_effective_model(coeffs)
    print(f"\n{name}: c = {model.wave_speed:.10f}, lambda'' = {model.lambda2:.10f}, "
          f"lambda'''' = {model.lambda4:.8f}, nu2 = {model.nu2:.10f}")
