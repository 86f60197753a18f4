"""
Closed forms behind the likelihood pathologies
==============================================

Zero-delay moments, the Bayes-factor spectrum and the condition-number
spikes of the joint covariance.
"""

import numpy as np

from delaylik import HyperParams, ObservationGrid
from delaylik import experiments
from delaylik.analytic import condition_number_scan

# closed-form zero-delay moments against the general determinant formula
for n, sigma, el, el_closed, el2, el2_closed in experiments.appendix_moments():
    print(f"n={n} sigma={sigma:g}: log E_L {el:.6f} / {el_closed:.6f}   "
          f"log E_L2 {el2:.6f} / {el2_closed:.6f}")

# one eigenvalue goes negative once the noise is small
rep = experiments.appendix_bayes_spectrum(n_data=50, noise=0.01)
print("min rho:", rep.min_rho, "positive definite:", rep.is_positive_definite)

# condition numbers spike whenever shifted and unshifted times coincide
grid = ObservationGrid(np.arange(100) * 10.0)
for sigma in (0.01, 0.1):
    theta = HyperParams(1.0, 10.0, sigma, 0.0)
    rows = condition_number_scan(grid, theta, [10.0, 15.0, 20.0, 25.0])
    print(f"sigma={sigma}:", ", ".join(f"{d:g}->{c:.3g}" for d, c in rows))
