"""
The data-averaged log-likelihood as a function of delay
========================================================

Scan the expected log-likelihood over the whole delay prior for 100
evenly spaced observations and write the curves as SVG files.
"""

import numpy as np

from delaylik import experiments
from delaylik.svg import emit_svg

scan = experiments.averaged_scan(n_data=100, t_range=1000.0, length_scale=10.0,
                                 noise=1e-2, true_delay=10.0, n_delays=2001)
checks = experiments.w_shape_checks(scan, true_delay=10.0, t_range=1000.0)

# the peak sits at the true delay, the curve climbs again towards the edges
print("argmax:", checks["argmax"])
print("e at the truth / at +-t_range:", checks["e_true"], checks["e_plus_edge"])
print("median sd/|e|:", checks["median_sd_ratio"])

d = scan["delta_t"]
with open("w_shape.svg", "w", encoding="utf-8") as fh:
    fh.write(emit_svg(d, {"e_loglik": scan["e_loglik"]}, title="averaged log-likelihood",
                      xlabel="delta_t", ylabel="log-likelihood"))

# subtracting the fully decorrelated value removes most of the edge structure
reg = scan["e_loglik_reg"]
print("regularised argmax:", d[np.argmax(reg)])
with open("w_shape_regularised.svg", "w", encoding="utf-8") as fh:
    fh.write(emit_svg(d, {"regularised": reg}, title="regularised", xlabel="delta_t"))
