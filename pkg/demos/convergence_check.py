"""
Is a sampler run converged?
===========================

A Laplace fit at the true delay gives the yardstick: a run counts as
converged when its posterior mean lies within ``f`` Laplace standard
deviations of the mode.
"""

from delaylik import DelayLikelihood, HyperParams, ObservationGrid, sample_pair, stream
from delaylik.diagnostics import classify_convergence, laplace_at_true_mode
from delaylik.samplers import NSConfig, PriorBox, nested_sampling

theta = HyperParams(amplitude=1.0, length_scale=10.0, noise=0.01, delay=10.0)
grid = ObservationGrid.uniform(0.0, 1000.0, 100)
like = DelayLikelihood(sample_pair(grid, theta, stream(2024, 0)), theta)

lap = laplace_at_true_mode(like.scalar, 10.0, bounds=(-1000.0, 1000.0), t_range=1000.0)
print(f"Laplace mode {lap.mode:.4f}, sd {lap.sd:.4f}")

# a second peak near 10.1 shifts even long runs by several sd, so the
# threshold has to sit above that (calibrate_f measures it from references)
for nlive in (15, 75, 500):
    for seed in (0, 1):
        run = nested_sampling(like, PriorBox.delay_only(1000.0), NSConfig(nlive=nlive, seed=seed))
        rec = classify_convergence(run, lap, f=10.0)
        print(f"nlive {nlive:3d} seed {seed}: mean {rec.posterior_mean:9.3f}  "
              f"deviation {rec.deviation:10.1f}  converged {rec.converged}")
