"""Nested sampling with slice-sampling replacements.

Live points start uniform in a :class:`PriorBox`. Each iteration removes the
worst live point, records it as dead with prior-volume estimate
``log X_i = -i / nlive``, and replaces it by evolving a copy of a surviving
live point with ``num_repeats`` slice steps under the constraint
``L > L_min``. Points of impossible likelihood count as outside every
constraint. Equal likelihoods are ordered by a uniform tie-break label
carried by each point, which keeps plateaus (a flat likelihood, say)
sampled uniformly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from ..gp import is_impossible
from ..synth import make_rng
from .base import PriorBox, SamplerConfigError, WeightedSamples

__all__ = ["NSConfig", "nested_sampling", "slice_step"]


@dataclass(frozen=True)
class NSConfig:
    """Nested-sampling settings.

    ``num_repeats`` is the number of slice steps per replacement; ``None``
    means five per dimension. The run stops once the live points hold less
    than ``termination_frac`` of the accumulated evidence.
    """

    nlive: int = 75
    num_repeats: int | None = None
    termination_frac: float = 1e-3
    seed: int = 0
    init_budget: int = 100
    max_expand: int = 20
    max_iterations: int | None = None
    check_constraint: bool = False

    def __post_init__(self):
        if self.nlive < 2:
            raise ValueError("nlive must be at least 2")
        if self.num_repeats is not None and self.num_repeats < 1:
            raise ValueError("num_repeats must be at least 1")
        if not 0 < self.termination_frac < 1:
            raise ValueError("termination_frac must lie in (0, 1)")

    def repeats(self, ndim: int) -> int:
        return self.num_repeats if self.num_repeats is not None else 5 * ndim

    def as_dict(self) -> dict:
        return asdict(self)


def _slice(x0, direction, accept, rng, width=1.0, max_expand=20, stats=None):
    """Stepping-out and shrinkage along ``x0 + s * direction``.

    ``accept(x)`` returns ``(inside, payload)``; the payload of the accepted
    point is returned with it. Returns ``(x0, None)`` if the bracket
    shrinks to nothing.
    """
    left = -rng.random() * width
    right = left + width
    for _ in range(max_expand):
        ok, _ = accept(x0 + left * direction)
        if not ok:
            break
        left -= width
    for _ in range(max_expand):
        ok, _ = accept(x0 + right * direction)
        if not ok:
            break
        right += width
    while True:
        s = left + rng.random() * (right - left)
        x = x0 + s * direction
        ok, payload = accept(x)
        if ok:
            return x, payload
        if s < 0:
            left = s
        else:
            right = s
        if right - left < 1e-12 * width:
            if stats is not None:
                stats["collapsed"] = stats.get("collapsed", 0) + 1
            return x0, None


def slice_step(point, direction, loglik, L_min, prior: PriorBox, rng,
               width: float = 1.0, max_expand: int = 20, stats=None):
    """One slice move from ``point`` along ``direction`` within ``{L > L_min} ∩ prior``.

    Returns ``(new_point, new_loglik)``. If shrinkage collapses, the input
    point is returned with ``loglik(point)``.
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)

    def accept(x):
        if not prior.contains(x):
            return False, None
        logl = loglik(x)
        if stats is not None:
            stats["calls"] = stats.get("calls", 0) + 1
        return (not is_impossible(logl) and logl > L_min), logl

    x, logl = _slice(point, direction, accept, rng, width, max_expand, stats)
    if logl is None:
        logl = loglik(point)
    return x, logl


def _directions(live, rng, ndim):
    """Slice direction in the frame whitened by the live-point covariance."""
    if ndim == 1:
        sd = float(np.std(live[:, 0]))
        return lambda: np.array([sd if sd > 0 else 1e-12])
    cov = np.cov(live, rowvar=False)
    scale = np.sqrt(np.maximum(np.diag(cov), 0.0))
    floor = 1e-12 * np.maximum(scale.max(), 1.0)
    try:
        chol = np.linalg.cholesky(cov + floor * np.eye(ndim))
    except np.linalg.LinAlgError:
        chol = np.diag(np.maximum(scale, floor))

    def draw():
        u = rng.standard_normal(ndim)
        return chol @ (u / np.linalg.norm(u))
    return draw


def nested_sampling(loglik, prior: PriorBox, cfg: NSConfig = NSConfig()) -> WeightedSamples:
    """Run nested sampling and return weighted dead + final live points."""
    rng = make_rng(cfg.seed)
    nlive = cfg.nlive
    ndim = prior.ndim
    repeats = cfg.repeats(ndim)
    stats = {"calls": 0, "collapsed": 0}

    live = np.empty((nlive, ndim))
    live_logl = np.empty(nlive)
    filled = 0
    draws = 0
    while filled < nlive:
        if draws >= cfg.init_budget * nlive:
            raise SamplerConfigError(
                f"only {filled} of {nlive} initial points had finite likelihood "
                f"after {draws} prior draws")
        x = prior.sample(rng, 1)[0]
        draws += 1
        logl = loglik(x)
        stats["calls"] += 1
        if is_impossible(logl):
            continue
        live[filled] = x
        live_logl[filled] = logl
        filled += 1
    live_tb = rng.random(nlive)

    dead_x, dead_logl, dead_logw = [], [], []
    log_shrink = math.log1p(-math.exp(-1.0 / nlive))
    log_frac = math.log(cfg.termination_frac)
    log_z = -np.inf
    log_x = 0.0
    it = 0
    while True:
        log_live = logsumexp(live_logl) - math.log(nlive) + log_x
        if log_live - np.logaddexp(log_z, log_live) < log_frac:
            break
        if cfg.max_iterations is not None and it >= cfg.max_iterations:
            break
        it += 1
        order = np.lexsort((live_tb, live_logl))
        worst = order[0]
        lmin = live_logl[worst]
        tbmin = live_tb[worst]
        log_w = lmin + log_x + log_shrink
        dead_x.append(live[worst].copy())
        dead_logl.append(lmin)
        dead_logw.append(log_w)
        log_z = np.logaddexp(log_z, log_w)
        log_x -= 1.0 / nlive

        seed = worst
        while seed == worst:
            seed = int(rng.integers(nlive))
        x = live[seed].copy()
        logl, tb = live_logl[seed], live_tb[seed]
        draw_direction = _directions(live, rng, ndim)

        def accept(y):
            if not prior.contains(y):
                return False, None
            ly = loglik(y)
            stats["calls"] += 1
            if is_impossible(ly):
                return False, None
            ty = rng.random()
            return (ly > lmin or (ly == lmin and ty > tbmin)), (ly, ty)

        for _ in range(repeats):
            x_new, payload = _slice(x, draw_direction(), accept, rng,
                                    max_expand=cfg.max_expand, stats=stats)
            if payload is not None:
                x = x_new
                logl, tb = payload
        if cfg.check_constraint:
            assert logl > lmin or (logl == lmin and tb > tbmin)
        live[worst] = x
        live_logl[worst] = logl
        live_tb[worst] = tb

    # remaining live points share the final prior volume
    log_w_live = live_logl + log_x - math.log(nlive)
    points = np.vstack([np.array(dead_x).reshape(-1, ndim), live])
    logl_all = np.concatenate([np.array(dead_logl), live_logl])
    logw_all = np.concatenate([np.array(dead_logw), log_w_live])
    log_z = float(logsumexp(logw_all))
    p = np.exp(logw_all - log_z)
    information = float(np.sum(p * logl_all) - log_z)
    information = max(information, 0.0)
    info = {
        "iterations": it,
        "logZ_dead": float(logsumexp(dead_logw)) if dead_logw else -math.inf,
        "likelihood_calls": stats["calls"],
        "slice_collapses": stats["collapsed"],
        "information": information,
        "num_repeats": repeats,
        "config": cfg.as_dict(),
    }
    return WeightedSamples(points, logw_all, logl_all, log_z,
                           math.sqrt(information / nlive), prior.names, info)
