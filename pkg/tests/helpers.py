"""Shared, cached test instances and random strategy generators."""
from functools import lru_cache

import numpy as np

from impulse_lp.benchmarks import build_preset
from impulse_lp.discretize import build_grid, discretize
from impulse_lp.lp_aggregated import AggregatedVector, build_aggregated_lp
from impulse_lp.lp_core import solve
from impulse_lp.lp_occupation import OccupationVector, build_occupation_lp
from impulse_lp.strategy import Kernel, MarkovStrategy


@lru_cache(maxsize=None)
def instance(name="expgrowth-c5", dt=0.1, n_actions=76, **overrides):
    model = build_preset(name, **overrides)
    return discretize(model, build_grid(model, dt, n_actions))


@lru_cache(maxsize=None)
def solved_occupation(name="expgrowth-c5", dt=0.1, n_actions=76):
    dm = instance(name, dt, n_actions)
    lp, idx = build_occupation_lp(dm)
    sol = solve(lp)
    return lp, sol, OccupationVector(sol.primal, idx)


@lru_cache(maxsize=None)
def solved_aggregated(name="expgrowth-c5", dt=0.1, n_actions=76):
    dm = instance(name, dt, n_actions)
    lp, _ = build_aggregated_lp(dm)
    sol = solve(lp)
    return lp, sol, AggregatedVector.from_flat(sol.primal, dm)


def random_kernel(rng, K, n_actions, sparsity=0.5):
    w = rng.exponential(size=K + 1) * (rng.uniform(size=K + 1) < sparsity)
    w[-1] += rng.exponential() * 0.3
    if w.sum() == 0:
        w[-1] = 1.0
    pa = rng.exponential(size=(K, n_actions)) * (rng.uniform(size=(K, n_actions)) < 0.3)
    pa[:, rng.integers(n_actions)] += 1e-3
    return Kernel(w / w.sum(), pa / pa.sum(axis=1, keepdims=True))


def random_strategy(dm, rng, n_steps=3):
    """Random non-stationary Markov strategy defined on every t=0 cell."""
    starts = [int(s) for s in dm.grid.offsets]
    steps = []
    for _ in range(n_steps):
        steps.append({y: random_kernel(rng, dm.remaining(y), dm.n_actions) for y in starts})
    return MarkovStrategy(steps, dm.n_actions)


def point_strategy(dm, cell, dwell, action):
    """Deterministic one-step strategy: dwell then jump (dwell=None: never jump)."""
    K = dm.remaining(cell)
    p = np.zeros(K + 1)
    pa = np.zeros((K, dm.n_actions))
    pa[:, 0] = 1.0
    if dwell is None:
        p[-1] = 1.0
    else:
        p[dwell] = 1.0
        pa[dwell] = 0.0
        pa[dwell, action] = 1.0
    return MarkovStrategy([{cell: Kernel(p, pa)}], dm.n_actions)
