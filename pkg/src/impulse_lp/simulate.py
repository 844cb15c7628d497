"""Monte Carlo execution of Markov strategies on the discrete model.

Random numbers come from a counter-based generator: the uniforms used at
decision step i of a run with seed s are a pure function of (s, i), so runs
are reproducible and independent of execution order.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .discretize import ABSORBED, DiscreteModel
from .lp_occupation import OccupationVector, occupation_index
from .strategy import MarkovStrategy


@dataclass
class Event:
    cell: int            # t=0 cell where the step starts
    dwell: object        # dwell index, or None for the infinite dwell
    action: int          # action index (the default action for infinite dwells)


@dataclass
class Trajectory:
    events: list = field(default_factory=list)
    costs: np.ndarray = None
    absorbed: bool = False
    seed: int = 0

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "absorbed": self.absorbed,
                           "costs": [float(c) for c in self.costs],
                           "events": [[e.cell, e.dwell, e.action] for e in self.events]})


def step_uniforms(seed: int, step: int) -> np.ndarray:
    """Two uniforms in [0, 1) keyed by (seed, step)."""
    bg = np.random.Philox(key=int(seed), counter=int(step))
    return np.random.Generator(bg).random(2)


def _draw(p: np.ndarray, u: float) -> int:
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    i = min(i, p.size - 1)
    while p[i] <= 0 and i > 0:   # never land on a zero-probability atom
        i -= 1
    return i


def event_cost(dm: DiscreteModel, e: Event) -> np.ndarray:
    if e.dwell is None:
        return dm.dwell_sum(e.cell, dm.remaining(e.cell))
    return dm.dwell_sum(e.cell, e.dwell) + dm.jump_cost[e.cell + e.dwell, e.action]


def recompute_costs(dm: DiscreteModel, traj: Trajectory) -> np.ndarray:
    total = np.zeros(dm.n_objectives)
    for e in traj.events:
        total = total + event_cost(dm, e)
    return total


def run(dm: DiscreteModel, pi: MarkovStrategy, seed: int, max_events: int = 1000) -> Trajectory:
    traj = Trajectory(costs=np.zeros(dm.n_objectives), seed=int(seed))
    c = dm.x0_cell
    if c < 0:
        traj.absorbed = True
        return traj
    for step in range(1, max_events + 1):
        k = pi.kernel(step, c)
        if k is None:
            e = Event(c, None, pi.a_hat)
        else:
            u1, u2 = step_uniforms(seed, step)
            d = _draw(k.p_dwell, u1)
            if d == k.horizon:
                e = Event(c, None, pi.a_hat)
            else:
                e = Event(c, d, _draw(k.p_action[d], u2))
        traj.events.append(e)
        traj.costs = traj.costs + event_cost(dm, e)
        if e.dwell is None:
            traj.absorbed = True
            return traj
        c = int(dm.jump_to[e.cell + e.dwell, e.action])
        if c == ABSORBED:
            traj.absorbed = True
            return traj
    return traj


def run_seed(seed: int, r: int) -> int:
    """Philox key of the r-th replication under a base seed."""
    return (int(seed) << 64) | int(r)


def simulate_many(dm, pi, n_runs: int, seed: int, max_events: int = 1000) -> list:
    return [run(dm, pi, run_seed(seed, r), max_events) for r in range(n_runs)]


@dataclass
class Estimate:
    mean: np.ndarray
    stderr: np.ndarray
    n: int
    non_absorbed: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["objective_index", "mean", "stderr", "n"])
        for j, (m, s) in enumerate(zip(self.mean, self.stderr)):
            w.writerow([j, repr(float(m)), repr(float(s)), self.n])
        return buf.getvalue()


def summarize(trajs: list, n_objectives: int) -> Estimate:
    if not trajs:
        return Estimate(np.zeros(n_objectives), np.zeros(n_objectives), 0)
    C = np.array([t.costs for t in trajs])
    n = len(trajs)
    se = C.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(n_objectives)
    se[(C == C[0]).all(axis=0)] = 0.0   # constant columns: avoid rounding noise in the mean
    return Estimate(C.mean(axis=0), se, n, sum(not t.absorbed for t in trajs))


def estimate(dm, pi, n_runs: int, seed: int, max_events: int = 1000) -> Estimate:
    return summarize(simulate_many(dm, pi, n_runs, seed, max_events), dm.n_objectives)


def empirical_occupation(trajs: list, dm: DiscreteModel) -> OccupationVector:
    idx = occupation_index(dm)
    mu = np.zeros(idx.n_cols)
    for t in trajs:
        for e in t.events:
            mu[idx.col(e.cell, e.dwell, e.action)] += 1.0
    if trajs:
        mu /= len(trajs)
    return OccupationVector(mu, idx)


def trajectories_jsonl(trajs: list) -> str:
    return "".join(t.to_json() + "\n" for t in trajs)
