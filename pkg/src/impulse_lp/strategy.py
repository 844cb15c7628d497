"""Markov strategies: recovery from aggregated measures and exact propagation.

A kernel at a t=0 cell y is a distribution over dwell indices 0..K_y-1 and
the infinite dwell (stored last), together with an action distribution for
every finite dwell. Cells without a kernel, and every step past the end of
the list, use the default rule: dwell forever (the action is then immaterial
and recorded as the smallest one).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .discretize import DiscreteModel
from .lp_aggregated import AggregatedVector, aggregate
from .lp_occupation import OccupationVector, occupation_index

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-8
MASS_TOL = 1e-10


class InfeasibleAggregateError(ValueError):
    """The residual aggregated measure went negative beyond tolerance."""


@dataclass
class Kernel:
    p_dwell: np.ndarray    # (K+1,), last entry is the infinite dwell
    p_action: np.ndarray   # (K, n_actions)

    @property
    def horizon(self) -> int:
        return self.p_dwell.size - 1

    def atoms(self, tol: float = 1e-12) -> int:
        """Number of (dwell, action) pairs with positive probability."""
        joint = self.p_dwell[:-1, None] * self.p_action
        return int((joint > tol).sum() + (self.p_dwell[-1] > tol))

    def to_dict(self) -> dict:
        return {"p_dwell": self.p_dwell.tolist(), "p_action": self.p_action.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Kernel":
        pa = np.array(d["p_action"], dtype=float)
        pd = np.array(d["p_dwell"], dtype=float)
        return cls(pd, pa.reshape(pd.size - 1, -1) if pa.size == 0 else pa)


@dataclass
class InducedKernelWork:
    nu: np.ndarray       # entering mass per cell (nonzero only at t=0 cells)
    ratio: dict          # origin cell -> residual orbit jump mass / nu
    G: dict              # origin cell -> cumulative scaled jump distribution
    u_star: dict         # origin cell -> first index with G >= 1, or None


@dataclass
class MarkovStrategy:
    steps: list          # list over steps of {cell: Kernel}
    n_actions: int
    a_hat: int = 0
    stationary: bool = False
    work: list = field(default_factory=list)

    def kernel(self, step: int, cell: int) -> Optional[Kernel]:
        """Kernel used at step ``step`` (1-based) in ``cell``; None means the default rule."""
        if self.stationary:
            return self.steps[0].get(cell) if self.steps else None
        if 1 <= step <= len(self.steps):
            return self.steps[step - 1].get(cell)
        return None

    def is_deterministic(self, tol: float = 1e-12) -> bool:
        return all(k.atoms(tol) <= 1 for table in self.steps for k in table.values())

    def max_atoms(self, tol: float = 1e-12) -> int:
        return max((k.atoms(tol) for table in self.steps for k in table.values()), default=1)

    def to_json(self) -> str:
        doc = {"n_actions": self.n_actions, "a_hat": self.a_hat, "stationary": self.stationary,
               "steps": [{str(c): k.to_dict() for c, k in sorted(t.items())} for t in self.steps]}
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MarkovStrategy":
        doc = json.loads(text)
        steps = [{int(c): Kernel.from_dict(k) for c, k in t.items()} for t in doc["steps"]]
        return cls(steps, doc["n_actions"], doc.get("a_hat", 0), doc.get("stationary", False))


def never_jump(dm: DiscreteModel) -> MarkovStrategy:
    return MarkovStrategy([], dm.n_actions)


def validate_kernel(k: Kernel, K: int, tol: float = 1e-12) -> None:
    if k.p_dwell.size != K + 1 or k.p_action.shape[0] != K:
        raise ValueError("kernel dwell support does not match the orbit exit")
    if np.any(k.p_dwell < 0) or abs(k.p_dwell.sum() - 1) > tol:
        raise ValueError("dwell distribution is not a probability vector")
    if K and (np.any(k.p_action < 0) or np.abs(k.p_action.sum(axis=1) - 1).max() > tol):
        raise ValueError("action distribution is not a probability vector")


def _step_mass(pi: MarkovStrategy, dm: DiscreteModel, step: int, nu: np.ndarray,
               mu: np.ndarray, idx):
    """Push the entering mass nu through one decision step; returns the next nu."""
    na = dm.n_actions
    nxt = np.zeros_like(nu)
    for y in np.flatnonzero(nu > 0):
        m = nu[y]
        k = pi.kernel(step, int(y))
        s = idx.start[y]
        if k is None:
            mu[s] += m
            continue
        K = k.horizon
        mu[s] += m * k.p_dwell[-1]
        joint = m * k.p_dwell[:-1, None] * k.p_action       # (K, na)
        mu[s + 1:s + 1 + K * na] += joint.ravel()
        tgt = dm.jump_to[y:y + K]
        ok = tgt >= 0
        np.add.at(nxt, tgt[ok], joint[ok])
    return nxt


def strategy_occupation(pi: MarkovStrategy, dm: DiscreteModel, max_steps: int = 64,
                        tol: float = 1e-12):
    """Exact occupation measure of pi from x0 and the partial aggregated measures.

    Returns (OccupationVector, partials) where partials[i] is the aggregated
    image of the first i+1 steps.
    """
    idx = occupation_index(dm)
    mu = np.zeros(idx.n_cols)
    partials = []
    if dm.x0_cell < 0:
        return OccupationVector(mu, idx), partials
    nu = np.zeros(dm.n_cells)
    nu[dm.x0_cell] = 1.0
    for step in range(1, max_steps + 1):
        nu = _step_mass(pi, dm, step, nu, mu, idx)
        partials.append(aggregate(OccupationVector(mu.copy(), idx), dm))
        if nu.sum() < tol:
            break
    else:
        # beyond the last step the default rule dwells forever
        for y in np.flatnonzero(nu > 0):
            mu[idx.start[y]] += nu[y]
        partials.append(aggregate(OccupationVector(mu.copy(), idx), dm))
    return OccupationVector(mu, idx), partials


def _clamp(arr: np.ndarray, what: str):
    bad = arr < -CLAMP_TOL
    if np.any(bad):
        raise InfeasibleAggregateError(
            f"residual {what} went negative ({arr[bad].min():.3e}); the input is not feasible")
    arr[arr < 0] = 0.0


def induce_markov_strategy(eta: AggregatedVector, dm: DiscreteModel,
                           max_steps: int = 64) -> MarkovStrategy:
    """Markov strategy whose aggregated occupation measure is dominated by eta.

    At every step, on each orbit with entering mass nu the residual jump mass
    per cell, divided by nu and accumulated along the orbit, gives the dwell
    distribution up to the first index where it reaches 1; leftover
    probability goes to the infinite dwell. Actions follow the conditional
    action distribution of eta at the landing cell. The mass used by the step
    is then removed from the residual.
    """
    na = dm.n_actions
    dt = dm.dt
    res_box = eta.eta_box.astype(float).copy()
    res_jump = eta.eta_jump.astype(float).copy()
    tot = eta.eta_jump.sum(axis=1)
    cond = np.zeros_like(eta.eta_jump)
    cond[:, 0] = 1.0
    pos = tot > 0
    cond[pos] = eta.eta_jump[pos] / tot[pos, None]

    steps, work = [], []
    nu = np.zeros(dm.n_cells)
    if dm.x0_cell >= 0:
        nu[dm.x0_cell] = 1.0
    for _ in range(max_steps):
        if nu.sum() < MASS_TOL:
            break
        table, ratio, G_all, u_all = {}, {}, {}, {}
        nxt = np.zeros_like(nu)
        for y in np.flatnonzero(nu > 0):
            y = int(y)
            m = nu[y]
            s, e = dm.orbit_cells(y)
            K = e - y
            J = res_jump[y:e].sum(axis=1)
            ratio[y] = float(J.sum() / m)
            G = np.cumsum(J) / m
            hit = np.flatnonzero(G >= 1.0)
            u_star = int(hit[0]) if hit.size else None
            p = np.zeros(K + 1)
            if u_star is None:
                p[:K] = J / m
            else:
                p[:u_star] = J[:u_star] / m
                p[u_star] = 1.0 - (G[u_star - 1] if u_star > 0 else 0.0)
            p[:K] = np.maximum(p[:K], 0.0)
            p[K] = max(1.0 - p[:K].sum(), 0.0)
            p /= p.sum()
            pa = cond[y:e].copy()
            table[y] = Kernel(p, pa)
            G_all[y], u_all[y] = G, u_star
            # remove this step's partial aggregated measure
            survive = 1.0 - np.cumsum(p[:K])          # P(dwell > k)
            res_box[y:e] -= m * dt * survive
            used = m * p[:K, None] * pa
            res_jump[y:e] -= used
            _clamp(res_box[y:e], "dwell mass")
            _clamp(res_jump[y:e], "jump mass")
            tgt = dm.jump_to[y:e]
            ok = tgt >= 0
            np.add.at(nxt, tgt[ok], used[ok])
        steps.append(table)
        work.append(InducedKernelWork(nu.copy(), ratio, G_all, u_all))
        nu = nxt
    return MarkovStrategy(steps, na, work=work)


@dataclass
class DominationReport:
    max_violation: float
    worst_entry: str
    ok: bool


def check_domination(eta_tilde: AggregatedVector, eta: AggregatedVector,
                     tol: float = 1e-8) -> DominationReport:
    d_box = eta_tilde.eta_box - eta.eta_box
    d_jump = eta_tilde.eta_jump - eta.eta_jump
    vb = d_box.max(initial=-np.inf)
    vj = d_jump.max(initial=-np.inf)
    worst = max(vb, vj, 0.0)
    if worst == 0.0:
        where = "none"
    elif vb >= vj:
        where = f"eta_box[{int(np.argmax(d_box))}]"
    else:
        where = "eta_jump[%d, %d]" % np.unravel_index(int(np.argmax(d_jump)), d_jump.shape)
    return DominationReport(float(worst), where, worst <= tol)


def induced_aggregate(eta: AggregatedVector, dm: DiscreteModel, max_steps: int = 64):
    """(strategy, occupation, aggregated image) for the strategy induced by eta."""
    pi = induce_markov_strategy(eta, dm, max_steps)
    mu, _ = strategy_occupation(pi, dm, max_steps + 1)
    return pi, mu, aggregate(mu, dm)
