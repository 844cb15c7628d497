"""Dynamic-programming ground truth for the discrete model.

``dp_value`` solves the unconstrained problem by value iteration on the cell
graph. ``lagrangian_sweep`` brackets the value of a problem with one
constraint: every multiplier gives a lower bound, and mixtures of the
DP-optimal policies give feasible upper bounds.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .discretize import ABSORBED, DiscreteModel

CONTINUE = -1
STOP = -2          # continue until the orbit leaves V (infinite dwell)
BELLMAN_TOL = 1e-12
MAX_SWEEPS = 100_000
MAX_POLICIES = 1_000_000


class OracleError(RuntimeError):
    pass


@dataclass
class ValueTable:
    v: np.ndarray
    best: np.ndarray    # CONTINUE, STOP, or an action index
    sweeps: int
    bellman_residual: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "v", "best"])
        for c, (v, b) in enumerate(zip(self.v, self.best)):
            label = {CONTINUE: "continue", STOP: "stop"}.get(int(b), f"a{int(b)}")
            w.writerow([c, repr(float(v)), label])
        return buf.getvalue()


def _weights(dm: DiscreteModel, weights: Optional[Sequence[float]]) -> np.ndarray:
    w = np.zeros(dm.n_objectives)
    if weights is None:
        w[0] = 1.0
    else:
        w[:len(weights)] = weights
    return w


def _bellman(dm, v, dwell, jump):
    """One Gauss-Seidel sweep; returns the largest change."""
    n = dm.n_cells
    change = 0.0
    best = np.empty(n, dtype=int)
    g = dm.grid
    # orbits by decreasing origin (jumps mostly move up), cells by decreasing k
    for o in np.argsort(-g.origins, kind="stable"):
        s, cnt = int(g.offsets[o]), int(g.n_cells_per_origin[o])
        for c in range(s + cnt - 1, s - 1, -1):
            nx = dm.next[c]
            stay = dwell[c] + (v[nx] if nx >= 0 else 0.0)
            tgt = dm.jump_to[c]
            q = jump[c] + np.where(tgt >= 0, v[np.maximum(tgt, 0)], 0.0)
            a = int(np.argmin(q)) if q.size else -1
            if a >= 0 and q[a] < stay:
                new, best[c] = q[a], a
            else:
                new, best[c] = stay, (CONTINUE if nx >= 0 else STOP)
            change = max(change, abs(new - v[c]))
            v[c] = new
    return change, best


def dp_value(dm: DiscreteModel, weights: Optional[Sequence[float]] = None) -> ValueTable:
    """Value iteration for the (weighted) cost; objective 0 alone by default."""
    w = _weights(dm, weights)
    dwell = dm.dwell_cost @ w
    jump = dm.jump_cost @ w
    v = np.zeros(dm.n_cells)
    if dm.n_cells == 0:
        return ValueTable(v, np.zeros(0, dtype=int), 0, 0.0)
    for sweep in range(1, MAX_SWEEPS + 1):
        change, best = _bellman(dm, v, dwell, jump)
        if change <= BELLMAN_TOL:
            return ValueTable(v, best, sweep, change)
    raise OracleError("value iteration did not converge")


def policy_costs(dm: DiscreteModel, best: np.ndarray, max_events: int = 10_000) -> np.ndarray:
    """All J+1 costs from x0 of the deterministic cell policy ``best``.

    Dwell sums use the same prefix differences as the LP columns.
    """
    total = np.zeros(dm.n_objectives)
    c = dm.x0_cell
    if c < 0:
        return total
    for _ in range(max_events):
        start = c
        while best[c] == CONTINUE:
            c = int(dm.next[c])
        if best[c] == STOP:
            total += dm.dwell_sum(start, dm.remaining(start))
            return total
        a = int(best[c])
        total += dm.dwell_sum(start, c - start) + dm.jump_cost[c, a]
        c = int(dm.jump_to[c, a])
        if c == ABSORBED:
            return total
    raise OracleError("policy cycles without absorption")


@dataclass
class SweepResult:
    lambdas: np.ndarray
    values: np.ndarray        # DP value of C0 + lambda*C1 at x0
    lower_bounds: np.ndarray  # values - lambda*d
    points: np.ndarray        # (len(lambdas), J+1) costs of the DP-optimal policies
    bound: float

    @property
    def best_lower(self) -> float:
        return float(self.lower_bounds.max())

    @property
    def best_lambda(self) -> float:
        return float(self.lambdas[int(np.argmax(self.lower_bounds))])

    def upper_envelope(self) -> float:
        """Cheapest mixture of at most two candidate policies meeting the bound."""
        return feasible_envelope(self.points, self.bound)


def feasible_envelope(points: np.ndarray, bound: float, tol: float = 1e-12) -> float:
    """min cost0 over convex combinations of two points with cost1 <= bound."""
    best = np.inf
    pts = np.unique(np.asarray(points)[:, :2], axis=0)
    for c0, c1 in pts:
        if c1 <= bound + tol:
            best = min(best, c0)
    for (p0, p1), (q0, q1) in itertools.combinations(pts, 2):
        if (p1 - bound) * (q1 - bound) < 0:
            s = (q1 - bound) / (q1 - p1)   # weight on p
            best = min(best, s * p0 + (1 - s) * q0)
    return float(best)


def _sweep_point(dm, lam, j):
    w = np.zeros(dm.n_objectives)
    w[0], w[j] = 1.0, lam
    vt = dp_value(dm, w)
    val = vt.v[dm.x0_cell] if dm.x0_cell >= 0 else 0.0
    return val, policy_costs(dm, vt.best)[[0, j]]


def lagrangian_sweep(dm: DiscreteModel, lambdas: Sequence[float], j: int = 1,
                     refine: int = 0) -> SweepResult:
    """DP values of C0 + lambda*Cj over a multiplier grid.

    The dual function lambda -> value - lambda*d is concave, so ``refine``
    golden-section steps between the neighbours of the best grid point home
    in on the best multiplier and on the policies on either side of it.
    """
    if dm.n_objectives < 2:
        raise OracleError("the sweep needs a constrained objective")
    d = dm.constraint_bounds[j - 1]
    lams = [float(x) for x in lambdas]
    vals, pts = [], []
    for lam in lams:
        v, p = _sweep_point(dm, lam, j)
        vals.append(v)
        pts.append(p)
    if refine and len(lams) > 1:
        order = np.argsort(lams)
        i = int(np.argmax([vals[k] - lams[k] * d for k in order]))
        lo = lams[order[max(i - 1, 0)]]
        hi = lams[order[min(i + 1, len(lams) - 1)]]
        r = (math.sqrt(5) - 1) / 2
        a, b = hi - r * (hi - lo), lo + r * (hi - lo)
        fa, fb = _sweep_point(dm, a, j), _sweep_point(dm, b, j)
        for lam, (v, p) in ((a, fa), (b, fb)):
            lams.append(lam); vals.append(v); pts.append(p)
        for _ in range(refine):
            if fa[0] - a * d >= fb[0] - b * d:
                hi, b, fb = b, a, fa
                a = hi - r * (hi - lo)
                fa = _sweep_point(dm, a, j)
                lams.append(a); vals.append(fa[0]); pts.append(fa[1])
            else:
                lo, a, fa = a, b, fb
                b = lo + r * (hi - lo)
                fb = _sweep_point(dm, b, j)
                lams.append(b); vals.append(fb[0]); pts.append(fb[1])
    lams, vals = np.array(lams), np.array(vals)
    return SweepResult(lams, vals, vals - lams * d, np.array(pts), d)


def enumerate_policies(dm: DiscreteModel, weights: Optional[Sequence[float]] = None,
                       max_policies: int = MAX_POLICIES) -> float:
    """Exact optimum over deterministic stationary policies by exhaustion.

    A policy picks, at every t=0 cell, either the infinite dwell or a pair
    (dwell d, action a); the count is the product of (K*n_actions + 1).
    """
    w = _weights(dm, weights)
    if dm.x0_cell < 0:
        return 0.0
    g = dm.grid
    starts = [int(s) for s in g.offsets]
    choices = [[None] + [(d, a) for d in range(int(n)) for a in range(dm.n_actions)]
               for n in g.n_cells_per_origin]
    count = int(np.prod([len(c) for c in choices], dtype=float))
    if count > max_policies:
        raise OracleError(f"instance too large: {count} policies")
    where = {s: i for i, s in enumerate(starts)}
    best = np.inf
    for pol in itertools.product(*choices):
        total, c, seen = 0.0, dm.x0_cell, set()
        while True:
            if c in seen:
                total = np.inf
                break
            seen.add(c)
            ch = pol[where[c]]
            if ch is None:
                total += float(dm.dwell_sum(c, dm.remaining(c)) @ w)
                break
            d, a = ch
            total += float(dm.dwell_sum(c, d) @ w + dm.jump_cost[c + d, a] @ w)
            c = int(dm.jump_to[c + d, a])
            if c == ABSORBED:
                break
        best = min(best, total)
    return float(best)
