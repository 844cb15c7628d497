"""Aggregated occupation measures and the reduced LP over them.

An aggregated vector has a dwell component ``eta_box`` per cell (time spent
in the cell) and a jump component ``eta_jump`` per (cell, action) pair.
The LP imposes one balance row per cell, which is the characteristic
equation tested against the single-cell ramp functions, rewritten as a
carry chain along each orbit:

    eta_box(y)/dt = carry into y - sum_a eta_jump(y, a)

where the carry into a t=0 cell is the initial mass plus the jump arrivals,
and the carry into any later cell is eta_box(predecessor)/dt.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .discretize import DiscreteModel
from .lp_core import SparseLP
from .lp_occupation import INF_DWELL, OccupationVector, occupation_index


@dataclass
class AggregatedVector:
    eta_box: np.ndarray    # (n_cells,)
    eta_jump: np.ndarray   # (n_cells, n_actions)

    @classmethod
    def zeros(cls, dm: DiscreteModel) -> "AggregatedVector":
        return cls(np.zeros(dm.n_cells), np.zeros((dm.n_cells, dm.n_actions)))

    @classmethod
    def from_flat(cls, z: np.ndarray, dm: DiscreteModel) -> "AggregatedVector":
        n = dm.n_cells
        return cls(np.array(z[:n], dtype=float), np.array(z[n:], dtype=float).reshape(n, dm.n_actions))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.eta_box, self.eta_jump.ravel()])

    def __add__(self, other):
        return AggregatedVector(self.eta_box + other.eta_box, self.eta_jump + other.eta_jump)

    def scale(self, s: float) -> "AggregatedVector":
        return AggregatedVector(s * self.eta_box, s * self.eta_jump)

    def to_json(self) -> str:
        return json.dumps({"eta_box": self.eta_box.tolist(), "eta_jump": self.eta_jump.tolist()})


def aggregate(mu: OccupationVector, dm: DiscreteModel) -> AggregatedVector:
    """Spread each dwell over the cells it passes and move each jump to its landing cell."""
    idx = occupation_index(dm)
    n = dm.n_cells
    v = mu.values
    eta_jump = np.zeros((n, dm.n_actions))
    fin = idx.dwell != INF_DWELL
    np.add.at(eta_jump, (idx.land[fin], idx.action[fin]), v[fin])
    # difference array: +v at the start cell, -v where the dwell stops
    g = dm.grid
    stop = (g.offsets + g.n_cells_per_origin)[g.cell_origin[idx.cell]] if n else idx.cell
    end = np.where(fin, idx.land, stop)
    diff = np.zeros(n + 1)
    np.add.at(diff, idx.cell, v)
    np.add.at(diff, end, -v)
    eta_box = np.cumsum(diff)[:n] * dm.dt
    return AggregatedVector(eta_box, eta_jump)


def cost_coefficients(dm: DiscreteModel) -> np.ndarray:
    """(n_vars, J+1) costs: the midpoint rate on dwell entries, impulse cost on jumps."""
    return np.vstack([dm.box_rate, dm.jump_cost.reshape(-1, dm.n_objectives)])


def aggregated_cost(eta: AggregatedVector, dm: DiscreteModel, j: int = 0) -> float:
    return float(dm.box_rate[:, j] @ eta.eta_box + np.sum(dm.jump_cost[:, :, j] * eta.eta_jump))


def balance_matrix(dm: DiscreteModel):
    """Per-cell balance rows over the flat [eta_box, eta_jump] layout."""
    n, na = dm.n_cells, dm.n_actions
    dt = dm.dt
    rows, cols, vals = [], [], []
    cells = np.arange(n)
    rows.append(cells); cols.append(cells); vals.append(np.full(n, 1.0 / dt))
    has_pred = dm.grid.cell_k > 0 if n else np.zeros(0, bool)
    rows.append(cells[has_pred]); cols.append(cells[has_pred] - 1)
    vals.append(np.full(int(has_pred.sum()), -1.0 / dt))
    jcols = n + np.arange(n * na)
    jcell = np.repeat(cells, na)
    rows.append(jcell); cols.append(jcols); vals.append(np.ones(n * na))
    tgt = dm.jump_to.ravel()
    arr = tgt >= 0
    rows.append(tgt[arr]); cols.append(jcols[arr]); vals.append(-np.ones(int(arr.sum())))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n + n * na))
    b = np.zeros(n)
    if dm.x0_cell >= 0:
        b[dm.x0_cell] = 1.0
    return A, b


def build_aggregated_lp(dm: DiscreteModel):
    """Returns (SparseLP, cost coefficient matrix)."""
    A, b = balance_matrix(dm)
    C = cost_coefficients(dm)
    nj = dm.n_objectives
    G = sp.csr_matrix(C[:, 1:].T) if nj > 1 else None
    h = np.array(dm.constraint_bounds, dtype=float) if nj > 1 else None
    return SparseLP(C[:, 0].copy(), A, b, G, h), C


def balance_residuals(eta: AggregatedVector, dm: DiscreteModel) -> np.ndarray:
    A, b = balance_matrix(dm)
    return A @ eta.flat() - b


def verify_aggregation_feasibility(eta: AggregatedVector, dm: DiscreteModel) -> dict:
    r = balance_residuals(eta, dm)
    worst = int(np.argmax(np.abs(r))) if r.size else -1
    return {"residual": float(np.abs(r).max(initial=0.0)), "worst_cell": worst,
            "min_entry": float(min(eta.eta_box.min(initial=0.0), eta.eta_jump.min(initial=0.0)))}


def characteristic_value(eta: AggregatedVector, dm: DiscreteModel, w) -> float:
    """Left side of the characteristic equation for a grid test function w.

    w(x0) + sum chi_w * eta_box - sum w * eta_jump + sum w(jump target) * eta_jump.
    Zero for every feasible aggregated vector.
    """
    vals, chi = w.as_float()
    v = vals[dm.x0_cell] if dm.x0_cell >= 0 else 0.0
    v += float(chi @ eta.eta_box)
    v -= float(vals @ eta.eta_jump.sum(axis=1))
    tgt = dm.jump_to
    wt = np.where(tgt >= 0, vals[np.maximum(tgt, 0)], 0.0)
    v += float(np.sum(wt * eta.eta_jump))
    return v


def characteristic_value_exact(eta_box, eta_jump, dm: DiscreteModel, w) -> Fraction:
    """Exact rational version of ``characteristic_value`` for rational inputs."""
    v = w.values[dm.x0_cell] if dm.x0_cell >= 0 else Fraction(0)
    for c in range(dm.n_cells):
        v += w.chi[c] * eta_box[c]
        for a in range(dm.n_actions):
            t = int(dm.jump_to[c, a])
            v += (( w.values[t] if t >= 0 else 0) - w.values[c]) * eta_jump[c][a]
    return v


def density_bound_violation(eta: AggregatedVector, dm: DiscreteModel) -> float:
    """Max of eta_box/dt minus the mass that entered the orbit (normality check)."""
    n = dm.n_cells
    entering = np.zeros(n)
    if dm.x0_cell >= 0:
        entering[dm.x0_cell] += 1.0
    tgt = dm.jump_to.ravel()
    ok = tgt >= 0
    np.add.at(entering, tgt[ok], eta.eta_jump.ravel()[ok])
    g = dm.grid
    per_orbit = entering[g.offsets][g.cell_origin] if n else entering
    return float((eta.eta_box / dm.dt - per_orbit).max(initial=0.0))
