"""Discretized occupation-measure LP over (cell, dwell, action) triples.

Column layout: for each cell y the columns are [y, infinite dwell] followed by
(y, d, a) for d = 0..K_y-1 and every action, where K_y is the number of in-V
cells left on the orbit of y. Dwell d means the process flows through cells
y..y+d-1 and jumps at the entry of cell y+d, so no column ever waits past the
V-exit. Each cell carries one balance row: mass starting a step at y equals
the initial mass at y plus the jump mass arriving there.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discretize import DiscreteModel
from .lp_core import SparseLP

INF_DWELL = -1


@dataclass
class OccupationIndex:
    start: np.ndarray      # first column of each cell
    cell: np.ndarray       # column -> starting cell
    dwell: np.ndarray      # column -> dwell index, INF_DWELL for theta = infinity
    action: np.ndarray     # column -> action index, -1 for theta = infinity
    land: np.ndarray       # column -> cell where the jump happens, -1 for infinity
    target: np.ndarray     # column -> post-jump cell, ABSORBED, or -1 for infinity
    cost: np.ndarray       # (n_cols, J+1) discrete C-bar_j
    n_actions: int

    @property
    def n_cols(self) -> int:
        return self.cell.size

    def col(self, cell: int, dwell, action: int = 0) -> int:
        """Column of (cell, dwell, action); pass dwell=None for the infinite dwell."""
        if dwell is None or dwell == INF_DWELL:
            return int(self.start[cell])
        return int(self.start[cell] + 1 + dwell * self.n_actions + action)

    def to_json(self) -> str:
        return json.dumps({"columns": [[int(c), int(d), int(a)] for c, d, a in
                                       zip(self.cell, self.dwell, self.action)],
                           "legend": "cell, dwell (-1 = infinite), action (-1 = none)"})


def occupation_index(dm: DiscreteModel) -> OccupationIndex:
    if getattr(dm, "_occ_index", None) is not None:
        return dm._occ_index
    n, na = dm.n_cells, dm.n_actions
    g = dm.grid
    cells = np.arange(n)
    stop = (g.offsets + g.n_cells_per_origin)[g.cell_origin] if n else np.zeros(0, int)
    K = stop - cells
    per = K * na + 1
    start = np.concatenate([[0], np.cumsum(per)[:-1]]).astype(int) if n else np.zeros(0, int)
    total = int(per.sum())
    col_cell = np.repeat(cells, per)
    pos = np.arange(total) - np.repeat(start, per)
    is_inf = pos == 0
    q = pos - 1
    dwell = np.where(is_inf, INF_DWELL, q // na)
    action = np.where(is_inf, -1, q % na)
    land = np.where(is_inf, -1, col_cell + np.maximum(dwell, 0))
    target = np.full(total, -1, dtype=int)
    fin = ~is_inf
    target[fin] = dm.jump_to[land[fin], action[fin]]
    # dwell cost through prefix differences, shared with the simulator
    prefix = dm.dwell_prefix
    orig = g.cell_origin[col_cell] if n else np.zeros(0, int)
    base = prefix[col_cell + orig]
    end = np.where(is_inf, stop[col_cell] if n else 0, land)
    cost = prefix[end + orig] - base
    cost[fin] += dm.jump_cost[land[fin], action[fin]]
    idx = OccupationIndex(start, col_cell, dwell, action, land, target, cost, na)
    dm._occ_index = idx
    return idx


@dataclass
class OccupationVector:
    values: np.ndarray
    index: OccupationIndex

    def mass_at(self, cell: int) -> float:
        s = self.index.start[cell]
        e = self.index.start[cell + 1] if cell + 1 < self.index.start.size else self.values.size
        return float(self.values[s:e].sum())


def occupation_cost(mu: OccupationVector, j: int = 0) -> float:
    return float(mu.index.cost[:, j] @ mu.values)


def characteristic_matrix(dm: DiscreteModel):
    """Balance rows (out-marginal minus jump inflow) and right-hand side."""
    idx = occupation_index(dm)
    n = dm.n_cells
    cols = np.arange(idx.n_cols)
    arr = idx.target >= 0
    rows = np.concatenate([idx.cell, idx.target[arr]])
    cc = np.concatenate([cols, cols[arr]])
    vals = np.concatenate([np.ones(idx.n_cols), -np.ones(int(arr.sum()))])
    A = sp.csr_matrix((vals, (rows, cc)), shape=(n, idx.n_cols))
    b = np.zeros(n)
    if dm.x0_cell >= 0:
        b[dm.x0_cell] = 1.0
    return A, b


def build_occupation_lp(dm: DiscreteModel):
    """Returns (SparseLP, OccupationIndex)."""
    idx = occupation_index(dm)
    A, b = characteristic_matrix(dm)
    nj = dm.n_objectives
    G = sp.csr_matrix(idx.cost[:, 1:].T) if nj > 1 else None
    h = np.array(dm.constraint_bounds, dtype=float) if nj > 1 else None
    return SparseLP(idx.cost[:, 0].copy(), A, b, G, h), idx


def characteristic_residual(mu: OccupationVector, dm: DiscreteModel) -> float:
    A, b = characteristic_matrix(dm)
    return float(np.abs(A @ mu.values - b).max(initial=0.0))


def dense_index_size(dm: DiscreteModel) -> int:
    """Size of the rectangular (cell, dwell or infinity, action) index space."""
    if dm.n_cells == 0:
        return 0
    kmax = int(dm.grid.n_cells_per_origin.max())
    return dm.n_cells * (kmax + 1) * dm.n_actions


def extract_stationary_strategy(mu: OccupationVector, dm: DiscreteModel, tol: float = 1e-12):
    """Normalize mu at each cell with positive mass into a kernel over (dwell, action)."""
    from .strategy import Kernel, MarkovStrategy

    idx = mu.index
    na = dm.n_actions
    table = {}
    for y in range(dm.n_cells):
        s = idx.start[y]
        K = dm.remaining(y)
        block = np.maximum(mu.values[s:s + 1 + K * na], 0.0)
        m = block.sum()
        if m <= tol:
            continue
        joint = block[1:].reshape(K, na) / m
        p_dwell = np.append(joint.sum(axis=1), block[0] / m)
        p_action = np.zeros((K, na))
        p_action[:, 0] = 1.0
        pos = p_dwell[:K] > 0
        p_action[pos] = joint[pos] / p_dwell[:K][pos, None]
        table[y] = Kernel(p_dwell / p_dwell.sum(), p_action)
    return MarkovStrategy([table], na, stationary=True)
