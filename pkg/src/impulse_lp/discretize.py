"""Finite grid over the orbit domain and the induced discrete model.

Cells are pairs (origin o, step k) with k*dt < theta*(origin). The cells of one
orbit are stored contiguously so that ``offsets[o] + k`` is the global index.
Jumps land on the t=0 cell of an origin taken from a lattice
x0 + pitch*n, or are absorbed when the post-jump state lies in V^c.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import ModelError, ModelSpec, theta_star

log = logging.getLogger(__name__)

ABSORBED = -1
DEFAULT_ORIGIN_CAP = 100_000


class GridError(RuntimeError):
    """Raised when grid closure does not terminate within the origin cap."""


def n_cells_for(theta: float, dt: float) -> int:
    """Number of k >= 0 with k*dt < theta."""
    if not theta > 0:
        return 0
    if math.isinf(theta):
        raise GridError("orbit never leaves V; supply a finite horizon")
    n = int(math.ceil(theta / dt))
    while n > 0 and (n - 1) * dt >= theta:
        n -= 1
    while n * dt < theta:
        n += 1
    return n


def _snap(x: float, x0: float, pitch: float) -> int:
    """Nearest lattice index to x; ties go to the smaller base state."""
    r = (x - x0) / pitch
    lo = math.floor(r)
    return lo if r - lo <= 0.5 else lo + 1


@dataclass
class Grid:
    dt: float
    origins: np.ndarray            # base states of the orbit origins, ascending
    lattice: np.ndarray            # lattice index of each origin
    theta: np.ndarray              # theta* of each origin
    n_cells_per_origin: np.ndarray
    offsets: np.ndarray            # first global cell index of each orbit
    cell_origin: np.ndarray
    cell_k: np.ndarray
    actions: np.ndarray
    pitch: float
    x0_origin: int                 # -1 when x0 is in V^c

    @property
    def n_cells(self) -> int:
        return int(self.cell_origin.size)

    @property
    def n_actions(self) -> int:
        return int(self.actions.size)

    def cell_index(self, origin: int, k: int) -> int:
        if not 0 <= k < self.n_cells_per_origin[origin]:
            raise IndexError(f"no cell ({origin}, {k})")
        return int(self.offsets[origin] + k)


def action_values(model: ModelSpec, n_actions: int) -> np.ndarray:
    lo, hi = model.action_bounds
    if n_actions == 1:
        return np.array([float(lo)])
    return np.linspace(lo, hi, n_actions)


def _lattice_pitch(model: ModelSpec, dt: float) -> float:
    """dt times the smallest flow speed seen along the orbit of x0."""
    th = theta_star(model, model.x0)
    horizon = th if math.isfinite(th) and th > 0 else model.t_max()
    us = np.linspace(0.0, horizon, 33)
    pts = [model.flow(model.x0, float(u)) for u in us]
    if model.flow_speed is not None:
        speeds = [abs(model.flow_speed(x)) for x in pts]
    else:
        h = 1e-6
        speeds = [abs(model.flow(x, h) - x) / h for x in pts]
    pitch = dt * min(speeds)
    if not pitch > 0:
        raise GridError("flow is stationary somewhere on the x0 orbit; lattice pitch is zero")
    return pitch


def build_grid(model: ModelSpec, dt: float, n_actions: int,
               origin_cap: int = DEFAULT_ORIGIN_CAP) -> Grid:
    if not dt > 0:
        raise ModelError("dt must be positive")
    if n_actions < 1:
        raise ModelError("n_actions must be at least 1")
    actions = action_values(model, n_actions)
    th0 = theta_star(model, model.x0)
    empty = np.zeros(0, dtype=int)
    if n_cells_for(th0, dt) == 0:
        return Grid(dt, np.zeros(0), empty, np.zeros(0), empty, empty, empty, empty,
                    actions, float("nan"), -1)
    pitch = _lattice_pitch(model, dt)

    found = {0: (model.x0, th0)}
    queue = deque([0])
    while queue:
        n = queue.popleft()
        x, th = found[n]
        for k in range(n_cells_for(th, dt)):
            entry = model.flow(x, k * dt)
            for a in actions:
                y = model.jump(entry, float(a))
                if theta_star(model, y) <= 0:
                    continue
                m = _snap(y, model.x0, pitch)
                if m in found:
                    continue
                xm = model.x0 + m * pitch
                thm = theta_star(model, xm)
                found[m] = (xm, thm)
                if n_cells_for(thm, dt) > 0:
                    queue.append(m)
                if len(found) > origin_cap:
                    raise GridError(f"origin closure exceeded cap {origin_cap}")

    keep = sorted(m for m, (x, th) in found.items() if n_cells_for(th, dt) > 0)
    lattice = np.array(keep, dtype=int)
    origins = np.array([found[m][0] for m in keep])
    theta = np.array([found[m][1] for m in keep])
    ncell = np.array([n_cells_for(t, dt) for t in theta], dtype=int)
    offsets = np.concatenate([[0], np.cumsum(ncell)[:-1]]).astype(int)
    cell_origin = np.repeat(np.arange(len(keep)), ncell)
    cell_k = np.concatenate([np.arange(n) for n in ncell]).astype(int)
    x0_origin = keep.index(0)
    log.debug("grid: %d origins, %d cells, pitch %g", len(keep), cell_k.size, pitch)
    return Grid(dt, origins, lattice, theta, ncell, offsets, cell_origin, cell_k,
                actions, pitch, x0_origin)


@dataclass
class DiscreteModel:
    grid: Grid
    next: np.ndarray         # successor cell or -1
    jump_to: np.ndarray      # (n_cells, n_actions), t=0 target cell or ABSORBED
    box_rate: np.ndarray     # (n_cells, J+1), gradual cost rate at the cell midpoint
    dwell_cost: np.ndarray   # (n_cells, J+1) = box_rate * dt
    jump_cost: np.ndarray    # (n_cells, n_actions, J+1)
    entry_state: np.ndarray  # base state at cell entry
    mid_state: np.ndarray    # base state at the cell midpoint
    x0_cell: int             # -1 when V is empty at x0
    constraint_bounds: tuple
    impulse_floor: float
    snap_distance: np.ndarray  # |post-jump state - snapped origin|, nan when absorbed

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    @property
    def n_actions(self) -> int:
        return self.grid.n_actions

    @property
    def n_objectives(self) -> int:
        return int(self.box_rate.shape[1])

    @property
    def dt(self) -> float:
        return self.grid.dt

    def orbit_cells(self, cell: int) -> tuple:
        """(first, stop) global indices of the orbit containing ``cell``."""
        o = self.grid.cell_origin[cell]
        start = int(self.grid.offsets[o])
        return start, start + int(self.grid.n_cells_per_origin[o])

    def remaining(self, cell: int) -> int:
        """Number of in-V cells from ``cell`` to the orbit exit, inclusive."""
        return self.orbit_cells(cell)[1] - cell

    @property
    def dwell_prefix(self) -> np.ndarray:
        """Per-orbit cumulative dwell cost: prefix[c] = sum over orbit cells before c.

        Shape (n_cells + n_origins, J+1); the entry at ``c + origin`` is the sum
        of dwell costs of cells first..c-1 within that orbit. Dwell sums are
        always differences of these entries, so the LP builders and the
        simulator share the same rounding.
        """
        if getattr(self, "_prefix", None) is None:
            g = self.grid
            rows = []
            for o in range(g.origins.size):
                s, n = g.offsets[o], g.n_cells_per_origin[o]
                block = np.zeros((n + 1, self.n_objectives))
                block[1:] = np.cumsum(self.dwell_cost[s:s + n], axis=0)
                rows.append(block)
            self._prefix = (np.vstack(rows) if rows
                            else np.zeros((0, self.n_objectives)))
        return self._prefix

    def dwell_sum(self, cell: int, d: int) -> np.ndarray:
        """Dwell cost of cells cell..cell+d-1 (d may run to the orbit exit)."""
        o = int(self.grid.cell_origin[cell])
        p = self.dwell_prefix
        return p[cell + o + d] - p[cell + o]


def discretize(model: ModelSpec, grid: Grid) -> DiscreteModel:
    dt = grid.dt
    n, na, nj = grid.n_cells, grid.n_actions, model.n_objectives
    nxt = np.full(n, -1, dtype=int)
    jump_to = np.full((n, na), ABSORBED, dtype=int)
    box_rate = np.zeros((n, nj))
    jump_cost = np.zeros((n, na, nj))
    entry = np.zeros(n)
    mid = np.zeros(n)
    snap = np.full((n, na), np.nan)
    by_lattice = {int(m): o for o, m in enumerate(grid.lattice)}
    for c in range(n):
        o, k = int(grid.cell_origin[c]), int(grid.cell_k[c])
        x = float(grid.origins[o])
        entry[c] = model.flow(x, k * dt)
        tm = (k + 0.5) * dt
        mid[c] = model.flow(x, tm)
        box_rate[c] = model.gradual(mid[c], tm)
        if (k + 1) * dt < grid.theta[o]:
            nxt[c] = c + 1
        for i, a in enumerate(grid.actions):
            a = float(a)
            jump_cost[c, i] = model.impulse(entry[c], k * dt, a)
            y = model.jump(entry[c], a)
            if theta_star(model, y) <= 0:
                continue
            m = _snap(y, model.x0, grid.pitch)
            o2 = by_lattice.get(m)
            if o2 is None:
                continue  # snapped onto a V^c origin
            jump_to[c, i] = int(grid.offsets[o2])
            snap[c, i] = abs(y - grid.origins[o2])
    if n and np.nanmax(snap, initial=0.0) > grid.pitch:
        warnings.warn("jump snapping moved a state by more than one lattice pitch")
    x0_cell = int(grid.offsets[grid.x0_origin]) if grid.x0_origin >= 0 else -1
    return DiscreteModel(grid, nxt, jump_to, box_rate, box_rate * dt, jump_cost, entry, mid,
                         x0_cell, tuple(model.constraint_bounds), model.impulse_floor, snap)


def reachable_cells(dm: DiscreteModel) -> np.ndarray:
    """Boolean mask of cells reachable from x0_cell along next/jump_to edges."""
    seen = np.zeros(dm.n_cells, dtype=bool)
    if dm.x0_cell < 0:
        return seen
    stack = [dm.x0_cell]
    while stack:
        c = stack.pop()
        if seen[c]:
            continue
        seen[c] = True
        if dm.next[c] >= 0:
            stack.append(int(dm.next[c]))
        stack.extend(int(t) for t in dm.jump_to[c] if t >= 0)
    return seen


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return float("%.17g" % x)
    return x


def _canon(obj):
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return _fmt(obj)


def _dump(doc) -> str:
    def enc(v):
        if isinstance(v, float):
            if math.isnan(v):
                return "NaN"
            if math.isinf(v):
                return "Infinity" if v > 0 else "-Infinity"
            return "%.17g" % v
        if isinstance(v, bool) or v is None:
            return json.dumps(v)
        if isinstance(v, int):
            return str(v)
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, list):
            return "[" + ",".join(enc(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{" + ",".join(json.dumps(k) + ":" + enc(v[k]) for k in sorted(v)) + "}"
        raise TypeError(type(v))
    return enc(doc)


def canonical_json(doc) -> str:
    """JSON text with sorted keys and every float rendered as %.17g."""
    return _dump(_canon(doc))


def grid_to_dict(grid: Grid) -> dict:
    return {
        "dt": grid.dt, "origins": grid.origins, "lattice": grid.lattice, "theta": grid.theta,
        "n_cells_per_origin": grid.n_cells_per_origin, "actions": grid.actions,
        "pitch": grid.pitch, "x0_origin": grid.x0_origin,
    }


def discrete_model_to_json(dm: DiscreteModel) -> str:
    doc = {
        "grid": grid_to_dict(dm.grid), "next": dm.next, "jump_to": dm.jump_to,
        "dwell_cost": dm.dwell_cost, "jump_cost": dm.jump_cost, "x0_cell": dm.x0_cell,
        "constraint_bounds": list(dm.constraint_bounds), "impulse_floor": dm.impulse_floor,
    }
    return canonical_json(doc)
