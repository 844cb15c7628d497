"""Built-in models: the exponential-growth family and its measure changes.

The base state grows as x*e^u (the solution of dx = G(x)du with G(x) = x),
a jump of size a moves x to x + a at cost a, and dwelling below the cutoff K
costs c per unit time. Above K nothing costs anything, so V^c = [K, inf).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .model import ModelError, ModelSpec


@dataclass(frozen=True)
class ExpGrowthParams:
    x0: float = 1.0
    K: float = math.e
    c: float = 5.0
    a_min: float = 0.5
    a_max: Optional[float] = 2.0   # None means the no-impulse cost H
    constraint: Optional[str] = None  # None, "impulse" (C1 = a) or "total" (C1 = C0)
    bound: float = 1.0

    @property
    def H(self) -> float:
        """Total cost of never jumping from x0."""
        return self.c * math.log(self.K / self.x0)

    def validate(self):
        if not 0 < self.x0 < self.K:
            raise ModelError("need 0 < x0 < K")
        if not self.a_min > 0:
            raise ModelError("a_min must be positive (it is the impulse floor)")
        if self.c < 0:
            raise ModelError("c must be nonnegative")
        if self.constraint not in (None, "impulse", "total"):
            raise ModelError(f"unknown constraint kind {self.constraint!r}")
        hi = self.a_cap
        if not hi >= self.a_min:
            raise ModelError("a_max must be at least a_min")

    @property
    def a_cap(self) -> float:
        return self.H if self.a_max is None else self.a_max


def build_expgrowth(p: ExpGrowthParams) -> ModelSpec:
    p.validate()
    K, c = p.K, p.c

    def flow(x, u):
        return x * math.exp(u)

    def jump(x, a):
        return x + a

    def cg(x, t):
        return c if x < K else 0.0

    def ci(x, t, a):
        return float(a)

    def theta(x):
        if c == 0 or x >= K:
            return 0.0
        return math.log(K / x)

    gradual, impulse, bounds = [cg], [ci], ()
    if p.constraint == "impulse":
        gradual.append(lambda x, t: 0.0)
        impulse.append(ci)
        bounds = (p.bound,)
    elif p.constraint == "total":
        gradual.append(cg)
        impulse.append(ci)
        bounds = (p.bound,)
    return ModelSpec(flow=flow, jump=jump, gradual_costs=tuple(gradual),
                     impulse_costs=tuple(impulse), action_bounds=(p.a_min, p.a_cap),
                     impulse_floor=p.a_min, x0=p.x0, constraint_bounds=bounds,
                     theta_star_exact=theta, flow_speed=lambda x: x,
                     name="expgrowth", params=dict(p.__dict__))


def speed(x):
    """Right-hand side G(x) = x of the growth ODE."""
    return x


PRESETS = {
    "expgrowth-c5": ExpGrowthParams(),
    "expgrowth-c1": ExpGrowthParams(c=1.0, a_min=0.5, a_max=1.0),
    "expgrowth-c5-constrained": ExpGrowthParams(constraint="impulse", bound=1.0),
    "expgrowth-c5-budget": ExpGrowthParams(constraint="total", bound=0.0),
    # every jump from the x0 orbit lands at or above K, so there is one orbit
    "expgrowth-tiny": ExpGrowthParams(a_min=1.75, a_max=2.0),
    "zero-cost": ExpGrowthParams(c=0.0),
}


def preset_params(name: str, **overrides) -> ExpGrowthParams:
    if name not in PRESETS:
        raise KeyError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], **overrides)


def build_preset(name: str, **overrides) -> ModelSpec:
    m = build_expgrowth(preset_params(name, **overrides))
    return replace(m, name=name)


# ---------------------------------------------------------------------------
# measure changes between the aggregated LP and two earlier LP formulations

@dataclass
class UpsilonMeasures:
    atoms: np.ndarray      # base states carrying the dwell measure (cell midpoints)
    u1_1: np.ndarray       # dwell measure at ``atoms``
    edges: np.ndarray      # lattice bin edges for the smeared jump measures
    u1_2: Optional[np.ndarray] = None   # jump smear, mass per bin
    u2_1: Optional[np.ndarray] = None   # equals u1_1
    u2_2: Optional[np.ndarray] = None   # (n_bins, n_actions) smear scaled by 1/a


def smear_edges(dm) -> np.ndarray:
    """Bins of the snapping lattice covering every jump segment [x, x+a]."""
    g = dm.grid
    if dm.n_cells == 0:
        return np.array([0.0, 1.0])
    x0 = float(g.origins[g.x0_origin])
    lo = min(float(dm.entry_state.min()), x0)
    hi = float(dm.entry_state.max() + g.actions.max())
    n_lo = math.floor((lo - x0) / g.pitch)
    n_hi = math.ceil((hi - x0) / g.pitch) + 1
    return x0 + g.pitch * np.arange(n_lo, n_hi + 1)


def _overlap(edges: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(len(x), n_bins) lengths of (x_i, y_i) inside each bin."""
    lo = np.maximum(edges[None, :-1], x[:, None])
    hi = np.minimum(edges[None, 1:], y[:, None])
    return np.maximum(hi - lo, 0.0)


def _smear_by_action(eta, dm, edges) -> np.ndarray:
    """(n_bins, n_actions): sum over cells of eta_jump * |(x, x+a) in bin|."""
    acts = dm.grid.actions
    out = np.zeros((edges.size - 1, acts.size))
    x = dm.entry_state
    for i, a in enumerate(acts):
        ov = _overlap(edges, x, x + a)
        out[:, i] = ov.T @ eta.eta_jump[:, i]
    return out


def to_upsilon1(eta, dm) -> UpsilonMeasures:
    edges = smear_edges(dm)
    smear = _smear_by_action(eta, dm, edges)
    return UpsilonMeasures(dm.mid_state.copy(), eta.eta_box.copy(), edges, u1_2=smear.sum(axis=1))


def to_upsilon2(eta, dm) -> UpsilonMeasures:
    edges = smear_edges(dm)
    smear = _smear_by_action(eta, dm, edges)
    u2_2 = smear / dm.grid.actions[None, :]
    return UpsilonMeasures(dm.mid_state.copy(), eta.eta_box.copy(), edges,
                           u2_1=eta.eta_box.copy(), u2_2=u2_2)


def objective_forms(eta, dm) -> tuple:
    """Objective of eta in the aggregated form and in the two transformed forms."""
    cg = dm.box_rate[:, 0]
    acts = dm.grid.actions
    f33 = float(cg @ eta.eta_box + np.sum(eta.eta_jump * acts[None, :]))
    u1 = to_upsilon1(eta, dm)
    f34 = float(cg @ u1.u1_1 + u1.u1_2.sum())
    u2 = to_upsilon2(eta, dm)
    f35 = float(cg @ u2.u2_1 + np.sum(u2.u2_2 * acts[None, :]))
    return f33, f34, f35


def verify_objective_equality(eta, dm, tol: float = 1e-9) -> dict:
    f = objective_forms(eta, dm)
    gap = max(abs(f[0] - f[1]), abs(f[0] - f[2]), abs(f[1] - f[2]))
    return {"aggregated": f[0], "upsilon1": f[1], "upsilon2": f[2], "max_gap": gap,
            "ok": gap <= tol * max(1.0, abs(f[0]))}


@dataclass
class LatticeRamp:
    """Piecewise-linear w(x) = clip(X2 - x, 0, X2 - X1), knots on the lattice.

    Positive, decreasing, and zero from X2 <= K on, so it is a valid test
    function of the base-state formulation.
    """

    X1: float
    X2: float

    def __call__(self, x):
        return np.clip(self.X2 - np.asarray(x, dtype=float), 0.0, self.X2 - self.X1)

    def slope(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.X1) & (x < self.X2), -1.0, 0.0)


def constraint_forms(eta, dm, w) -> tuple:
    """Characteristic-equation value of eta for a base-state test function w.

    Returns the aggregated form (jumps enter as w(x+a) - w(x)) and the two
    transformed forms (jumps enter through w' against the smeared measures).
    The dwell term uses chi w = w'(x) G(x) at the cell midpoints in all three.
    """
    g = dm.grid
    x0 = float(g.origins[g.x0_origin])
    chi = w.slope(dm.mid_state) * speed(dm.mid_state)
    x = dm.entry_state
    dw = w(x[:, None] + g.actions[None, :]) - w(x)[:, None]
    f33 = float(w(x0) + chi @ eta.eta_box + np.sum(dw * eta.eta_jump))
    edges = smear_edges(dm)
    mids = 0.5 * (edges[:-1] + edges[1:])
    wslope = w.slope(mids)
    u1 = to_upsilon1(eta, dm)
    f34 = float(w(x0) + chi @ u1.u1_1 + wslope @ u1.u1_2)
    u2 = to_upsilon2(eta, dm)
    f35 = float(w(x0) + chi @ u2.u2_1 + np.sum(wslope[:, None] * g.actions[None, :] * u2.u2_2))
    return f33, f34, f35
