"""Continuous impulse-control problem: extended states, flow, jumps, costs.

A state is a pair (xt, t) of a scalar base coordinate and the time since the
last impulse. Impulses reset t to zero. Choosing an infinite dwell time sends
the process to the cemetery state, after which no cost accrues.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

EPS_V = 1e-12
IN_V = "InV"
IN_VC = "InVc"


class ModelError(ValueError):
    """Raised for invalid model input (negative durations, bad actions)."""


@dataclass(frozen=True)
class ExtendedState:
    xt: float = 0.0
    t: float = 0.0
    is_delta: bool = False

    def __post_init__(self):
        if not self.is_delta and self.t < 0:
            raise ModelError(f"negative time component {self.t}")


DELTA = ExtendedState(is_delta=True)


@dataclass(frozen=True)
class OrbitCoord:
    origin: float
    u: float


@dataclass(frozen=True)
class ModelSpec:
    """Impulse-control model with J+1 objectives (index 0 is minimized).

    gradual_costs[j](x, t) and impulse_costs[j](x, t, a) must be nonnegative,
    and the impulse costs must sum to at least ``impulse_floor`` everywhere.
    ``theta_star_exact`` optionally gives the V^c hitting time in closed form;
    ``flow_speed`` optionally gives |d xt/du| for the snapping lattice.
    """

    flow: Callable[[float, float], float]
    jump: Callable[[float, float], float]
    gradual_costs: Sequence[Callable[[float, float], float]]
    impulse_costs: Sequence[Callable[[float, float, float], float]]
    action_bounds: tuple
    impulse_floor: float
    x0: float
    constraint_bounds: tuple = ()
    horizon_hint: Optional[float] = None
    theta_star_exact: Optional[Callable[[float], float]] = None
    flow_speed: Optional[Callable[[float], float]] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.gradual_costs) != len(self.impulse_costs):
            raise ModelError("gradual_costs and impulse_costs differ in length")
        if len(self.constraint_bounds) != len(self.gradual_costs) - 1:
            raise ModelError("need one constraint bound per objective j >= 1")
        lo, hi = self.action_bounds
        if not lo <= hi:
            raise ModelError("empty action interval")
        if self.impulse_floor <= 0:
            raise ModelError("impulse_floor must be positive")
        if any(d < 0 for d in self.constraint_bounds):
            raise ModelError("constraint bounds must be nonnegative")

    @property
    def n_objectives(self) -> int:
        return len(self.gradual_costs)

    def gradual(self, x: float, t: float) -> np.ndarray:
        return np.array([c(x, t) for c in self.gradual_costs], dtype=float)

    def impulse(self, x: float, t: float, a: float) -> np.ndarray:
        return np.array([c(x, t, a) for c in self.impulse_costs], dtype=float)

    def total_gradual(self, x: float, t: float) -> float:
        return float(sum(c(x, t) for c in self.gradual_costs))

    def t_max(self) -> float:
        """Truncation horizon for the forward cost integral."""
        if self.horizon_hint is not None:
            return float(self.horizon_hint)
        if self.theta_star_exact is not None:
            th = self.theta_star_exact(self.x0)
            if math.isfinite(th):
                # nothing accrues from x0 when th == 0; any window then works
                return 4.0 * th if th > 0 else 1.0
        raise ModelError("horizon_hint is required when theta* has no closed form")


def flow_extended(model: ModelSpec, x: ExtendedState, u: float) -> ExtendedState:
    if x.is_delta:
        raise ModelError("cannot flow the cemetery state")
    if u < 0:
        raise ModelError(f"negative duration {u}")
    if u == 0:
        return x
    return ExtendedState(model.flow(x.xt, u), x.t + u)


def apply_jump(model: ModelSpec, x: ExtendedState, a: float) -> ExtendedState:
    if x.is_delta:
        raise ModelError("cannot jump from the cemetery state")
    lo, hi = model.action_bounds
    if not lo <= a <= hi:
        raise ModelError(f"action {a} outside [{lo}, {hi}]")
    return ExtendedState(model.jump(x.xt, a), 0.0)


def _positive_sample(model, x: ExtendedState, tmax: float) -> bool:
    # geometric samples near u=0 catch states just inside the boundary
    us = np.concatenate([[0.0], np.geomspace(1e-12, tmax, 200), np.linspace(0, tmax, 2049)[1:]])
    for u in us:
        y = model.flow(x.xt, float(u))
        if model.total_gradual(y, x.t + float(u)) > 0:
            return True
    return False


def forward_cost_integral(model: ModelSpec, x: ExtendedState, tmax: Optional[float] = None) -> float:
    """Integral of the total gradual cost along the flow from x up to tmax."""
    tmax = model.t_max() if tmax is None else tmax

    def f(u):
        return model.total_gradual(model.flow(x.xt, u), x.t + u)

    val, _ = integrate.quad(f, 0.0, tmax, limit=200)
    return float(val)


def classify(model: ModelSpec, x: ExtendedState) -> str:
    """InV iff the truncated forward cost integral exceeds EPS_V.

    Costs are lower semicontinuous and nonnegative, so a positive value at
    some point of the orbit implies a positive integral; the sampled check
    guards quadrature against narrow positive regions near the boundary.
    """
    if x.is_delta:
        raise ModelError("classify is undefined on the cemetery state")
    tmax = model.t_max()
    if forward_cost_integral(model, x, tmax) > EPS_V:
        return IN_V
    return IN_V if _positive_sample(model, x, tmax) else IN_VC


def theta_star(model: ModelSpec, xt: float, tol: float = 1e-12) -> float:
    """First time the orbit from (xt, 0) enters V^c; +inf if not before T_max."""
    if model.theta_star_exact is not None:
        return float(model.theta_star_exact(xt))
    tmax = model.t_max()

    def in_v(u):
        return classify(model, ExtendedState(model.flow(xt, u), u)) == IN_V

    if not in_v(0.0):
        return 0.0
    if in_v(tmax):
        return math.inf
    lo, hi = 0.0, tmax
    while hi - lo > tol * max(1.0, tmax):
        mid = 0.5 * (lo + hi)
        if in_v(mid):
            lo = mid
        else:
            hi = mid
    return hi


def orbit_to_state(model: ModelSpec, c: OrbitCoord) -> ExtendedState:
    """The map F: orbit coordinate (origin, u) to the state (phi(origin, u), u)."""
    return ExtendedState(model.flow(c.origin, c.u), c.u)


def state_to_orbit(model: ModelSpec, x: ExtendedState) -> OrbitCoord:
    """Inverse map: run the flow backward by t to recover the orbit origin.

    Requires the flow to accept negative durations (true for closed forms).
    """
    return OrbitCoord(model.flow(x.xt, -x.t), x.t)


def rk4_flow(rhs: Callable[[float], float], step: float) -> Callable[[float, float], float]:
    """Flow of dx/du = rhs(x) by fixed-step RK4; the last step is shortened."""
    if step <= 0:
        raise ModelError("RK4 step must be positive")

    def flow(x: float, u: float) -> float:
        n = int(math.ceil(abs(u) / step - 1e-12))
        if n == 0:
            return x
        h = u / n
        for _ in range(n):
            k1 = rhs(x)
            k2 = rhs(x + 0.5 * h * k1)
            k3 = rhs(x + 0.5 * h * k2)
            k4 = rhs(x + h * k3)
            x = x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        return x

    return flow


def chi_finite_difference(w: Callable[[float, float], float], model: ModelSpec, x: ExtendedState,
                          h: float = 1e-6) -> float:
    """Derivative of w along the flow at x, by a forward difference."""
    y = flow_extended(model, x, h)
    return (w(y.xt, y.t) - w(x.xt, x.t)) / h


def check_semigroup(model: ModelSpec, rng: np.random.Generator, n: int = 100,
                    x_range=(0.5, 3.0), t_range=(0.0, 1.0)) -> float:
    """Max |flow(flow(x, s), u) - flow(x, s + u)| over n random triples."""
    worst = 0.0
    for _ in range(n):
        x = rng.uniform(*x_range)
        s, u = rng.uniform(*t_range, size=2)
        worst = max(worst, abs(model.flow(model.flow(x, s), u) - model.flow(x, s + u)))
    return worst


@dataclass
class TestFunction:
    """Grid function w with its derivative chi along the flow.

    ``values`` and ``chi`` are indexed by cell; the entries are Fractions in
    units of the grid step so the Barrow identity can be checked exactly.
    """

    __test__ = False  # not a pytest class

    values: list
    chi: list
    dt: Fraction

    def as_float(self):
        return (np.array([float(v) for v in self.values]), np.array([float(c) for c in self.chi]))


def make_ramp_test_function(grid, origins, T1: float, T2: float) -> TestFunction:
    """Positive decreasing ramp on the orbits in ``origins`` (origin indices).

    On an orbit with exit time theta*, w(u) = T2^theta* - T1^theta* for
    u <= T1, decreases with slope -1 on [T1, T2^theta*) and vanishes after.
    Values are taken at cell entry times k*dt and chi is -1 on the cells
    covering [T1, T2^theta*). Exit times are rounded to the cell lattice.
    """
    dt = Fraction(grid.dt)
    if T1 < 0 or not T1 < T2:
        raise ModelError("need 0 <= T1 < T2")
    k1, k2 = round(T1 / grid.dt), round(T2 / grid.dt)
    if abs(k1 * grid.dt - T1) > 1e-9 * grid.dt or abs(k2 * grid.dt - T2) > 1e-9 * grid.dt:
        raise ModelError("T1 and T2 must be multiples of dt")
    chosen = set(int(o) for o in origins)
    values = [Fraction(0)] * grid.n_cells
    chi = [Fraction(0)] * grid.n_cells
    for o in chosen:
        start, n = int(grid.offsets[o]), int(grid.n_cells_per_origin[o])
        hi = min(k2, n)  # T2 ^ theta*, in cells
        for k in range(n):
            if k < k1:
                values[start + k] = max(hi - k1, 0) * dt
            elif k < hi:
                values[start + k] = (hi - k) * dt
                chi[start + k] = Fraction(-1)
    return TestFunction(values, chi, dt)
