import math

import numpy as np
import pytest

from impulse_lp.benchmarks import build_preset
from impulse_lp.discretize import build_grid
from impulse_lp.lp_aggregated import (AggregatedVector, aggregate, aggregated_cost,
                                      balance_residuals, build_aggregated_lp,
                                      characteristic_value, characteristic_value_exact,
                                      density_bound_violation, verify_aggregation_feasibility)
from impulse_lp.lp_core import solve
from impulse_lp.lp_occupation import OccupationVector, occupation_cost, occupation_index
from impulse_lp.model import make_ramp_test_function
from impulse_lp.strategy import never_jump, strategy_occupation

from helpers import (instance, point_strategy, random_strategy, solved_aggregated,
                     solved_occupation)


def never_jump_mu(dm):
    mu, _ = strategy_occupation(never_jump(dm), dm)
    return mu


def test_zero_mu_aggregates_to_zero():
    dm = instance("expgrowth-c5", 0.1, 76)
    idx = occupation_index(dm)
    eta = aggregate(OccupationVector(np.zeros(idx.n_cols), idx), dm)
    assert not eta.eta_box.any() and not eta.eta_jump.any()


def test_point_jump_aggregate():
    dm = instance("expgrowth-c5", 0.1, 76)
    mu, _ = strategy_occupation(point_strategy(dm, dm.x0_cell, 0, 75), dm)
    eta = aggregate(mu, dm)
    assert not eta.eta_box.any()
    assert eta.eta_jump[dm.x0_cell, 75] == 1.0 and eta.eta_jump.sum() == 1.0
    assert verify_aggregation_feasibility(eta, dm)["residual"] <= 1e-12


def test_never_jump_aggregate():
    dm = instance("expgrowth-c5", 0.1, 76)
    eta = aggregate(never_jump_mu(dm), dm)
    s, e = dm.orbit_cells(dm.x0_cell)
    assert e - s == 10
    np.testing.assert_allclose(eta.eta_box[s:e], 0.1)
    assert eta.eta_box.sum() == pytest.approx(1.0)
    assert not eta.eta_jump.any()
    assert verify_aggregation_feasibility(eta, dm)["residual"] <= 1e-12


def test_perturbation_is_detected():
    dm = instance("expgrowth-c5", 0.1, 76)
    eta = aggregate(never_jump_mu(dm), dm)
    eta.eta_box[dm.x0_cell + 4] += 1e-3
    rep = verify_aggregation_feasibility(eta, dm)
    assert rep["residual"] == pytest.approx(1e-3 / 0.1, rel=1e-9)
    assert rep["worst_cell"] in (dm.x0_cell + 4, dm.x0_cell + 5)


def test_variable_counts_tiny():
    dm = instance("expgrowth-tiny", 0.1, 3)
    lp, _ = build_aggregated_lp(dm)
    assert dm.n_cells == 10 and lp.n_vars == 40 and lp.n_eq == 10


@pytest.mark.parametrize("dt", [0.1, 0.05])
def test_value_matches_occupation_lp(dt):
    _, so, _ = solved_occupation("expgrowth-c5", dt, 76)
    _, sa, eta = solved_aggregated("expgrowth-c5", dt, 76)
    assert abs(so.objective_value - sa.objective_value) <= 1e-6
    dm = instance("expgrowth-c5", dt, 76)
    assert aggregated_cost(eta, dm) == pytest.approx(sa.objective_value, abs=1e-9)


def test_empty_model_gives_empty_lp():
    dm = instance("zero-cost", 0.1, 3)
    lp, _ = build_aggregated_lp(dm)
    sol = solve(lp)
    assert lp.n_vars == 0 and sol.objective_value == 0.0


def test_aggregation_preserves_cost_and_feasibility():
    dm = instance("expgrowth-c5", 0.1, 7)
    rng = np.random.default_rng(11)
    for _ in range(10):
        mu, _ = strategy_occupation(random_strategy(dm, rng), dm)
        eta = aggregate(mu, dm)
        assert np.abs(balance_residuals(eta, dm)).max() <= 1e-9
        for j in range(dm.n_objectives):
            assert aggregated_cost(eta, dm, j) == pytest.approx(occupation_cost(mu, j), abs=1e-9)
        assert density_bound_violation(eta, dm) <= 1e-12


def test_ramp_characteristic_values_vanish():
    dm = instance("expgrowth-c5", 0.1, 7)
    rng = np.random.default_rng(12)
    mu, _ = strategy_occupation(random_strategy(dm, rng), dm)
    eta = aggregate(mu, dm)
    g = dm.grid
    for _ in range(20):
        origins = rng.choice(g.origins.size, size=2, replace=False)
        k1, k2 = sorted(rng.choice(12, size=2, replace=False))
        w = make_ramp_test_function(g, origins, k1 * g.dt, k2 * g.dt)
        assert abs(characteristic_value(eta, dm, w)) <= 1e-9


def test_exact_characteristic_value_on_rational_point():
    from fractions import Fraction
    dm = instance("expgrowth-tiny", 0.1, 3)
    dt = Fraction(dm.grid.dt)
    s0, e0 = dm.orbit_cells(dm.x0_cell)
    box = [dt if s0 <= c < e0 else Fraction(0) for c in range(dm.n_cells)]   # never jump
    jump = [[Fraction(0)] * 3 for _ in range(dm.n_cells)]
    w = make_ramp_test_function(dm.grid, [dm.grid.x0_origin], 0.2, 0.7)
    assert characteristic_value_exact(box, jump, dm, w) == 0
    box[s0 + 3] += dt
    assert characteristic_value_exact(box, jump, dm, w) == -dt


def test_monotone_difference():
    # a feasible point with a costlier jump is worse by exactly the action gap
    dm = instance("expgrowth-tiny", 0.1, 3)
    a = aggregate(strategy_occupation(point_strategy(dm, dm.x0_cell, 0, 0), dm)[0], dm)
    b = aggregate(strategy_occupation(point_strategy(dm, dm.x0_cell, 0, 2), dm)[0], dm)
    gap = aggregated_cost(b, dm) - aggregated_cost(a, dm)
    assert gap == pytest.approx(dm.grid.actions[2] - dm.grid.actions[0])


def test_flat_round_trip():
    dm = instance("expgrowth-c5", 0.1, 7)
    rng = np.random.default_rng(2)
    z = rng.uniform(size=dm.n_cells * 8)
    eta = AggregatedVector.from_flat(z, dm)
    assert np.array_equal(eta.flat(), z)
    assert np.allclose((eta + eta).flat(), eta.scale(2).flat())


def test_refined_grid_keeps_equivalence():
    m = build_preset("expgrowth-c1")
    from impulse_lp.discretize import discretize
    from impulse_lp.lp_occupation import build_occupation_lp
    dm = discretize(m, build_grid(m, 0.05, 11))
    v1 = solve(build_occupation_lp(dm)[0]).objective_value
    v2 = solve(build_aggregated_lp(dm)[0]).objective_value
    assert abs(v1 - v2) <= 1e-6 and abs(v1 - 1.0) <= 0.02
    assert math.isfinite(v1)
