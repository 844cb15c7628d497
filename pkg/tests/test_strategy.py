import numpy as np
import pytest

from impulse_lp.lp_aggregated import AggregatedVector, aggregate, aggregated_cost
from impulse_lp.lp_occupation import occupation_cost
from impulse_lp.strategy import (InfeasibleAggregateError, Kernel, MarkovStrategy,
                                 check_domination, induce_markov_strategy, induced_aggregate,
                                 never_jump, strategy_occupation, validate_kernel)

from helpers import instance, random_kernel, random_strategy, solved_aggregated


def test_optimal_eta_induces_immediate_jump():
    dm = instance("expgrowth-c5", 0.1, 76)
    _, sol, eta = solved_aggregated("expgrowth-c5", 0.1, 76)
    pi = induce_markov_strategy(eta, dm)
    k = pi.kernel(1, dm.x0_cell)
    assert list(pi.steps[0]) == [dm.x0_cell]
    assert k.p_dwell[0] == pytest.approx(1.0)
    assert pi.work[0].u_star[dm.x0_cell] == 0
    assert pi.kernel(len(pi.steps) + 1, dm.x0_cell) is None


def test_induced_cost_matches_lp_and_is_dominated():
    for dt in (0.1, 0.05):
        dm = instance("expgrowth-c5", dt, 76)
        _, sol, eta = solved_aggregated("expgrowth-c5", dt, 76)
        pi, mu, eta_t = induced_aggregate(eta, dm)
        assert occupation_cost(mu) == pytest.approx(sol.objective_value, abs=1e-6)
        rep = check_domination(eta_t, eta)
        assert rep.ok and rep.max_violation <= 1e-10


def test_padded_eta_is_strictly_dominated():
    dm = instance("expgrowth-c5", 0.1, 76)
    _, _, eta = solved_aggregated("expgrowth-c5", 0.1, 76)
    s, e = dm.orbit_cells(dm.x0_cell)
    pad = AggregatedVector(eta.eta_box.copy(), eta.eta_jump.copy())
    far = int(dm.grid.offsets[np.argmin(dm.grid.origins)])   # lowest orbit is never reached
    pad.eta_box[far] += 0.1
    _, _, eta_t = induced_aggregate(pad, dm)
    assert check_domination(eta_t, pad).ok
    assert eta_t.eta_box[far] < pad.eta_box[far]


def test_zero_eta():
    # zero is feasible only when x0 has no cells (V empty)
    dm = instance("zero-cost", 0.1, 3)
    z = AggregatedVector.zeros(dm)
    pi, mu, eta_t = induced_aggregate(z, dm)
    assert pi.steps == [] and mu.values.size == 0
    rep = check_domination(eta_t, z)
    assert rep.ok and rep.max_violation == 0.0 and rep.worst_entry == "none"


def test_infeasible_input_is_rejected():
    dm = instance("expgrowth-c5", 0.1, 7)
    eta = aggregate(strategy_occupation(never_jump(dm), dm)[0], dm)
    eta.eta_box[dm.x0_cell + 3] = 0.0      # removes dwell mass the strategy must spend
    with pytest.raises(InfeasibleAggregateError):
        induce_markov_strategy(eta, dm)


def test_round_trip_on_random_feasible_points():
    dm = instance("expgrowth-c5", 0.1, 7)
    rng = np.random.default_rng(21)
    for _ in range(10):
        mu, _ = strategy_occupation(random_strategy(dm, rng), dm)
        eta = aggregate(mu, dm)
        pi, mu_t, eta_t = induced_aggregate(eta, dm)
        assert check_domination(eta_t, eta).ok
        assert aggregated_cost(eta_t, dm) <= aggregated_cost(eta, dm) + 1e-8
        for table in pi.steps:
            for c, k in table.items():
                validate_kernel(k, dm.remaining(c), tol=1e-9)


def test_partials_are_monotone():
    dm = instance("expgrowth-c5", 0.1, 7)
    pi = random_strategy(dm, np.random.default_rng(4), n_steps=4)
    _, partials = strategy_occupation(pi, dm)
    for a, b in zip(partials, partials[1:]):
        assert (b.eta_box >= a.eta_box - 1e-15).all()
        assert (b.eta_jump >= a.eta_jump - 1e-15).all()


def test_fifty_fifty_first_step():
    dm = instance("expgrowth-c5", 0.1, 76)
    y = dm.x0_cell
    p = np.zeros(11)
    p[0], p[-1] = 0.5, 0.5
    pa = np.zeros((10, 76))
    pa[:, 75] = 1.0
    mu, _ = strategy_occupation(MarkovStrategy([{y: Kernel(p, pa)}], 76), dm)
    idx = mu.index
    assert mu.values[idx.col(y, 0, 75)] == 0.5
    assert mu.values[idx.col(y, None)] == 0.5


def test_never_jump_occupation():
    dm = instance("expgrowth-c5", 0.1, 7)
    mu, _ = strategy_occupation(never_jump(dm), dm)
    assert mu.values[mu.index.col(dm.x0_cell, None)] == 1.0 and mu.values.sum() == 1.0


def test_validate_kernel():
    rng = np.random.default_rng(0)
    k = random_kernel(rng, 4, 3)
    validate_kernel(k, 4)
    with pytest.raises(ValueError):
        validate_kernel(k, 5)
    bad = Kernel(k.p_dwell * 2, k.p_action)
    with pytest.raises(ValueError):
        validate_kernel(bad, 4)


def test_json_round_trip():
    dm = instance("expgrowth-c5", 0.1, 7)
    pi = random_strategy(dm, np.random.default_rng(9))
    back = MarkovStrategy.from_json(pi.to_json())
    assert back.to_json() == pi.to_json()
    assert back.max_atoms() == pi.max_atoms()
