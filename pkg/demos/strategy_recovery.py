"""Recover a Markov strategy from an aggregated vector that is not optimal.

Mixes the optimal aggregated vector with the image of a random strategy,
induces a step-indexed strategy from the mixture, and shows that the
strategy's own aggregated image is dominated by the mixture and costs no more.
"""
import numpy as np

from impulse_lp.benchmarks import build_preset
from impulse_lp.discretize import build_grid, discretize
from impulse_lp.lp_aggregated import AggregatedVector, aggregate, aggregated_cost, build_aggregated_lp
from impulse_lp.lp_core import solve
from impulse_lp.strategy import (Kernel, MarkovStrategy, check_domination, induced_aggregate,
                                 strategy_occupation)


def random_strategy(dm, rng, n_steps=3):
    steps = []
    for _ in range(n_steps):
        table = {}
        for y in map(int, dm.grid.offsets):
            K = dm.remaining(y)
            p = rng.exponential(size=K + 1)
            pa = rng.exponential(size=(K, dm.n_actions))
            table[y] = Kernel(p / p.sum(), pa / pa.sum(axis=1, keepdims=True))
        steps.append(table)
    return MarkovStrategy(steps, dm.n_actions)


def main():
    model = build_preset("expgrowth-c5")
    dm = discretize(model, build_grid(model, 0.05, 31))
    sol = solve(build_aggregated_lp(dm)[0])
    opt = AggregatedVector.from_flat(sol.primal, dm)
    rng = np.random.default_rng(0)
    mu, _ = strategy_occupation(random_strategy(dm, rng), dm)
    for eps in (0.0, 0.25, 0.5, 1.0):
        eta = opt.scale(1 - eps) + aggregate(mu, dm).scale(eps)
        pi, _, eta_t = induced_aggregate(eta, dm)
        rep = check_domination(eta_t, eta)
        print(f"mix {eps:4.2f}: cost(eta) {aggregated_cost(eta, dm):.6f}  "
              f"cost(induced) {aggregated_cost(eta_t, dm):.6f}  steps {len(pi.steps):2d}  "
              f"dominated {rep.ok} (max excess {rep.max_violation:.1e})")


if __name__ == "__main__":
    main()
