"""Budget on total impulse size: LP value, Lagrangian bracket, randomized strategy.

With the impulse budget d = 1 the cheap single jump of size ~e-1 is not
allowed, and the optimum mixes two deterministic behaviours. The aggregated
LP finds it directly; the Lagrangian sweep brackets it from both sides; the
induced strategy is randomized and its simulated costs match the LP.
"""
import numpy as np

from impulse_lp.benchmarks import build_preset
from impulse_lp.discretize import build_grid, discretize
from impulse_lp.lp_aggregated import AggregatedVector, build_aggregated_lp
from impulse_lp.lp_core import solve
from impulse_lp.oracle import lagrangian_sweep
from impulse_lp.simulate import estimate
from impulse_lp.strategy import induced_aggregate


def main(dt=0.02, n_runs=10_000):
    model = build_preset("expgrowth-c5-constrained")
    dm = discretize(model, build_grid(model, dt, 76))
    lp, _ = build_aggregated_lp(dm)
    sol = solve(lp)
    eta = AggregatedVector.from_flat(sol.primal, dm)
    print(f"aggregated LP value: {sol.objective_value:.6f}")

    sweep = lagrangian_sweep(dm, np.arange(0.0, 8.0001, 0.25), refine=40)
    print(f"Lagrangian lower bound {sweep.best_lower:.6f} at lambda = {sweep.best_lambda:.4f}")
    print(f"feasible mixture upper bound {sweep.upper_envelope():.6f}")

    pi, mu, _ = induced_aggregate(eta, dm)
    print(f"induced strategy: {len(pi.steps)} steps, at most {pi.max_atoms()} atoms per kernel")
    for step, table in enumerate(pi.steps, 1):
        for cell, k in table.items():
            if k.atoms() > 1:
                joint = k.p_dwell[:-1, None] * k.p_action
                atoms = [f"dwell {d} jump {dm.grid.actions[a]:.2f} w.p. {joint[d, a]:.4f}"
                         for d, a in zip(*np.nonzero(joint > 1e-12))]
                if k.p_dwell[-1] > 1e-12:
                    atoms.append(f"never jump w.p. {k.p_dwell[-1]:.4f}")
                print(f"  step {step}, cell {cell}: " + "; ".join(atoms))
    est = estimate(dm, pi, n_runs, seed=1)
    for j, name in enumerate(("cost", "impulse budget")):
        print(f"simulated {name}: {est.mean[j]:.4f} +- {est.stderr[j]:.4f}")


if __name__ == "__main__":
    main()
