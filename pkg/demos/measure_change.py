"""Objective of the optimal aggregated vector in three equivalent forms.

The jump component can be smeared over the segment [x, x+a] it crosses,
either as mass per unit length or scaled by 1/a per action. All three
objectives coincide, as do the constraint values for ramp test functions.
"""
import math

from impulse_lp.benchmarks import (LatticeRamp, build_preset, constraint_forms, smear_edges,
                                   verify_objective_equality)
from impulse_lp.discretize import build_grid, discretize
from impulse_lp.lp_aggregated import AggregatedVector, build_aggregated_lp
from impulse_lp.lp_core import solve


def main():
    model = build_preset("expgrowth-c5")
    dm = discretize(model, build_grid(model, 0.05, 76))
    eta = AggregatedVector.from_flat(solve(build_aggregated_lp(dm)[0]).primal, dm)
    rep = verify_objective_equality(eta, dm)
    print("objective: aggregated {aggregated:.9f}  smeared {upsilon1:.9f}  "
          "per-action {upsilon2:.9f}  gap {max_gap:.1e}".format(**rep))
    edges = smear_edges(dm)
    inside = edges[edges <= math.e]
    for i, j in ((0, len(inside) // 2), (len(inside) // 3, len(inside) - 1)):
        w = LatticeRamp(float(inside[i]), float(inside[j]))
        f = constraint_forms(eta, dm, w)
        print(f"ramp [{w.X1:.3f}, {w.X2:.3f}]: " + "  ".join(f"{v:.9f}" for v in f))


if __name__ == "__main__":
    main()
