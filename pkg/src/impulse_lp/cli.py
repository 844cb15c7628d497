"""Command-line entry point: solve, compare, simulate and report.

Exit codes: 0 success, 1 configuration error, 2 infeasible program,
3 numerical failure, 4 a comparison check failed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from . import benchmarks
from .discretize import DiscreteModel, build_grid, discretize
from .lp_aggregated import (AggregatedVector, aggregated_cost, balance_residuals,
                            build_aggregated_lp, verify_aggregation_feasibility)
from .lp_core import LPNumericalError, LPStatus, residuals, solve
from .lp_occupation import (OccupationVector, build_occupation_lp, dense_index_size,
                            extract_stationary_strategy, occupation_cost)
from .model import ModelError
from .oracle import dp_value, lagrangian_sweep
from .simulate import estimate, simulate_many, summarize, trajectories_jsonl
from .strategy import (InfeasibleAggregateError, MarkovStrategy, check_domination,
                       induced_aggregate, validate_kernel)

log = logging.getLogger("impulse_lp")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC, EXIT_CHECK = 0, 1, 2, 3, 4
MODEL_KEYS = {"preset", "x0", "K", "c", "a_min", "a_max", "constraint", "bound"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: object = "expgrowth-c5"       # preset name or mapping with "preset" and overrides
    dt: float = 0.02
    n_actions: int = 76
    constraints: dict = field(default_factory=dict)   # objective index -> bound
    lp: str = "both"
    solver: str = "auto"
    seed: int = 0
    n_runs: int = 10_000
    max_steps: int = 64
    output_dir: str = "out"
    emit_balance: bool = False
    dump_variables: bool = False

    def validate(self):
        if not (isinstance(self.dt, (int, float)) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (isinstance(self.n_actions, int) and self.n_actions >= 1):
            raise ConfigError(f"n_actions must be a positive integer, got {self.n_actions!r}")
        if self.lp not in ("occupation", "aggregated", "both"):
            raise ConfigError(f"lp must be occupation, aggregated or both, got {self.lp!r}")
        if self.solver not in ("auto", "simplex", "highs"):
            raise ConfigError(f"solver must be auto, simplex or highs, got {self.solver!r}")
        for j, d in self.constraints.items():
            if not (isinstance(j, int) and j >= 1):
                raise ConfigError(f"constraint index must be an integer >= 1, got {j!r}")
            if not (isinstance(d, (int, float)) and d >= 0):
                raise ConfigError(f"constraint bound must be >= 0, got {d!r}")
        if isinstance(self.model, dict):
            extra = set(self.model) - MODEL_KEYS
            if extra:
                raise ConfigError(f"unknown model keys: {sorted(extra)}")
            if "preset" not in self.model:
                raise ConfigError("inline model needs a 'preset' key")
        elif not isinstance(self.model, str):
            raise ConfigError("model must be a preset name or a mapping")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["constraints"] = {int(k): float(v) for k, v in sorted(self.constraints.items())}
        return d

    def hash(self) -> str:
        """Digest of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("output_dir")
        text = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _key_lines(text: str) -> dict:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def parse_config(text: str) -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{where}{getattr(e, 'problem', e)}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("line 1: config must be a mapping")
    lines = _key_lines(text)
    known = {f.name for f in fields(RunConfig)}
    for k in raw:
        if k not in known:
            raise ConfigError(f"line {lines.get(k, '?')}: unknown key {k!r}")
    if "constraints" in raw:
        cons = raw["constraints"] or {}
        if isinstance(cons, list):
            cons = {int(j): b for j, b in cons}
        raw["constraints"] = {int(k): float(v) for k, v in cons.items()}
    for k in ("dt",):
        if k in raw and isinstance(raw[k], int):
            raw[k] = float(raw[k])
    cfg = RunConfig(**raw)
    try:
        cfg.validate()
    except ConfigError as e:
        key = str(e).split()[0]
        raise ConfigError(f"line {lines.get(key, '?')}: {e}") from None
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


def build_model(cfg: RunConfig):
    spec = cfg.model if isinstance(cfg.model, dict) else {"preset": cfg.model}
    over = {k: v for k, v in spec.items() if k != "preset"}
    try:
        params = benchmarks.preset_params(spec["preset"], **over)
    except KeyError as e:
        raise ConfigError(str(e).strip('"')) from None
    if cfg.constraints:
        if set(cfg.constraints) != {1}:
            raise ConfigError("the expgrowth family supports one constraint (index 1)")
        kind = params.constraint or "impulse"
        params = benchmarks.replace(params, constraint=kind, bound=cfg.constraints[1])
    try:
        return benchmarks.build_expgrowth(params), params
    except ModelError as e:
        raise ConfigError(str(e)) from None


def build_instance(cfg: RunConfig) -> DiscreteModel:
    model, _ = build_model(cfg)
    return discretize(model, build_grid(model, cfg.dt, cfg.n_actions))


# ---------------------------------------------------------------------------
# pipeline pieces shared by the commands

@dataclass
class Solved:
    dm: DiscreteModel
    occupation: object = None     # (lp, solution, OccupationVector)
    aggregated: object = None     # (lp, solution, AggregatedVector)
    strategy: MarkovStrategy = None
    timings: dict = field(default_factory=dict)


def solve_instance(cfg: RunConfig, dm: DiscreteModel = None) -> Solved:
    dm = dm if dm is not None else build_instance(cfg)
    out = Solved(dm)
    if cfg.lp in ("occupation", "both"):
        t = time.perf_counter()
        lp, idx = build_occupation_lp(dm)
        sol = solve(lp, cfg.solver)
        mu = OccupationVector(sol.primal, idx) if sol.optimal else None
        out.occupation = (lp, sol, mu)
        out.timings["occupation"] = time.perf_counter() - t
    if cfg.lp in ("aggregated", "both"):
        t = time.perf_counter()
        lp, _ = build_aggregated_lp(dm)
        sol = solve(lp, cfg.solver)
        eta = AggregatedVector.from_flat(sol.primal, dm) if sol.optimal else None
        out.aggregated = (lp, sol, eta)
        out.timings["aggregated"] = time.perf_counter() - t
    if out.aggregated and out.aggregated[2] is not None:
        out.strategy = induced_aggregate(out.aggregated[2], dm, cfg.max_steps)[0]
    elif out.occupation and out.occupation[2] is not None:
        out.strategy = extract_stationary_strategy(out.occupation[2], dm)
    return out


def _statuses(s: Solved):
    return [r[1].status for r in (s.occupation, s.aggregated) if r is not None]


def _write(path, text):
    with open(path, "w", newline="") as f:
        f.write(text)


def write_solution(cfg: RunConfig, s: Solved, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    h = cfg.hash()
    doc = {"config_hash": h, "config": cfg.to_dict(), "n_cells": s.dm.n_cells,
           "n_actions": s.dm.n_actions, "lps": {}}
    rows = []
    for name, r in (("occupation", s.occupation), ("aggregated", s.aggregated)):
        if r is None:
            continue
        lp, sol, vec = r
        entry = {"status": sol.status.value, "n_vars": lp.n_vars, "n_rows": lp.n_eq + lp.n_ub,
                 "method": sol.method, "seconds": s.timings.get(name)}
        if sol.optimal:
            if name == "occupation":
                vals = [occupation_cost(vec, j) for j in range(s.dm.n_objectives)]
            else:
                vals = [aggregated_cost(vec, s.dm, j) for j in range(s.dm.n_objectives)]
            entry["values"] = vals
            entry["residuals"] = residuals(lp, sol)
            if cfg.dump_variables:
                entry["primal"] = sol.primal.tolist()
            for j, v in enumerate(vals):
                rows.append([name, sol.status.value, j, repr(v), lp.n_vars, h])
        else:
            rows.append([name, sol.status.value, 0, "nan", lp.n_vars, h])
        doc["lps"][name] = entry
    if s.occupation is not None:
        doc["dense_occupation_index_size"] = dense_index_size(s.dm)
    _write(os.path.join(out_dir, "solution.json"), json.dumps(doc, indent=1, sort_keys=True))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lp", "status", "objective_index", "value", "n_vars", "config_hash"])
    w.writerows(rows)
    _write(os.path.join(out_dir, "summary.csv"), buf.getvalue())
    if s.strategy is not None:
        sdoc = json.loads(s.strategy.to_json())
        sdoc["config_hash"] = h
        _write(os.path.join(out_dir, "strategy.json"), json.dumps(sdoc, sort_keys=True))
    if cfg.emit_balance and s.aggregated is not None and s.aggregated[2] is not None:
        r = balance_residuals(s.aggregated[2], s.dm)
        lines = ["config_hash,cell,origin,k,eta_box,jump_out,residual"]
        g = s.dm.grid
        for c in range(s.dm.n_cells):
            eta = s.aggregated[2]
            lines.append(f"{h},{c},{g.cell_origin[c]},{g.cell_k[c]},{float(eta.eta_box[c])!r},"
                         f"{float(eta.eta_jump[c].sum())!r},{float(r[c])!r}")
        _write(os.path.join(out_dir, "balance.csv"), "\n".join(lines) + "\n")


def cmd_solve(cfg: RunConfig) -> int:
    s = solve_instance(cfg)
    write_solution(cfg, s, cfg.output_dir)
    for name, r in (("occupation", s.occupation), ("aggregated", s.aggregated)):
        if r is not None:
            lp, sol, _ = r
            val = f"{sol.objective_value:.10g}" if sol.optimal else "-"
            print(f"{name:11s} {sol.status.value:10s} value={val} vars={lp.n_vars}")
    st = _statuses(s)
    if any(x is LPStatus.INFEASIBLE for x in st):
        return EXIT_INFEASIBLE
    if any(x is LPStatus.UNBOUNDED for x in st):
        return EXIT_NUMERIC
    return EXIT_OK


def run_checks(cfg: RunConfig, s: Solved) -> list:
    """Pass/fail rows for the full pipeline on one instance."""
    dm = s.dm
    checks = []

    def add(name, ok, value, threshold):
        checks.append({"check": name, "pass": bool(ok), "value": float(value),
                       "threshold": float(threshold)})

    occ = s.occupation[1] if s.occupation else None
    agg = s.aggregated[1] if s.aggregated else None
    if occ is not None and agg is not None and occ.optimal and agg.optimal:
        d = abs(occ.objective_value - agg.objective_value)
        add("lp_values_agree", d <= 1e-6, d, 1e-6)
        add("aggregated_fewer_vars", s.aggregated[0].n_vars < s.occupation[0].n_vars or dm.n_cells == 0,
            s.aggregated[0].n_vars, s.occupation[0].n_vars)
    ref = agg if agg is not None else occ
    if ref is None or not ref.optimal:
        add("lp_optimal", False, 0, 0)
        return checks
    value = ref.objective_value
    if dm.n_objectives == 1:
        v = dp_value(dm).v[dm.x0_cell] if dm.x0_cell >= 0 else 0.0
        add("dp_oracle_agrees", abs(v - value) <= 1e-6, abs(v - value), 1e-6)
    else:
        sw = lagrangian_sweep(dm, np.arange(0.0, 8.0001, 0.25), refine=40)
        lo, hi = sw.best_lower, sw.upper_envelope()
        add("lagrangian_lower_bound", lo <= value + 1e-9, lo - value, 0.0)
        add("feasible_envelope_upper_bound", value <= hi + 1e-9, value - hi, 0.0)
        add("bracket_width", hi - lo <= 0.05, hi - lo, 0.05)
    if s.aggregated is not None and s.aggregated[2] is not None:
        eta = s.aggregated[2]
        rep = verify_aggregation_feasibility(eta, dm)
        add("balance_residual", rep["residual"] <= 1e-8, rep["residual"], 1e-8)
        try:
            pi, mu, eta_t = induced_aggregate(eta, dm, cfg.max_steps)
        except InfeasibleAggregateError as e:
            log.error("%s", e)
            add("induced_strategy", False, 1, 0)
            return checks
        dom = check_domination(eta_t, eta)
        add("induced_dominated", dom.ok, dom.max_violation, 1e-8)
        c = occupation_cost(mu, 0)
        add("induced_cost_le_value", c <= value + 1e-8, c - value, 1e-8)
        for j in range(1, dm.n_objectives):
            cj = occupation_cost(mu, j)
            add(f"induced_constraint_{j}", cj <= dm.constraint_bounds[j - 1] + 1e-8,
                cj - dm.constraint_bounds[j - 1], 1e-8)
        n = cfg.n_runs if not pi.is_deterministic() else 1
        est = estimate(dm, pi, n, cfg.seed)
        for j in range(dm.n_objectives):
            exact = occupation_cost(mu, j)
            tol = 1e-6 if n == 1 else 3 * est.stderr[j] + 1e-12
            add(f"simulated_cost_{j}", abs(est.mean[j] - exact) <= tol, abs(est.mean[j] - exact), tol)
        eq = benchmarks.verify_objective_equality(eta, dm)
        add("measure_change_objectives", eq["ok"], eq["max_gap"], 1e-9)
    return checks


def _table(checks) -> str:
    w = max([len(c["check"]) for c in checks] + [5])
    lines = [f"{'check':{w}s}  result  value         threshold"]
    for c in checks:
        lines.append(f"{c['check']:{w}s}  {'PASS' if c['pass'] else 'FAIL':6s}  "
                     f"{c['value']:<12.4g}  {c['threshold']:.4g}")
    return "\n".join(lines)


def cmd_compare(cfg: RunConfig) -> int:
    cfg.lp = "both"
    s = solve_instance(cfg)
    write_solution(cfg, s, cfg.output_dir)
    st = _statuses(s)
    if any(x is LPStatus.INFEASIBLE for x in st):
        print("infeasible program")
        return EXIT_INFEASIBLE
    checks = run_checks(cfg, s)
    doc = {"config_hash": cfg.hash(), "checks": checks, "all_pass": all(c["pass"] for c in checks)}
    _write(os.path.join(cfg.output_dir, "checks.json"), json.dumps(doc, indent=1, sort_keys=True))
    print(_table(checks))
    return EXIT_OK if doc["all_pass"] else EXIT_CHECK


def check_strategy_fits(pi: MarkovStrategy, dm: DiscreteModel):
    """Reject strategy files written for a different grid."""
    if pi.n_actions != dm.n_actions:
        raise ConfigError("strategy file does not match the configured action grid")
    t0 = set(int(c) for c in dm.grid.offsets)
    for table in pi.steps:
        for c, k in table.items():
            if c not in t0:
                raise ConfigError(f"strategy refers to cell {c}, which is not a t=0 cell of this grid")
            try:
                validate_kernel(k, dm.remaining(c), tol=1e-9)
            except ValueError as e:
                raise ConfigError(f"strategy kernel at cell {c}: {e}") from None


def cmd_simulate(cfg: RunConfig, strategy_file: str = None) -> int:
    dm = build_instance(cfg)
    if strategy_file:
        with open(strategy_file) as f:
            pi = MarkovStrategy.from_json(f.read())
    else:
        s = solve_instance(cfg, dm)
        if s.strategy is None:
            print("no strategy: the program is not optimal")
            return EXIT_INFEASIBLE
        pi = s.strategy
    check_strategy_fits(pi, dm)
    trajs = simulate_many(dm, pi, cfg.n_runs, cfg.seed)
    est = summarize(trajs, dm.n_objectives)
    os.makedirs(cfg.output_dir, exist_ok=True)
    h = cfg.hash()
    _write(os.path.join(cfg.output_dir, "trajectories.jsonl"),
           json.dumps({"config_hash": h}) + "\n" + trajectories_jsonl(trajs))
    text = est.to_csv().splitlines()
    text = [text[0] + ",config_hash"] + [t + "," + h for t in text[1:]]
    _write(os.path.join(cfg.output_dir, "simulation.csv"), "\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK


def cmd_report(out_dir: str) -> int:
    shown = False
    for name in ("summary.csv", "simulation.csv"):
        p = os.path.join(out_dir, name)
        if os.path.exists(p):
            with open(p) as f:
                print(f"== {name}")
                print(f.read().rstrip())
            shown = True
    p = os.path.join(out_dir, "checks.json")
    if os.path.exists(p):
        with open(p) as f:
            doc = json.load(f)
        print("== checks.json")
        print(_table(doc["checks"]))
        shown = True
    if not shown:
        print(f"nothing to report in {out_dir}")
        return EXIT_CONFIG
    return EXIT_OK


def _parse_constraint(s: str):
    try:
        j, b = s.split("=")
        return int(j), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected j=bound, got {s!r}") from None


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impulse-lp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("solve", "compare", "simulate", "report"):
        q = sub.add_parser(name)
        q.add_argument("--out", help="output directory")
        if name == "report":
            continue
        q.add_argument("--config", help="YAML run configuration")
        q.add_argument("--model")
        q.add_argument("--dt", type=float)
        q.add_argument("--n-actions", type=int)
        q.add_argument("--lp", choices=["occupation", "aggregated", "both"])
        q.add_argument("--solver", choices=["auto", "simplex", "highs"])
        q.add_argument("--constraint", type=_parse_constraint, action="append")
        q.add_argument("--seed", type=int)
        q.add_argument("--runs", type=int)
        q.add_argument("--emit-balance", action="store_true")
        q.add_argument("--dump-variables", action="store_true")
        if name == "simulate":
            q.add_argument("--strategy", help="strategy JSON written by solve")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> RunConfig:
    if getattr(args, "config", None):
        with open(args.config) as f:
            cfg = parse_config(f.read())
    else:
        cfg = RunConfig()
    for attr, key in (("model", "model"), ("dt", "dt"), ("n_actions", "n_actions"), ("lp", "lp"),
                      ("solver", "solver"), ("seed", "seed"), ("runs", "n_runs"),
                      ("out", "output_dir")):
        v = getattr(args, attr, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "constraint", None):
        cfg.constraints = dict(args.constraint)
    if getattr(args, "emit_balance", False):
        cfg.emit_balance = True
    if getattr(args, "dump_variables", False):
        cfg.dump_variables = True
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.out or "out")
        cfg = config_from_args(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_simulate(cfg, args.strategy)
    except (ConfigError, FileNotFoundError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (LPNumericalError, InfeasibleAggregateError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
