"""Command-line front end: tree building, single runs, sweeps, self-checks.

Configuration is a YAML file (see README for the schema); any value can be
overridden on the command line with dotted ``key=value`` pairs, e.g.
``experiment.frames=100`` or ``occupancy.nu1=0.01``.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np
import yaml

from . import control, inference
from .aggregation import HierarchicalExchange
from .dynamics import OccupancyModel, sample_steady_state, step_occupancy
from .harness import (ConfigError, ExperimentConfig, Simulation,
                      prepare_trial, run_experiment, _seed_int)
from .hierarchy import AggregationTree, build_ibt, build_random_tree
from .sensing import SensorModel
from .topology import PathlossParams, build_topology, compute_phi


def _apply_override(raw: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    path, value = assignment.split("=", 1)
    keys = path.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {path!r} crosses a non-mapping entry")
    node[keys[-1]] = yaml.safe_load(value)


def load_config(path: str, overrides=()) -> ExperimentConfig:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    for assignment in overrides:
        _apply_override(raw, assignment)
    return ExperimentConfig.from_dict(raw)


def cmd_build_tree(args) -> int:
    config = load_config(args.config, args.override)
    config.validate()
    pick = next(((i, s) for i, s in enumerate(config.schemes)
                 if s.kind in ("ibt", "rt")), None)
    if pick is None:
        print("error: no tree scheme (ibt/rt) in the config", file=sys.stderr)
        return 2
    scheme_idx, spec = pick
    topo_seed = _seed_int(config.master_seed, args.trial, 1)
    topology = build_topology(config.topology_kind, config.n_cells, config.area,
                              config.n_blockages, topo_seed, config.cell_radius)
    phi = compute_phi(topology, config.pathloss)
    model = config.occupancy_model()
    if spec.kind == "ibt":
        tree = build_ibt(topology, phi, float(model.mu), spec.gamma_delay,
                         spec.c_max)
    else:
        # same stream the sweep harness would use for this scheme slot
        rng = np.random.default_rng(np.random.SeedSequence(
            [config.master_seed, args.trial, 5, scheme_idx]))
        tree = build_random_tree(topology, spec.gamma_delay, spec.c_max, rng)
    tree.save(args.output)
    print(f"tree written to {args.output}")
    print(f"depth: {tree.depth}")
    print(f"cost per cell: {tree.cost_per_cell:.6g} m "
          f"({tree.cost_per_cell / config.resolved_hop_distance():.6g} hops)")
    for lvl, nodes in enumerate(tree.levels):
        sizes = sorted(len(c.members) for c in nodes)
        print(f"level {lvl}: {len(nodes)} clusters, sizes {sizes}")
    return 0


def cmd_simulate(args) -> int:
    config = load_config(args.config, args.override)
    config.validate()
    names = [s.name for s in config.schemes]
    name = args.scheme or names[0]
    if name not in names:
        print(f"error: scheme {name!r} not in config (have {names})",
              file=sys.stderr)
        return 2
    scheme_idx = names.index(name)
    spec = config.schemes[scheme_idx]
    grid = config.ptx_grid if spec.kind == "uncoordinated" else config.lambda_grid
    gval = args.grid_value if args.grid_value is not None else grid[0]
    ctx = prepare_trial(config, args.trial)
    sim = Simulation(ctx, ctx.runtimes[scheme_idx], gval, 0)
    trace_fh = open(args.trace, "w", newline="") if args.trace else None
    trace = csv.writer(trace_fh) if trace_fh else None
    if trace:
        trace.writerow(["frame", "level", "head", "aggregate"])
    frames = []
    for t in range(ctx.t_total):
        frames.append(sim.run_frame())
        if trace and sim.exchange is not None:
            for lvl, head, value in sim.exchange.trace_rows(t):
                trace.writerow([t, lvl, head, repr(value)])
    if trace_fh:
        trace_fh.close()

    with open(args.output, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "su_throughput", "inr_db", "utility",
                         "mean_traffic"])
        for f in frames:
            writer.writerow([f.t, repr(f.su_throughput), repr(f.inr_db),
                             repr(f.utility), repr(float(f.traffic.mean()))])
    measured = frames[ctx.warmup:]
    thr = float(np.mean([f.su_throughput for f in measured]))
    print(f"per-frame metrics written to {args.output}")
    if args.trace:
        print(f"aggregate trace written to {args.trace}")
    print(f"scheme={name} grid={gval} mean throughput={thr:.6g}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config, args.override)
    result = run_experiment(config)
    result.write_csv(args.output)
    summary_path = args.summary or (args.output.rsplit(".", 1)[0]
                                    + "_summary.csv")
    result.write_summary_csv(summary_path)
    print(f"{len(result.rows)} rows written to {args.output}")
    print(f"summary written to {summary_path}")
    return 0


def _check(name: str, ok: bool, detail: str, failures: list) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if not ok:
        failures.append(name)


def run_validation(config: ExperimentConfig | None = None) -> int:
    """Fast oracle suite; returns the number of failed checks."""
    failures: list[str] = []
    rng = np.random.default_rng(7)

    if config is not None:
        try:
            config.occupancy_model()
            config.validate()
            _check("config", True, "configuration is consistent", failures)
        except (ConfigError, ValueError) as exc:
            _check("config", False, str(exc), failures)
            return len(failures)
        model = config.occupancy_model()
    else:
        model = OccupancyModel(0.005, 0.095)

    # Aggregate/delayed-local identity on a small built tree
    topology = build_topology("grid", 16, (400.0, 400.0), 2, rng_seed=3)
    phi = compute_phi(topology, PathlossParams())
    tree = build_ibt(topology, phi, float(model.mu), gamma_delay=0.02)
    exchange = HierarchicalExchange(tree, float(model.pi_b), track_locals=True)
    state = sample_steady_state(model, 16, rng)
    worst = 0.0
    for t in range(60):
        exchange.advance_frame(state.b.astype(float), t)
        worst = max(worst, exchange.aggregate_identity_residual(t))
        state = step_occupancy(model, state, rng)
    _check("aggregate-identity", worst <= 1e-9,
           f"max residual {worst:.2e} (<= 1e-9)", failures)

    # Exact enumeration vs closed-form marginals on a 4-cell instance
    worst = 0.0
    for k in range(10):
        tree4 = AggregationTree.from_nested(
            4, [[([(0, int(rng.integers(3))), (1, int(rng.integers(3)))], 1),
                 ([(2, int(rng.integers(3))), (3, int(rng.integers(3)))], 2)]])
        ex = HierarchicalExchange(tree4, float(model.pi_b))
        st = sample_steady_state(model, 4, rng)
        hist = []
        for t in range(12):
            ex.advance_frame(st.b.astype(float), t)
            hist.append(ex.compute_sigma(0, t))
            st = step_occupancy(model, st, rng)
        belief = inference.exact_belief(np.array(hist), tree4, model, 0,
                                        SensorModel(0.0, 0.0))
        sigma = hist[-1]
        for lvl, ring in enumerate(tree4.ring_sets(0)):
            for j in ring:
                lem = inference.marginal_occupancy(sigma[lvl], len(ring),
                                                   int(tree4.delta[lvl][j]), model)
                worst = max(worst, abs(belief.marginal(int(j)) - float(lem)))
    _check("belief-oracle", worst <= 1e-12,
           f"max |enumeration - closed form| = {worst:.2e} (<= 1e-12)", failures)

    # Closed-form traffic optimum vs fine grid search
    params_pool = []
    for _ in range(50):
        m = float(rng.integers(1, 12))
        params_pool.append((float(rng.uniform(0.01, 2.0)),  # ip
                            float(rng.uniform(0.0, 2.0)),   # is
                            m,
                            float(rng.uniform(3.0, 300.0)),  # phi_ii
                            float(10 ** rng.uniform(-2, 2))))  # lambda
    worst = 0.0
    for ip, is_, m, phi_ii, lam in params_pool:
        params = control.ControlParams(lam=lam, sinr_th=10 ** 0.5)
        a_star = control.optimal_traffic(ip, is_, m, phi_ii, model, params)
        grid = np.linspace(0.0, m, 20001)
        util = control.utility(grid, ip, is_, m, phi_ii, model, params)
        a_grid = grid[int(np.argmax(util))]
        worst = max(worst, abs(a_star - a_grid))
    _check("traffic-optimum", worst <= 1e-3,
           f"max |closed form - grid argmax| = {worst:.2e}", failures)

    # Jensen directions
    ok = True
    params = control.ControlParams(lam=1.0, sinr_th=10 ** 0.5)
    for _ in range(20):
        phi2 = np.array([[30.0, rng.uniform(0.1, 5.0)],
                         [0.0, 25.0]])
        phi2[1, 0] = phi2[0, 1]
        m2 = rng.integers(1, 4, size=2).astype(float)
        a2 = rng.uniform(0, m2)
        b2 = rng.integers(0, 2, size=2)
        exact = control.exact_throughput(a2, b2, m2, phi2, params, 0)
        w = phi2[:, 0] / phi2[0, 0]
        lb = control.throughput_lb(a2[0], m2[0], float(w @ b2),
                                   float(w[1] * a2[1]), phi2[0, 0], params)
        ok &= lb <= exact + 1e-12
    _check("jensen-bound", ok, "throughput bound never exceeds the exact value",
           failures)

    return len(failures)


def cmd_validate(args) -> int:
    config = load_config(args.config, args.override) if args.config else None
    failed = run_validation(config)
    if failed:
        print(f"FAILED: {failed} check(s) failed")
        return 1
    print("OK: all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiersense",
        description="Multi-cell cognitive-radio simulator with hierarchical "
                    "multi-scale spectrum sensing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-tree", help="build and serialize an aggregation tree")
    p.add_argument("--config", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--override", "-D", action="append", default=[],
                   metavar="KEY=VALUE")
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("simulate", help="run one scheme/grid point and dump "
                                        "per-frame metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--scheme", default=None)
    p.add_argument("--grid-value", type=float, default=None)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--trace", default=None,
                   help="also dump per-frame (level, head, aggregate) rows")
    p.add_argument("--override", "-D", action="append", default=[],
                   metavar="KEY=VALUE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run the full experiment sweep to CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--summary", default=None)
    p.add_argument("--override", "-D", action="append", default=[],
                   metavar="KEY=VALUE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="run the fast oracle self-checks")
    p.add_argument("--config", default=None)
    p.add_argument("--override", "-D", action="append", default=[],
                   metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
