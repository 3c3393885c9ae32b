"""Command line front end.

    normsim run        --config PATH [--seed N] [--out PATH] [--dump-topology PATH]
    normsim sweep      --config PATH [--seed N] [--out PATH] [--plot-data PATH] [--parallel N] [--burn-in F]
    normsim replicator --matrix PATH [--initial X,Y,..] [--horizon T] [--step H] [--out PATH]
    normsim validate   --config PATH

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from . import dynamics, engine, harness
from .config import ConfigError, read_config_file
from .topology import write_edge_list

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("normsim")


def _open_out(path: str | None):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def cmd_run(args) -> int:
    cfg = read_config_file(args.config).model
    seed = cfg.seed if args.seed is None else args.seed
    log.info("running %s for %d generations, seed %d", cfg.family, cfg.generations, seed)
    records = engine.run_simulation(cfg, seed)
    out = args.out or "/dev/stdout"
    harness.emit_run_csv(records, cfg.strategy_labels(), out)
    if args.dump_topology:
        rng = np.random.default_rng(seed)
        write_edge_list(engine.init_state(cfg, rng).topology, args.dump_topology)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cf = read_config_file(args.config)
    if not cf.sweep:
        raise ConfigError("config has no [sweep] section")
    spec = harness.SweepSpec.from_mapping(cf.model, cf.sweep)
    if args.seed is not None:
        spec = harness.SweepSpec(spec.parameter_path, spec.values, spec.runs_per_point, spec.base_config, args.seed)
    log.info(
        "sweeping %s over %d points x %d runs (parallel %d)",
        spec.parameter_path, len(spec.values), spec.runs_per_point, args.parallel,
    )
    result = harness.run_sweep(spec, args.parallel, args.burn_in)
    harness.emit_csv(result, args.out or "/dev/stdout")
    if args.plot_data:
        harness.emit_plot_data(result, args.plot_data)
    return EXIT_OK


def _read_matrix(path: str) -> np.ndarray:
    try:
        m = np.loadtxt(path, ndmin=2, comments="#", delimiter=None)
    except ValueError as exc:
        raise ConfigError(f"cannot read payoff matrix: {exc}") from None
    if m.shape[0] != m.shape[1]:
        raise ConfigError(f"payoff matrix must be square, got {m.shape[0]}x{m.shape[1]}")
    return m


def cmd_replicator(args) -> int:
    payoffs = _read_matrix(args.matrix)
    n = payoffs.shape[0]
    if args.initial:
        try:
            x0 = np.array([float(v) for v in args.initial.split(",")])
        except ValueError:
            raise ConfigError(f"bad --initial {args.initial!r}") from None
    else:
        x0 = np.full(n, 1.0 / n)
    if x0.shape[0] != n:
        raise ConfigError(f"--initial has {x0.shape[0]} entries, matrix has {n} strategies")
    try:
        dynamics.check_mixed_state(x0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.horizon <= 0 or args.step <= 0:
        raise ConfigError("--horizon and --step must be positive")

    traj = dynamics.replicator_trajectory(x0, payoffs, args.horizon, args.step)
    times = dynamics.trajectory_times(args.horizon, args.step, traj.shape[0])
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["t", *(f"x{i}" for i in range(n))])
        every = max(1, args.every)
        for i in range(0, traj.shape[0], every):
            w.writerow([f"{times[i]:.6g}", *(f"{v:.6g}" for v in traj[i])])
        if (traj.shape[0] - 1) % every:
            w.writerow([f"{times[-1]:.6g}", *(f"{v:.6g}" for v in traj[-1])])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_validate(args) -> int:
    cf = read_config_file(args.config)
    if cf.sweep:
        harness.SweepSpec.from_mapping(cf.model, cf.sweep)
    if not args.quiet:
        print(f"{args.config}: ok ({cf.model.family})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="normsim", description="Evolutionary norm-emergence simulations.")
    p.add_argument("--quiet", action="store_true", help="suppress progress messages")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
        return sp

    r = common(sub.add_parser("run", help="single simulation, per-generation CSV"))
    r.add_argument("--seed", type=int)
    r.add_argument("--out", metavar="PATH")
    r.add_argument("--dump-topology", metavar="PATH", help="write the run's graph as an edge list")
    r.set_defaults(func=cmd_run)

    s = common(sub.add_parser("sweep", help="parameter sweep from the [sweep] section"))
    s.add_argument("--seed", type=int, help="override the sweep's seed_base")
    s.add_argument("--out", metavar="PATH")
    s.add_argument("--plot-data", metavar="PATH")
    s.add_argument("--parallel", type=int, default=1, metavar="N")
    s.add_argument("--burn-in", type=float, metavar="F", help="fraction of generations dropped before averaging")
    s.set_defaults(func=cmd_sweep)

    rep = common(sub.add_parser("replicator", help="replicator trajectory for a payoff matrix"), config=False)
    rep.add_argument("--matrix", required=True, metavar="PATH", help="whitespace-separated square matrix")
    rep.add_argument("--initial", help="comma-separated initial proportions (default uniform)")
    rep.add_argument("--horizon", type=float, default=50.0)
    rep.add_argument("--step", type=float, default=dynamics.DEFAULT_STEP)
    rep.add_argument("--every", type=int, default=1, help="write every Nth step")
    rep.add_argument("--out", metavar="PATH")
    rep.set_defaults(func=cmd_replicator)

    v = common(sub.add_parser("validate", help="check a config file and exit"))
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if getattr(exc, "filename", None) == getattr(args, "config", None) else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
