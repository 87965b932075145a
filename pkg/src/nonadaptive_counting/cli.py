"""Command-line entry point: ``estimate``, ``schedule``, ``trials``, ``scaling``, ``calibrate``.

Settings come from an optional JSON config (``--config``) with flags taking
precedence; commands that write files echo the effective config as
``config.json`` next to their output. Exit codes: 0 success, 1 invalid
config, 2 resource limit, 3 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import sys
from pathlib import Path

from . import harness
from .core import InvalidArgument, ResourceLimit
from .driver import build_master_schedule, pad_instance, run_nonadaptive, run_two_round
from .oracle import SimulatedOracle
from .stage2 import PreconditionViolation

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_IO = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the resource-limit code
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--n", type=int, nargs="+", help="domain size(s) N before padding")
    p.add_argument("--k", type=int, nargs="+", help="marked count(s) K")
    p.add_argument("--eps", type=float, nargs="+", help="relative accuracy value(s)")
    p.add_argument("--delta", type=float)
    p.add_argument("--mode", choices=("rigorous", "practical"))
    p.add_argument("--pad-factor", type=int)
    p.add_argument("--a-const", type=float)
    p.add_argument("--practical-factor", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, help="base seed; trial n uses seed + n")
    p.add_argument("--out", help="output directory")
    p.add_argument("--algorithm", choices=("nonadaptive", "two-round", "baseline"))
    p.add_argument("--workers", type=int, help="worker processes for trials")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="nonadaptive-counting", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="estimate K for one instance, print JSON")
    sch = sub.add_parser("schedule", parents=[common],
                         help="describe the master schedule and its query cost (no oracle)")
    sch.add_argument("--entries", help="also write every (r, t) entry to this CSV file")
    sch.add_argument("--digest", action="store_true", help="include SHA-256 of the packed entry stream")
    sub.add_parser("trials", parents=[common], help="Monte Carlo trials to results.csv")
    sub.add_parser("scaling", parents=[common], help="query-cost sweep over N and eps to scaling.csv")
    cal = sub.add_parser("calibrate", parents=[common], help="search the practical factor downward")
    cal.add_argument("--pf-low", type=float, default=1e-4)
    cal.add_argument("--steps", type=int, default=6)
    return parser


_FLAG_KEYS = {"delta": "delta", "mode": "mode", "pad_factor": "pad_factor", "a_const": "a_const",
              "practical_factor": "practical_factor", "trials": "trials", "seed": "base_seed",
              "out": "out", "algorithm": "algorithm", "workers": "workers", "eps": "eps"}


def effective_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    data = harness.load_config(args.config) if args.config else {}
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.n is not None or args.k is not None:
        old = data.get("instances") or []
        ns = args.n if args.n is not None else sorted({int(n) for n, _ in old})
        ks = args.k if args.k is not None else (sorted({int(k) for _, k in old}) or [1])
        if not ns:
            raise InvalidArgument("--k given without any N (use --n or a config with instances)")
        data["instances"] = [[n, k] for n, k in itertools.product(ns, ks)]
    return harness.ExperimentConfig.from_dict(data)


def _out_dir(config: harness.ExperimentConfig, required: bool) -> Path | None:
    if config.out is None:
        if required:
            raise InvalidArgument("this command needs --out (an output directory)")
        return None
    return Path(config.out)


def _echo_config(out: Path, config: harness.ExperimentConfig, command: str) -> None:
    doc = config.to_dict()
    resolved = config.driver_config(config.eps[0])
    for key in ("a_const", "practical_factor", "pad_factor"):
        doc[key] = getattr(resolved, key)
    doc["command"] = command
    doc["csv_schema"] = harness.CSV_SCHEMA_VERSION
    harness.write_json(out / "config.json", doc)


def _print_json(obj, compact: bool = False) -> None:
    # the compact form goes through the C encoder, which matters for schedule dumps
    json.dump(obj, sys.stdout, indent=None if compact else 2, sort_keys=True)
    sys.stdout.write("\n")


def cmd_estimate(config: harness.ExperimentConfig) -> dict:
    N, K = config.instances[0]
    eps = config.eps[0]
    cfg = config.driver_config(eps)
    seed = config.base_seed
    if config.algorithm == "classical-baseline":
        oracle = SimulatedOracle(N, K, seed)
        est = harness.classical_baseline(oracle, eps, config.delta)
        n_used = N
    else:
        n_used = pad_instance(N, cfg)
        oracle = SimulatedOracle(n_used, K, seed)
        run = run_nonadaptive if config.algorithm == "nonadaptive" else run_two_round
        est = run(oracle, cfg)
    doc = {"N": N, "paddedN": n_used, "K": K, "eps": eps, "delta": config.delta, "mode": config.mode,
           "algorithm": config.algorithm, "seed": seed, "thetaEst": est.theta_est, "kappa": est.kappa,
           "KHat": est.k_hat, "queriesExact": est.queries_exact, "queriesBound": est.queries_bound,
           "failureFlag": est.failure, "thetaTilde": est.theta_tilde, "thetaPrime": est.theta_prime,
           "roundQueries": list(est.round_queries),
           "success": harness.trial_success(est.k_hat, K, eps)}
    return doc


def describe_schedule(N: int, eps: float, config: harness.ExperimentConfig, digest: bool = False) -> dict:
    """Oracle-free description of the master schedule for ``(N, eps)``.

    The stage-1 entries are listed in full; each fine block is given by the
    parameters that determine its entries, its entry count and its query
    cost. ``K`` plays no part.
    """
    cfg = config.driver_config(eps)
    Np = pad_instance(N, cfg)
    master = build_master_schedule(Np, cfg, cache=False)
    cost = master.query_cost()
    blocks = []
    for k, (theta, params, bc) in enumerate(zip(master.thetas, master.fine_params, master.block_costs())):
        blocks.append({"thetaPrime": float(theta), "epsPrime": params.eps_prime,
                       "deltaPrime": params.delta_prime, "entries": int(master.lengths[k + 1]),
                       "queriesExact": bc.exact, "queriesBound": bc.bound})
    doc = {"N": N, "paddedN": Np, "eps": eps, "delta": cfg.delta, "mode": cfg.mode,
           "padFactor": cfg.pad_factor, "gridCap": cfg.grid_cap, "thetaGridRatio": cfg.theta_grid_ratio,
           "aConst": cfg.a_const, "practicalFactor": cfg.practical_factor, "entries": len(master),
           "queriesExact": cost.exact, "queriesBound": cost.bound,
           "stage1": {"rotations": master.stage1.rotations.tolist(), "flips": master.stage1.flips.tolist()},
           "blocks": blocks}
    if digest:
        doc["sha256"] = master.digest()
    return doc


def write_entries(path, N: int, eps: float, config: harness.ExperimentConfig) -> None:
    cfg = config.driver_config(eps)
    master = build_master_schedule(pad_instance(N, cfg), cfg)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("r,t\n")
            for seg in master.iter_segments():
                fh.writelines(f"{r!r},{t}\n" for r, t in zip(seg.rotations.tolist(), seg.flips.tolist()))
    except OSError as exc:
        raise harness.HarnessIOError(f"{path}: {exc.strerror or exc}") from exc


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = effective_config(args)
    cmd = args.command
    if cmd == "estimate":
        doc = cmd_estimate(config)
        out = _out_dir(config, False)
        if out is not None:
            _echo_config(out, config, cmd)
            harness.write_json(out / "estimate.json", doc)
        _print_json(doc)
    elif cmd == "schedule":
        N, _ = config.instances[0]
        doc = describe_schedule(N, config.eps[0], config, digest=args.digest)
        out = _out_dir(config, False)
        if out is not None:
            _echo_config(out, config, cmd)
            harness.write_json(out / "schedule.json", doc)
        if args.entries:
            write_entries(args.entries, N, config.eps[0], config)
        _print_json(doc, compact=True)
    elif cmd == "trials":
        out = _out_dir(config, True)
        _echo_config(out, config, cmd)
        records = harness.run_trials(config, out / "results.csv")
        for cell in harness.summarize(records).values():
            print(f"N={cell.N} K={cell.K} eps={cell.eps:g} {cell.algorithm}: "
                  f"success {cell.successes}/{cell.trials} mean queries {cell.mean_queries:.6g}")
    elif cmd == "scaling":
        out = _out_dir(config, True)
        _echo_config(out, config, cmd)
        report = harness.scaling_sweep(config)
        harness.write_scaling(out / "scaling.csv", report)
        for r in report.rows:
            print(f"N'={r.N} eps={r.eps:g} queries={r.queries_exact} ratio={r.ratio:.6g}")
        print(f"max/min ratio {report.spread:.6g}")
    elif cmd == "calibrate":
        out = _out_dir(config, True)
        _echo_config(out, config, cmd)
        result = harness.calibrate_constants(config, pf_low=args.pf_low, steps=args.steps)
        harness.write_calibration(out / "calibration.csv", result)
        _print_json({"aConst": result.a_const, "practicalFactor": result.practical_factor,
                     "lastSafe": result.last_safe})
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimit as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InvalidArgument, PreconditionViolation, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
