"""Command line front end.

    simulate run [--out DIR] [--quiet] [key=value ...]
    simulate matrix [--out DIR] [--seeds SPEC] [--workers N] [key=value ...]
    simulate replay-trace PATH [--out FILE] [--window-s W] [key=value ...]

Exit codes: 0 success, 2 configuration or input error, 3 simulation fault.
"""
from __future__ import annotations

import argparse
import os
import sys

from .adaptation import rule_from_names
from .config import Config
from .core import ConfigError, MalformedTraceError, SimulationFault, US_PER_S
from .harness import (cell_name, default_out_root, run_once, run_matrix)
from .metrics import write_estimates_csv
from .sensing import SensorLayout, estimate, read_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FAULT = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Signalized-junction cell simulator: one run, the "
                    "replication matrix, or offline congestion estimation.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one configured run")
    run.add_argument("--out", default=None,
                     help="output directory (default: <out_root>/<auto name>)")
    run.add_argument("--no-artifacts", action="store_true",
                     help="skip writing output files")
    run.add_argument("--quiet", action="store_true", help="suppress the report")
    run.add_argument("overrides", nargs="*", metavar="key=value",
                     help="config overrides")

    matrix = sub.add_parser("matrix", help="run the level x policy x scenario matrix")
    matrix.add_argument("--out", default=None, help="output root directory")
    matrix.add_argument("--seeds", default="1-10",
                        help="seed spec: N, A-B, or comma list (default 1-10)")
    matrix.add_argument("--workers", type=int, default=None,
                        help="parallel processes (default: cpu count)")
    matrix.add_argument("--quiet", action="store_true")
    matrix.add_argument("overrides", nargs="*", metavar="key=value")

    replay = sub.add_parser("replay-trace",
                            help="estimate congestion offline from a sensor trace")
    replay.add_argument("trace", help="sensor trace CSV (t_us,sensor_id,occupied)")
    replay.add_argument("--out", default=None,
                        help="estimates CSV path (default: stdout)")
    replay.add_argument("--window-s", type=float, default=None,
                        help="estimation window (default: adapt.window_s)")
    replay.add_argument("overrides", nargs="*", metavar="key=value")
    return p


def _parse_seeds(spec: str) -> list[int]:
    spec = spec.strip()
    try:
        if "," in spec:
            return [int(s) for s in spec.split(",") if s.strip()]
        if "-" in spec and not spec.lstrip("-").isdigit():
            a, _, b = spec.partition("-")
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        n = int(spec)
        if n <= 0:
            raise ValueError
        return list(range(1, n + 1))
    except ValueError:
        raise ConfigError(f"bad seed spec {spec!r}: use N, A-B, or a comma list") from None


def _cmd_run(args) -> int:
    cfg = Config()
    cfg.apply_pairs(args.overrides)
    if args.no_artifacts:
        out_dir = None
    elif args.out:
        out_dir = args.out
    else:
        name = cell_name(cfg["scenario"],
                         cfg["schedule"].split(":")[0].strip() if "," not in cfg["schedule"] else "mixed",
                         cfg["policy"], cfg["seed"])
        out_dir = os.path.join(default_out_root(), name)
    result = run_once(cfg, out_dir)
    if not args.quiet:
        _print_report(result, out_dir)
    return EXIT_OK


def _print_report(result, out_dir) -> None:
    print(f"seed {result.seed} scenario {result.scenario} "
          f"policy {result.policy_mode} level {result.level_label} "
          f"({result.wall_s:.1f}s wall)")
    for row in result.summary_rows:
        if not row["generated"] and not row["delivered"]:
            continue
        print(f"  {row['class']} {row['direction']}: "
              f"{row['per_user_throughput_bps'] / 1000:.1f} kb/s per user, "
              f"latency {row['mean_latency_ms']:.2f} ms, "
              f"delivered {row['delivery_ratio']:.4f} of {row['generated']}")
    if not result.conservation.ok:
        print("  WARNING: packet conservation violated, see run_meta.json")
    if out_dir:
        print(f"  artifacts: {out_dir}")


def _cmd_matrix(args) -> int:
    overrides = {}
    cfg_probe = Config()
    for pair in args.overrides:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, _, value = pair.partition("=")
        cfg_probe.set(key.strip(), value.strip())  # validates key and type
        overrides[key.strip()] = value.strip()
    seeds = _parse_seeds(args.seeds)
    out_root = default_out_root(args.out)
    log = None if args.quiet else lambda line: print(line, flush=True)
    path = run_matrix(overrides, seeds, out_root, workers=args.workers, log=log)
    if not args.quiet:
        print(f"matrix summary: {path}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    cfg = Config()
    cfg.apply_pairs(args.overrides)
    period_us = cfg["sensing.period_ms"] * 1000
    trace = read_trace(args.trace, period_us=period_us)
    layout = SensorLayout(
        stop_line_m=cfg["vehicle.stop_line_m"],
        stopline_offset_m=cfg["sensing.near_offset_m"],
        upstream_offset_m=cfg["sensing.far_offset_m"],
        zone_len_m=cfg["sensing.zone_m"],
        vehicle_len_m=cfg["vehicle.length_m"],
    )
    thresholds = (cfg["classify.low_max"], cfg["classify.moderate_max"],
                  cfg["classify.high_max"])
    rule = rule_from_names(cfg["rule.low"], cfg["rule.moderate"],
                           cfg["rule.high"], cfg["rule.veryhigh"])
    window_s = args.window_s if args.window_s is not None else cfg["adapt.window_s"]
    window_us = int(round(window_s * US_PER_S))
    if window_us <= 0 or window_us % trace.period_us:
        raise ConfigError("window must be a positive multiple of the trace cadence")
    rows = []
    t1 = trace.start_us + window_us
    while t1 <= trace.end_us():
        est = estimate(trace, (t1 - window_us, t1), layout, thresholds)
        rows.append({
            "t_s": t1 // US_PER_S,
            "n_est": est.n,
            "mean_speed_mps": est.mean_speed_mps,
            "level": est.level.label,
            "policy": rule[est.level],
        })
        t1 += window_us
    if not rows:
        raise MalformedTraceError(
            f"trace spans {trace.end_us() - trace.start_us}us, "
            f"shorter than one {window_us}us window")
    if args.out:
        write_estimates_csv(args.out, rows)
        print(f"estimates: {args.out}")
    else:
        print("t_s,n_est,mean_speed_mps,level,policy")
        for r in rows:
            print(f"{r['t_s']},{r['n_est']},{r['mean_speed_mps']:.3f},"
                  f"{r['level']},{r['policy']}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "matrix":
            return _cmd_matrix(args)
        return _cmd_replay(args)
    except (ConfigError, MalformedTraceError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationFault as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
