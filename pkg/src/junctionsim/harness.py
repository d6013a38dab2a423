"""Batch execution: single runs with on-disk artifacts, and the replication
matrix (congestion level x policy x scenario x seed) with cross-seed
aggregation.

Output root resolution: an explicit path wins, then the JUNCTIONSIM_OUT_ROOT
environment variable, then ./out.
"""
from __future__ import annotations

import csv
import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor

from .config import Config
from .core import ConfigError
from .metrics import (write_adaptation_csv, write_estimates_csv,
                      write_run_meta, write_summary_csv, write_timeseries_csv)
from .scenario import RunResult, run_simulation
from .sensing import write_trace

OUT_ROOT_ENV = "JUNCTIONSIM_OUT_ROOT"

_VERSION = "0.1.0"

LEVELS = ("low", "moderate", "high", "veryhigh")

# policy arms replicated per congestion level: the baseline everywhere, the
# relay overlay where queues exist but the cell still has headroom, the wider
# carrier where it does not
MATRIX_POLICIES = {
    "low": ("standard", "aggregator"),
    "moderate": ("standard", "aggregator"),
    "high": ("standard", "extra"),
    "veryhigh": ("standard", "extra"),
}


def default_out_root(explicit: str | None = None) -> str:
    if explicit:
        return explicit
    return os.environ.get(OUT_ROOT_ENV, "out")


def write_run_outputs(result: RunResult, out_dir: str) -> list[str]:
    """Write one run's artifact files; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = result.config
    written = []

    policy_label = result.policy_mode
    path = os.path.join(out_dir, "summary.csv")
    write_summary_csv(path, result.summary_rows, result.level_label,
                      policy_label, result.scenario, result.seed)
    written.append(path)

    if cfg["emit.timeseries"]:
        path = os.path.join(out_dir, "timeseries.csv")
        write_timeseries_csv(path, result.collector)
        written.append(path)
    if cfg["emit.estimates"]:
        path = os.path.join(out_dir, "estimates.csv")
        write_estimates_csv(path, result.estimates)
        written.append(path)
    path = os.path.join(out_dir, "adaptation.csv")
    write_adaptation_csv(path, result.adaptation_events)
    written.append(path)
    if cfg["emit.sensors"]:
        path = os.path.join(out_dir, "sensors.csv")
        write_trace(path, result.trace)
        written.append(path)

    meta = {
        "version": _VERSION,
        "seed": result.seed,
        "scenario": result.scenario,
        "policy": result.policy_mode,
        "final_policy": result.final_policy,
        "level": result.level_label,
        "config": cfg,
        "totals": result.totals,
        "conservation_ok": result.conservation.ok,
        "conservation": result.conservation.detail,
        "rach": result.rach,
        "counters": result.counters,
        "adaptation_events": len(result.adaptation_events),
        "wall_s": round(result.wall_s, 3),
    }
    path = os.path.join(out_dir, "run_meta.json")
    write_run_meta(path, meta)
    written.append(path)
    return written


def run_once(cfg: Config, out_dir: str | None = None) -> RunResult:
    result = run_simulation(cfg)
    if out_dir is not None:
        write_run_outputs(result, out_dir)
    return result


def matrix_cells() -> list[tuple[int, str, str]]:
    cells = []
    for scenario in (1, 2):
        for level in LEVELS:
            for policy in MATRIX_POLICIES[level]:
                cells.append((scenario, level, policy))
    return cells


def cell_name(scenario: int, level: str, policy: str, seed: int) -> str:
    return f"{policy}_{level}_s{scenario}_seed{seed}"


def _run_job(args: tuple[dict, str]) -> tuple[dict, list[dict]]:
    overrides, out_dir = args
    cfg = Config(overrides)
    result = run_once(cfg, out_dir)
    key = {"scenario": result.scenario, "level": result.level_label,
           "policy": result.policy_mode, "seed": result.seed,
           "conservation_ok": result.conservation.ok,
           "wall_s": result.wall_s}
    return key, result.summary_rows


MATRIX_HEADER = ["scenario", "level", "policy", "class", "direction", "n_seeds",
                 "per_user_throughput_bps_mean", "per_user_throughput_bps_se",
                 "mean_latency_ms_mean", "mean_latency_ms_se",
                 "delivery_ratio_mean", "delivery_ratio_se"]


def _mean_se(values: list[float]) -> tuple[float, float]:
    m = statistics.fmean(values)
    if len(values) < 2:
        return m, 0.0
    return m, statistics.stdev(values) / math.sqrt(len(values))


def run_matrix(base_overrides: dict, seeds: list[int], out_root: str,
               workers: int | None = None, log=None) -> str:
    """Run every matrix cell for every seed; returns the matrix summary path.

    base_overrides must not pin scenario, schedule, policy, or seed; the
    matrix owns those axes.
    """
    for k in ("scenario", "schedule", "policy", "seed"):
        if k in base_overrides:
            raise ConfigError(f"matrix overrides may not set {k!r}")
    if not seeds:
        raise ConfigError("matrix needs at least one seed")
    os.makedirs(out_root, exist_ok=True)
    jobs = []
    for scenario, level, policy in matrix_cells():
        for seed in seeds:
            overrides = dict(base_overrides)
            overrides.update({
                "scenario": scenario,
                "schedule": f"{level}:0",
                "policy": policy,
                "seed": seed,
            })
            out_dir = os.path.join(out_root, cell_name(scenario, level, policy, seed))
            jobs.append((overrides, out_dir))

    results: list[tuple[dict, list[dict]]] = []
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, r in enumerate(pool.map(_run_job, jobs)):
                results.append(r)
                if log:
                    log(f"[{i + 1}/{len(jobs)}] {_describe(r[0])}")
    else:
        for i, job in enumerate(jobs):
            r = _run_job(job)
            results.append(r)
            if log:
                log(f"[{i + 1}/{len(jobs)}] {_describe(r[0])}")

    grouped: dict[tuple, dict[str, list[float]]] = {}
    bad_conservation = []
    for key, rows in results:
        if not key["conservation_ok"]:
            bad_conservation.append(key)
        for row in rows:
            gk = (key["scenario"], key["level"], key["policy"],
                  row["class"], row["direction"])
            g = grouped.setdefault(gk, {"tput": [], "lat": [], "ratio": []})
            g["tput"].append(row["per_user_throughput_bps"])
            g["lat"].append(row["mean_latency_ms"])
            g["ratio"].append(row["delivery_ratio"])

    path = os.path.join(out_root, "matrix_summary.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MATRIX_HEADER)
        for gk in sorted(grouped, key=lambda k: (k[0], LEVELS.index(k[1]), k[2], k[3], k[4])):
            g = grouped[gk]
            tput_m, tput_se = _mean_se(g["tput"])
            lat_m, lat_se = _mean_se(g["lat"])
            ratio_m, ratio_se = _mean_se(g["ratio"])
            w.writerow(list(gk) + [len(g["tput"]),
                                   f"{tput_m:.1f}", f"{tput_se:.1f}",
                                   f"{lat_m:.3f}", f"{lat_se:.3f}",
                                   f"{ratio_m:.6f}", f"{ratio_se:.6f}"])

    meta = {
        "version": _VERSION,
        "seeds": seeds,
        "cells": len(matrix_cells()),
        "runs": len(jobs),
        "conservation_violations": bad_conservation,
        "base_overrides": base_overrides,
    }
    with open(os.path.join(out_root, "matrix_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _describe(key: dict) -> str:
    return (f"s{key['scenario']} {key['level']:<9} {key['policy']:<10} "
            f"seed {key['seed']} ({key['wall_s']:.1f}s)")
