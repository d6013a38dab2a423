"""Measurement plane: per-second bins by traffic class and direction,
end-of-run summaries, and the CSV/JSON writers for run artifacts.

Latency is measured from packet creation to final delivery (including any
side-channel hop). Per-user throughput divides delivered payload bits by
user-seconds sampled once per second, so populations that change mid-run are
weighted by presence time.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from .core import ConfigError, SimTime, US_PER_S

KEYS = (("HT", "dl"), ("HT", "ul"), ("MT", "dl"), ("MT", "ul"))

# deliveries can trail the horizon by queue drain and side-channel airtime
_TAIL_BINS = 8


class MetricsCollector:
    """Accumulates per-second counts per (class, direction).

    The hot path is the per-packet sink closures from make_sink; they touch
    three plain lists and nothing else.
    """

    def __init__(self, horizon_us: SimTime) -> None:
        if horizon_us <= 0:
            raise ConfigError("horizon must be positive")
        self.horizon_us = horizon_us
        self.n_bins = horizon_us // US_PER_S + 1 + _TAIL_BINS
        nb = self.n_bins
        self.gen = {k: [0] * nb for k in KEYS}
        self.delivered = {k: [0] * nb for k in KEYS}
        self.bits = {k: [0] * nb for k in KEYS}
        self.lat_sum = {k: [0] * nb for k in KEYS}   # microseconds
        self.dropped = {k: [0] * nb for k in KEYS}
        self.users = {"HT": [0] * nb, "MT": [0] * nb}
        self.drop_reasons: dict[str, int] = {}

    def gen_bins(self, klass: str, direction: str) -> list:
        return self.gen[(klass, direction)]

    def make_sink(self, klass: str, direction: str, payload_bits: int):
        cnt = self.delivered[(klass, direction)]
        bits = self.bits[(klass, direction)]
        lat = self.lat_sum[(klass, direction)]
        def sink(created: int, delivered: int) -> None:
            b = delivered // US_PER_S
            cnt[b] += 1
            bits[b] += payload_bits
            lat[b] += delivered - created
        return sink

    def make_drop_sink(self, klass: str, direction: str):
        drops = self.dropped[(klass, direction)]
        reasons = self.drop_reasons
        last = self.n_bins - 1
        def drop_sink(count: int, t_us: int, reason: str) -> None:
            b = t_us // US_PER_S
            drops[b if b < last else last] += count
            reasons[reason] = reasons.get(reason, 0) + count
        return drop_sink

    def record(self, klass: str, direction: str, created: int,
               delivered: int, payload_bits: int) -> None:
        key = (klass, direction)
        b = delivered // US_PER_S
        self.delivered[key][b] += 1
        self.bits[key][b] += payload_bits
        self.lat_sum[key][b] += delivered - created

    def sample_users(self, t_us: SimTime, ht_users: int, mt_users: int) -> None:
        b = t_us // US_PER_S
        if b < self.n_bins:
            self.users["HT"][b] = ht_users
            self.users["MT"][b] = mt_users

    # -- aggregation ---------------------------------------------------------
    def totals(self) -> dict:
        out = {}
        for k in KEYS:
            name = f"{k[0].lower()}_{k[1]}"
            out[name] = {
                "generated": sum(self.gen[k]),
                "delivered": sum(self.delivered[k]),
                "dropped": sum(self.dropped[k]),
                "payload_bits": sum(self.bits[k]),
            }
        return out

    def summarize(self, window_s: tuple[int, int]) -> list[dict]:
        """Per (class, direction) aggregates over [w0, w1) seconds."""
        w0, w1 = window_s
        if not 0 <= w0 < w1:
            raise ConfigError(f"bad summary window {window_s}")
        w1 = min(w1, self.n_bins)
        rows = []
        for klass, direction in KEYS:
            k = (klass, direction)
            delivered = sum(self.delivered[k][w0:w1])
            gen = sum(self.gen[k][w0:w1])
            bits = sum(self.bits[k][w0:w1])
            lat = sum(self.lat_sum[k][w0:w1])
            dropped = sum(self.dropped[k][w0:w1])
            user_seconds = sum(self.users[klass][w0:w1])
            rows.append({
                "class": klass,
                "direction": direction,
                "generated": gen,
                "delivered": delivered,
                "dropped": dropped,
                "delivery_ratio": (delivered / gen) if gen else 0.0,
                "per_user_throughput_bps": (bits / user_seconds) if user_seconds else 0.0,
                "mean_latency_ms": (lat / delivered / 1000.0) if delivered else 0.0,
                "user_seconds": user_seconds,
            })
        return rows


@dataclass
class ConservationReport:
    ok: bool
    detail: dict

    def __bool__(self) -> bool:
        return self.ok


def conservation_check(collector: MetricsCollector,
                       backlog_packets: dict[tuple[str, str], int],
                       inflight_packets: dict[tuple[str, str], int]) -> ConservationReport:
    """generated == delivered + dropped + still queued + in flight, per key."""
    detail = {}
    ok = True
    for k in KEYS:
        gen = sum(collector.gen[k])
        delivered = sum(collector.delivered[k])
        dropped = sum(collector.dropped[k])
        backlog = backlog_packets.get(k, 0)
        inflight = inflight_packets.get(k, 0)
        balance = gen - delivered - dropped - backlog - inflight
        detail[f"{k[0].lower()}_{k[1]}"] = {
            "generated": gen, "delivered": delivered, "dropped": dropped,
            "queued": backlog, "in_flight": inflight, "balance": balance,
        }
        if balance != 0:
            ok = False
    return ConservationReport(ok, detail)


# -- writers -----------------------------------------------------------------

TIMESERIES_HEADER = ["bin_start_s", "class", "direction", "throughput_bps",
                     "generated", "delivered", "dropped", "mean_latency_ms"]

SUMMARY_HEADER = ["level", "policy", "scenario", "seed", "class", "direction",
                  "per_user_throughput_bps", "mean_latency_ms",
                  "delivery_ratio", "generated", "delivered", "dropped",
                  "user_seconds"]

ESTIMATES_HEADER = ["t_s", "n_est", "mean_speed_mps", "level", "policy"]

ADAPTATION_HEADER = ["t_s", "n_est", "level", "prev_policy", "next_policy",
                     "actions"]


def write_timeseries_csv(path: str, collector: MetricsCollector) -> None:
    last_bin = collector.horizon_us // US_PER_S + _TAIL_BINS
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TIMESERIES_HEADER)
        for b in range(min(last_bin + 1, collector.n_bins)):
            for klass, direction in KEYS:
                k = (klass, direction)
                delivered = collector.delivered[k][b]
                gen = collector.gen[k][b]
                if not delivered and not gen and not collector.dropped[k][b]:
                    continue
                lat_ms = (collector.lat_sum[k][b] / delivered / 1000.0) if delivered else 0.0
                w.writerow([b, klass, direction, collector.bits[k][b], gen,
                            delivered, collector.dropped[k][b],
                            f"{lat_ms:.3f}"])


def write_summary_csv(path: str, rows: list[dict], level: str, policy: str,
                      scenario: int, seed: int) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([level, policy, scenario, seed, r["class"], r["direction"],
                        f"{r['per_user_throughput_bps']:.1f}",
                        f"{r['mean_latency_ms']:.3f}",
                        f"{r['delivery_ratio']:.6f}",
                        r["generated"], r["delivered"], r["dropped"],
                        r["user_seconds"]])


def write_estimates_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ESTIMATES_HEADER)
        for r in rows:
            w.writerow([r["t_s"], r["n_est"], f"{r['mean_speed_mps']:.3f}",
                        r["level"], r["policy"]])


def write_adaptation_csv(path: str, events: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ADAPTATION_HEADER)
        for e in events:
            w.writerow([e.t_us // US_PER_S, e.n_est, e.level.label,
                        e.prev_policy, e.next_policy, e.actions])


def write_run_meta(path: str, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
