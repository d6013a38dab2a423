"""Presence-sensor field and congestion estimation.

Each approach carries two binary presence sensors upstream of its stop line.
Sampling is strictly periodic (250 ms). Estimation over a fixed window counts
maximal occupied runs on the far (upstream) sensors, adds vehicles still held
on the stop-line sensors at the window end, and derives a mean speed from run
durations; the count maps to a congestion level through fixed thresholds.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, MalformedTraceError, US_PER_MS, US_PER_S


class CongestionLevel(enum.IntEnum):
    LOW = 0
    MODERATE = 1
    HIGH = 2
    VERY_HIGH = 3

    @classmethod
    def parse(cls, text: str) -> "CongestionLevel":
        key = text.strip().lower().replace("_", "").replace("-", "")
        table = {"low": cls.LOW, "moderate": cls.MODERATE,
                 "high": cls.HIGH, "veryhigh": cls.VERY_HIGH}
        if key not in table:
            raise ConfigError(f"unknown congestion level {text!r}")
        return table[key]

    @property
    def label(self) -> str:
        return {0: "low", 1: "moderate", 2: "high", 3: "veryhigh"}[int(self)]


TARGET_POPULATION = {
    CongestionLevel.LOW: 20,
    CongestionLevel.MODERATE: 60,
    CongestionLevel.HIGH: 100,
    CongestionLevel.VERY_HIGH: 120,
}


def target_population(level: CongestionLevel) -> int:
    """Vehicles maintained in coverage for a scheduled congestion level."""
    return TARGET_POPULATION[level]


DEFAULT_THRESHOLDS = (20, 60, 100)


def classify(n: float, thresholds: tuple[int, int, int] = DEFAULT_THRESHOLDS) -> CongestionLevel:
    """Map an estimated vehicle count to a level; bounds are inclusive upward."""
    low, moderate, high = thresholds
    if not low < moderate < high:
        raise ConfigError(f"thresholds must increase, got {thresholds}")
    if n <= low:
        return CongestionLevel.LOW
    if n <= moderate:
        return CongestionLevel.MODERATE
    if n <= high:
        return CongestionLevel.HIGH
    return CongestionLevel.VERY_HIGH


SAMPLE_PERIOD_US = 250 * US_PER_MS


@dataclass(frozen=True)
class Sensor:
    sensor_id: str
    road: str          # "A" or "B"
    position_m: float  # along-road coordinate of the zone center
    zone_len_m: float = 2.0


@dataclass(frozen=True)
class PresenceSample:
    t_us: int
    sensor_id: str
    occupied: bool


@dataclass
class SensorLayout:
    """Two sensors per approach at fixed offsets upstream of the stop line."""

    stop_line_m: float = -5.0
    stopline_offset_m: float = 10.0
    upstream_offset_m: float = 100.0
    zone_len_m: float = 2.0
    vehicle_len_m: float = 4.5
    sensors: list[Sensor] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.sensors:
            for road in ("A", "B"):
                for off in (self.stopline_offset_m, self.upstream_offset_m):
                    self.sensors.append(Sensor(
                        sensor_id=f"{road}{int(off)}",
                        road=road,
                        position_m=self.stop_line_m - off,
                        zone_len_m=self.zone_len_m,
                    ))

    @property
    def sensor_ids(self) -> list[str]:
        return [s.sensor_id for s in self.sensors]

    def stopline_ids(self) -> list[str]:
        return [s.sensor_id for s in self.sensors
                if abs(abs(s.position_m - self.stop_line_m) - self.stopline_offset_m) < 1e-9]

    def upstream_ids(self) -> list[str]:
        return [s.sensor_id for s in self.sensors
                if abs(abs(s.position_m - self.stop_line_m) - self.upstream_offset_m) < 1e-9]

    @property
    def occupancy_len_m(self) -> float:
        # a zone reads occupied while any part of a vehicle overlaps it
        return self.vehicle_len_m + self.zone_len_m

    def sample(self, positions_by_road: dict[str, np.ndarray], t_us: int) -> list[PresenceSample]:
        """Instantaneous occupancy of every sensor (one logical reading)."""
        half = self.occupancy_len_m / 2.0
        out = []
        for s in self.sensors:
            pos = positions_by_road.get(s.road)
            occ = bool(pos is not None and pos.size
                       and np.any(np.abs(pos - s.position_m) <= half))
            out.append(PresenceSample(t_us, s.sensor_id, occ))
        return out


@dataclass
class CongestionEstimate:
    n: int
    mean_speed_mps: float
    level: CongestionLevel
    window_us: tuple[int, int]


class SensorTrace:
    """Fixed-cadence boolean series per sensor, with strict validation."""

    def __init__(self, sensor_ids: list[str], start_us: int = 0,
                 period_us: int = SAMPLE_PERIOD_US) -> None:
        self.sensor_ids = list(sensor_ids)
        self.start_us = start_us
        self.period_us = period_us
        self.samples: dict[str, list[bool]] = {sid: [] for sid in self.sensor_ids}

    def append(self, batch: list[PresenceSample]) -> None:
        expect = self.start_us + len(self.samples[self.sensor_ids[0]]) * self.period_us
        for sample in batch:
            if sample.t_us != expect:
                raise MalformedTraceError(
                    f"sample at {sample.t_us}us breaks the {self.period_us}us cadence "
                    f"(expected {expect}us)")
            self.samples[sample.sensor_id].append(sample.occupied)

    def length(self) -> int:
        return len(self.samples[self.sensor_ids[0]])

    def end_us(self) -> int:
        return self.start_us + self.length() * self.period_us

    def series(self, sensor_id: str) -> np.ndarray:
        return np.asarray(self.samples[sensor_id], dtype=bool)


def _runs(series: np.ndarray) -> list[int]:
    """Lengths of maximal True runs, in order."""
    if series.size == 0:
        return []
    padded = np.concatenate(([False], series, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = edges[::2], edges[1::2]
    return list((ends - starts).astype(int))


def _runs_with_clip(series: np.ndarray) -> tuple[int, list[int]]:
    """(run count, durations of runs not clipped by either window edge)."""
    if series.size == 0:
        return 0, []
    padded = np.concatenate(([False], series, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = edges[::2], edges[1::2]
    unclipped = [int(e - s) for s, e in zip(starts, ends)
                 if s > 0 and e < series.size]
    return len(starts), unclipped


def estimate(trace: SensorTrace, window_us: tuple[int, int],
             layout: SensorLayout,
             thresholds: tuple[int, int, int] = DEFAULT_THRESHOLDS) -> CongestionEstimate:
    """Estimate the vehicle count and mean speed seen during one window.

    n = maximal occupied runs on the upstream sensors (both approaches)
      + vehicles still held on the stop-line sensors at the window end.
    Mean speed divides the effective occupancy length by the mean run
    duration; runs clipped by the window edges are excluded from the speed
    estimate unless nothing else is available.
    """
    t0, t1 = window_us
    if t1 <= t0:
        raise ConfigError(f"empty estimation window {window_us}")
    if (t0 - trace.start_us) % trace.period_us:
        raise MalformedTraceError(f"window start {t0}us is off-cadence")
    i0 = (t0 - trace.start_us) // trace.period_us
    i1 = min((t1 - trace.start_us) // trace.period_us, trace.length())
    if i0 < 0 or i0 >= i1:
        raise MalformedTraceError(f"window {window_us} outside trace span")

    n_runs = 0
    durations: list[int] = []
    all_durations: list[int] = []
    for sid in layout.upstream_ids():
        series = trace.series(sid)[i0:i1]
        count, unclipped = _runs_with_clip(series)
        n_runs += count
        durations.extend(unclipped)
        all_durations.extend(_runs(series))
    held = 0
    for sid in layout.stopline_ids():
        series = trace.series(sid)
        if i1 - 1 >= 0 and series[i1 - 1]:
            held += 1

    usable = durations if durations else all_durations
    if usable:
        mean_dur_s = (sum(usable) / len(usable)) * trace.period_us / US_PER_S
        mean_speed = layout.occupancy_len_m / mean_dur_s if mean_dur_s > 0 else 0.0
    else:
        mean_speed = 0.0

    n = n_runs + held
    return CongestionEstimate(n=n, mean_speed_mps=mean_speed,
                              level=classify(n, thresholds), window_us=(t0, t1))


def write_trace(path: str, trace: SensorTrace) -> None:
    """Emit `t_us,sensor_id,occupied` lines at the trace cadence."""
    with open(path, "w", encoding="utf-8") as fh:
        length = trace.length()
        for i in range(length):
            t = trace.start_us + i * trace.period_us
            for sid in trace.sensor_ids:
                fh.write(f"{t},{sid},{1 if trace.samples[sid][i] else 0}\n")


def read_trace(path: str, period_us: int = SAMPLE_PERIOD_US) -> SensorTrace:
    """Parse a trace file, enforcing the fixed cadence per sensor."""
    by_sensor: dict[str, list[tuple[int, bool]]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if lineno == 1 and line.lower().startswith("t_us"):
                continue  # tolerate a header line
            parts = line.split(",")
            if len(parts) != 3:
                raise MalformedTraceError(f"{path}:{lineno}: expected t_us,sensor_id,occupied")
            try:
                t = int(parts[0])
                occ = int(parts[2])
            except ValueError as exc:
                raise MalformedTraceError(f"{path}:{lineno}: {exc}") from exc
            if occ not in (0, 1):
                raise MalformedTraceError(f"{path}:{lineno}: occupied must be 0 or 1")
            sid = parts[1]
            if sid not in by_sensor:
                by_sensor[sid] = []
                order.append(sid)
            by_sensor[sid].append((t, occ == 1))
    if not by_sensor:
        raise MalformedTraceError(f"{path}: no samples")
    lengths = {len(v) for v in by_sensor.values()}
    if len(lengths) != 1:
        raise MalformedTraceError(f"{path}: sensors have unequal sample counts")
    start = by_sensor[order[0]][0][0]
    for sid, rows in by_sensor.items():
        if rows[0][0] != start:
            raise MalformedTraceError(f"{path}: sensor {sid} starts off-sync")
        for i, (t, _) in enumerate(rows):
            if t != start + i * period_us:
                raise MalformedTraceError(
                    f"{path}: sensor {sid} breaks the {period_us}us cadence at {t}us")
    trace = SensorTrace(order, start_us=start, period_us=period_us)
    for sid, rows in by_sensor.items():
        trace.samples[sid] = [occ for _, occ in rows]
    return trace
