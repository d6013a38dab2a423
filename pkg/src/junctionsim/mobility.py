"""Junction mobility: two one-way approaches crossing at a signalized
junction, constant-speed vehicles, queue formation and front-first discharge,
and population-regulated Poisson spawning per congestion level.

Along-road coordinates run from -coverage_radius (entry) through the stop
line (just before the junction center at 0) to +coverage_radius (despawn).
Road A lies on the x axis, road B on the y axis.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, RngStream, SimTime, US_PER_MS, US_PER_S
from .sensing import CongestionLevel, target_population

ROADS = ("A", "B")


@dataclass
class LightConfig:
    green_s: float = 60.0
    red_s: float = 30.0
    phase0_green_road: str = "A"

    def validate(self) -> None:
        if self.green_s <= 0 or self.red_s <= 0:
            raise ConfigError("light durations must be positive")
        if self.phase0_green_road not in ROADS:
            raise ConfigError(f"phase0_green_road must be one of {ROADS}")


class TrafficLight:
    """Fixed-cycle two-phase light; exactly one road is green at any instant."""

    def __init__(self, cfg: LightConfig) -> None:
        cfg.validate()
        self.cfg = cfg
        self.green_us = int(cfg.green_s * US_PER_S)
        self.red_us = int(cfg.red_s * US_PER_S)
        self.cycle_us = self.green_us + self.red_us

    def is_green(self, road: str, t_us: SimTime) -> bool:
        if road not in ROADS:
            raise ConfigError(f"unknown road {road!r}")
        phase = t_us % self.cycle_us
        first_green = phase < self.green_us
        return first_green if road == self.cfg.phase0_green_road else not first_green

    def next_change_us(self, t_us: SimTime) -> SimTime:
        phase = t_us % self.cycle_us
        if phase < self.green_us:
            return t_us + (self.green_us - phase)
        return t_us + (self.cycle_us - phase)


class CongestionSchedule:
    """Piecewise-constant scheduled congestion level over the run."""

    def __init__(self, segments: list[tuple[SimTime, CongestionLevel]]) -> None:
        if not segments:
            raise ConfigError("schedule needs at least one segment")
        if segments[0][0] != 0:
            raise ConfigError("schedule must start at t=0")
        starts = [s for s, _ in segments]
        if starts != sorted(starts) or len(set(starts)) != len(starts):
            raise ConfigError("schedule segment starts must strictly increase")
        self.segments = segments
        self._starts = starts

    def level_at(self, t_us: SimTime) -> CongestionLevel:
        idx = bisect.bisect_right(self._starts, t_us) - 1
        return self.segments[idx][1]

    @classmethod
    def constant(cls, level: CongestionLevel) -> "CongestionSchedule":
        return cls([(0, level)])


class Vehicle:
    __slots__ = ("vid", "road", "pos", "moving", "entered_at", "release_at",
                 "passenger", "mt_phase_us")

    def __init__(self, vid: int, road: str, pos: float, entered_at: SimTime,
                 passenger: bool, mt_phase_us: int) -> None:
        self.vid = vid
        self.road = road
        self.pos = pos
        self.moving = True
        self.entered_at = entered_at
        self.release_at = 0          # earliest restart time when queued
        self.passenger = passenger
        self.mt_phase_us = mt_phase_us


@dataclass
class MobilityConfig:
    speed_mps: float = 5.0
    headway_m: float = 7.0
    vehicle_len_m: float = 4.5
    startup_delay_s: float = 1.0
    min_spacing_ms: int = 50
    coverage_radius_m: float = 500.0
    stop_line_m: float = -5.0
    step_ms: int = 100
    passenger_prob: float = 0.25
    population_margin: float = 0.95
    spawn_sojourn_s: float = 100.0   # aggressive base rate; the cap regulates

    def validate(self) -> None:
        if self.speed_mps <= 0:
            raise ConfigError("vehicle speed must be positive")
        if self.headway_m <= self.vehicle_len_m:
            raise ConfigError("headway must exceed vehicle length")
        if not 0 <= self.passenger_prob <= 1:
            raise ConfigError("passenger probability must lie in [0, 1]")
        if not 0 < self.population_margin <= 1:
            raise ConfigError("population margin must lie in (0, 1]")


class _RoadState:
    __slots__ = ("name", "vehicles", "next_attempt_us", "last_release_us",
                 "was_green", "spawned", "balked")

    def __init__(self, name: str) -> None:
        self.name = name
        self.vehicles: list[Vehicle] = []   # ordered front (max pos) -> back
        self.next_attempt_us = 0
        self.last_release_us = 0
        self.was_green = False
        self.spawned = 0
        self.balked = 0


class Mobility:
    """Owns vehicles on both approaches and the spawn regulator.

    Spawning is Poisson per approach with the level's population split evenly
    between roads; a per-road ceiling just under the target keeps per-cycle
    counts inside the level's classification band, and a 50 ms floor bounds
    inter-arrival spacing.
    """

    def __init__(self, cfg: MobilityConfig, light: TrafficLight,
                 schedule: CongestionSchedule, stream: RngStream,
                 scenario2: bool, on_spawn=None, on_despawn=None) -> None:
        cfg.validate()
        self.cfg = cfg
        self.light = light
        self.schedule = schedule
        self.stream = stream
        self.scenario2 = scenario2
        self.on_spawn = on_spawn
        self.on_despawn = on_despawn
        self.roads = {name: _RoadState(name) for name in ROADS}
        self._next_vid = 0
        self._startup_us = int(cfg.startup_delay_s * US_PER_S)
        self.total_spawned = 0
        self.total_despawned = 0

    # -- population targets ------------------------------------------------
    def road_target(self, t_us: SimTime) -> float:
        return target_population(self.schedule.level_at(t_us)) / len(ROADS)

    def road_cap(self, t_us: SimTime) -> int:
        return max(1, round(self.cfg.population_margin * self.road_target(t_us)))

    def in_coverage_count(self) -> int:
        return sum(len(r.vehicles) for r in self.roads.values())

    def moving_count(self) -> int:
        return sum(1 for r in self.roads.values() for v in r.vehicles if v.moving)

    def positions_by_road(self) -> dict[str, np.ndarray]:
        return {name: np.array([v.pos for v in r.vehicles], dtype=float)
                for name, r in self.roads.items()}

    def vehicles_by_road(self, road: str) -> list[Vehicle]:
        return self.roads[road].vehicles

    def all_vehicles(self):
        for name in ROADS:
            yield from self.roads[name].vehicles

    # -- lifecycle ----------------------------------------------------------
    def _make_vehicle(self, road: str, pos: float, now_us: SimTime) -> Vehicle:
        passenger = self.scenario2 and self.stream.bernoulli(self.cfg.passenger_prob)
        phase = int(self.stream.uniform(0, 100_000))
        v = Vehicle(self._next_vid, road, pos, now_us, passenger, phase)
        self._next_vid += 1
        return v

    def seed_initial_population(self, mt_enabled: bool = True) -> None:
        """Pre-place the steady population at t=0: free-flowing, evenly spaced
        with jitter, so pinned-level runs start near their operating point."""
        cfg = self.cfg
        span = 2 * cfg.coverage_radius_m - 10.0
        for name in ROADS:
            road = self.roads[name]
            cap = self.road_cap(0)
            spacing = span / cap
            jitter_max = max(0.0, min(2.0, (spacing - cfg.headway_m - 1.0) / 2))
            pos = cfg.coverage_radius_m - 10.0
            for k in range(cap):
                jitter = self.stream.uniform(-jitter_max, jitter_max) if jitter_max else 0.0
                v = self._make_vehicle(name, pos - k * spacing + jitter, 0)
                road.vehicles.append(v)
                road.spawned += 1
                self.total_spawned += 1
                if self.on_spawn:
                    self.on_spawn(v)
            # first spawn attempt
            road.next_attempt_us = self._draw_gap(name, 0)

    def _draw_gap(self, road_name: str, t_us: SimTime) -> SimTime:
        mean_us = self.cfg.spawn_sojourn_s * US_PER_S / max(self.road_target(t_us), 0.5)
        gap = self.stream.exponential(mean_us)
        floor = self.cfg.min_spacing_ms * US_PER_MS
        return t_us + max(floor, int(gap))

    # -- dynamics -----------------------------------------------------------
    def step(self, now_us: SimTime) -> None:
        """Advance one mobility step ending at now_us."""
        cfg = self.cfg
        dist = cfg.speed_mps * cfg.step_ms * US_PER_MS / US_PER_S
        stop_line = cfg.stop_line_m
        headway = cfg.headway_m
        edge = cfg.coverage_radius_m

        for name in ROADS:
            road = self.roads[name]
            green = self.light.is_green(name, now_us)
            if green and not road.was_green:
                self._assign_releases(road, now_us)
            road.was_green = green

            vehicles = road.vehicles
            despawned = []
            ahead: Vehicle | None = None
            for v in vehicles:
                if not v.moving:
                    if green and now_us >= v.release_at:
                        v.moving = True
                    else:
                        ahead = v
                        continue
                tentative = v.pos + dist
                limit = None
                if v.pos <= stop_line:
                    if not green and tentative > stop_line:
                        limit = stop_line
                    if ahead is not None and not ahead.moving:
                        block = ahead.pos - headway
                        if limit is None or block < limit:
                            limit = block
                if limit is not None and tentative >= limit:
                    if v.pos < limit:
                        v.pos = limit
                    v.moving = False
                    if green:
                        # joined a draining queue: chain behind the last release
                        base = max(now_us, road.last_release_us)
                        v.release_at = base + self._startup_us
                        road.last_release_us = v.release_at
                    else:
                        v.release_at = 0
                else:
                    v.pos = tentative
                    if v.pos > edge:
                        despawned.append(v)
                ahead = v
            if despawned:
                for v in despawned:
                    vehicles.remove(v)
                    self.total_despawned += 1
                    if self.on_despawn:
                        self.on_despawn(v, now_us)
            self._spawn_step(road, now_us)

    def _assign_releases(self, road: _RoadState, onset_us: SimTime) -> None:
        # front-first discharge: k-th queued vehicle restarts k startup delays in
        k = 0
        last = onset_us
        for v in road.vehicles:
            if not v.moving:
                k += 1
                last = onset_us + k * self._startup_us
                v.release_at = last
        road.last_release_us = last

    def _spawn_step(self, road: _RoadState, now_us: SimTime) -> None:
        cfg = self.cfg
        cap = self.road_cap(now_us)
        entry = -cfg.coverage_radius_m
        while road.next_attempt_us <= now_us:
            attempt_at = road.next_attempt_us
            road.next_attempt_us = self._draw_gap(road.name, attempt_at)
            if len(road.vehicles) >= cap:
                road.balked += 1
                continue
            back = road.vehicles[-1] if road.vehicles else None
            if back is not None and back.pos - cfg.headway_m < entry:
                road.balked += 1
                continue  # entry cell blocked; arrival balks
            v = self._make_vehicle(road.name, entry, now_us)
            road.vehicles.append(v)
            road.spawned += 1
            self.total_spawned += 1
            if self.on_spawn:
                self.on_spawn(v)

    def queue_lengths(self) -> dict[str, int]:
        return {name: sum(1 for v in r.vehicles if not v.moving)
                for name, r in self.roads.items()}

    def queue_head(self, road: str) -> Vehicle | None:
        for v in self.roads[road].vehicles:
            if not v.moving:
                return v
        return None


def vehicle_xy(v: Vehicle) -> tuple[float, float]:
    """Plane coordinates: road A runs along x, road B along y."""
    return (v.pos, 0.0) if v.road == "A" else (0.0, v.pos)


def vehicle_distance_m(a: Vehicle, b: Vehicle) -> float:
    ax, ay = vehicle_xy(a)
    bx, by = vehicle_xy(b)
    return float(np.hypot(ax - bx, ay - by))
