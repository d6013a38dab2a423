"""Deterministic discrete-event core: integer-microsecond clock, a heap-ordered
event queue with FIFO tie-breaking, and named reproducible RNG substreams.

All simulation time is int microseconds (``SimTime``). Events with equal fire
times execute in scheduling order, so a run is a pure function of its
configuration and master seed.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

SimTime = int

US_PER_MS = 1_000
US_PER_S = 1_000_000


class ConfigError(ValueError):
    """Invalid configuration or distribution parameters. CLI exit code 2."""


class SimulationFault(RuntimeError):
    """An event handler raised; carries time/target context. CLI exit code 3."""


class MalformedTraceError(ValueError):
    """A sensor trace violates the expected format or sample cadence."""


@dataclass(slots=True)
class Event:
    """A scheduled callback. ``payload`` is opaque to the engine; ``target``
    names the owning module for fault diagnostics."""

    fire_at: SimTime
    seq: int
    target: str
    callback: Callable[["Event"], None]
    payload: object = None
    cancelled: bool = False


class Engine:
    """Event queue with a monotonic clock.

    Ordering is (fire_at, seq): seq increments per schedule() call, so
    same-time events run first-scheduled-first.
    """

    def __init__(self) -> None:
        self.now: SimTime = 0
        self._heap: list[tuple[SimTime, int, Event]] = []
        self._seq = 0
        self._executed = 0

    def schedule(self, fire_at: SimTime, target: str,
                 callback: Callable[[Event], None], payload: object = None) -> Event:
        if fire_at < self.now:
            raise ConfigError(
                f"cannot schedule into the past: fire_at={fire_at} < now={self.now}")
        ev = Event(int(fire_at), self._seq, target, callback, payload)
        self._seq += 1
        heapq.heappush(self._heap, (ev.fire_at, ev.seq, ev))
        return ev

    def cancel(self, ev: Event) -> None:
        if ev.cancelled:
            raise ConfigError(f"event already cancelled: {ev.target} @ {ev.fire_at}")
        if ev.fire_at < self.now or (ev.fire_at == self.now and self._is_executed(ev)):
            raise ConfigError(f"event no longer pending: {ev.target} @ {ev.fire_at}")
        ev.cancelled = True

    @staticmethod
    def _is_executed(ev: Event) -> bool:
        # callback is cleared after execution; cheap pending check
        return ev.callback is None

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def run_until(self, horizon: SimTime) -> int:
        """Execute events with fire_at <= horizon in order; returns the number
        executed by this call. The clock lands exactly on ``horizon``."""
        executed = 0
        heap = self._heap
        while heap and heap[0][0] <= horizon:
            fire_at, _, ev = heapq.heappop(heap)
            if ev.cancelled:
                continue
            self.now = fire_at
            cb = ev.callback
            ev.callback = None
            try:
                cb(ev)
            except Exception as exc:  # abort with diagnostic context
                kind = type(ev.payload).__name__ if ev.payload is not None else "none"
                raise SimulationFault(
                    f"event handler failed at t={fire_at}us target={ev.target} "
                    f"payload={kind}: {exc}") from exc
            executed += 1
        self.now = horizon
        self._executed += executed
        return executed


def _seed_sequence(master_seed: int, stream_id: str) -> np.random.SeedSequence:
    # Name bytes fold into the entropy pool: platform-stable, no hash() involved.
    return np.random.SeedSequence([master_seed & 0xFFFFFFFF, *stream_id.encode("utf-8")])


class RngStream:
    """One named random substream derived from (master_seed, stream_id).

    Same (seed, id) pair -> identical draw sequence on any platform. Separate
    ids are statistically independent, so consumers (mobility, traffic, rach)
    never perturb each other's draws across policy variants.
    """

    def __init__(self, master_seed: int, stream_id: str) -> None:
        if master_seed < 0:
            raise ConfigError(f"master seed must be non-negative, got {master_seed}")
        self.stream_id = stream_id
        self._rng = np.random.default_rng(_seed_sequence(master_seed, stream_id))

    def uniform(self, low: float, high: float) -> float:
        if not (math.isfinite(low) and math.isfinite(high)) or high < low:
            raise ConfigError(f"uniform bounds invalid: [{low}, {high}]")
        return float(self._rng.uniform(low, high))

    def exponential(self, mean: float) -> float:
        if not math.isfinite(mean) or mean <= 0:
            raise ConfigError(f"exponential mean must be > 0, got {mean}")
        return float(self._rng.exponential(mean))

    def bernoulli(self, p: float) -> bool:
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"bernoulli p must lie in [0, 1], got {p}")
        return bool(self._rng.random() < p)

    def discrete_uniform(self, values: Sequence | range | int):
        """Uniform pick from a non-empty set; an int n means range(n)."""
        if isinstance(values, int):
            if values <= 0:
                raise ConfigError(f"discrete_uniform needs n > 0, got {values}")
            return int(self._rng.integers(values))
        if len(values) == 0:
            raise ConfigError("discrete_uniform over an empty set")
        if isinstance(values, range):
            return int(values[int(self._rng.integers(len(values)))])
        return values[int(self._rng.integers(len(values)))]

    # Batched forms: same distributions, same stream state, one consume each.
    def uniform_block(self, n: int, low: float, high: float) -> np.ndarray:
        if high < low:
            raise ConfigError(f"uniform bounds invalid: [{low}, {high}]")
        return self._rng.uniform(low, high, size=n)

    def exponential_block(self, n: int, mean: float) -> np.ndarray:
        if mean <= 0:
            raise ConfigError(f"exponential mean must be > 0, got {mean}")
        return self._rng.exponential(mean, size=n)

    def integers_block(self, n: int, high: int) -> np.ndarray:
        return self._rng.integers(high, size=n)


class StreamRegistry:
    """Hands out one memoized RngStream per name for a given master seed."""

    def __init__(self, master_seed: int) -> None:
        self.master_seed = master_seed
        self._streams: dict[str, RngStream] = {}

    def stream(self, stream_id: str) -> RngStream:
        st = self._streams.get(stream_id)
        if st is None:
            st = RngStream(self.master_seed, stream_id)
            self._streams[stream_id] = st
        return st

    def __iter__(self) -> Iterator[str]:
        return iter(self._streams)
