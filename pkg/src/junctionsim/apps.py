"""Traffic workloads on the cell and the junction-local relay overlay.

Two traffic classes share the carrier. Human-type (HT) endpoints carry
bidirectional Poisson packet streams: a fixed set of static users inside the
coverage disc, plus (scenario 2) one passenger device per quarter of the
vehicles. Machine-type (MT) endpoints are the vehicles themselves, sending
periodic uplink reports and receiving periodic downlink commands at a
per-vehicle random phase.

The relay overlay, when enabled by the network policy, elects the head of the
longer stopped queue as a concentrator. Stopped vehicles near it hand their
uplink reports over the side channel; the concentrator bundles them onto its
own cellular uplink with an encapsulation overhead. Downlink for members rides
the concentrator's cellular link and hops the side channel on arrival. Moving
vehicles always use the cell directly.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, RngStream, SimTime, US_PER_MS, US_PER_S
from .mobility import Mobility, Vehicle, vehicle_distance_m
from .radio import Flow, LinkModel, PfScheduler, RachController, SideChannel
from .sensing import target_population

HT = "HT"
MT = "MT"
DL = "dl"
UL = "ul"


def planned_ht_population(level, static_users: int = 30,
                          passenger_prob: float = 0.25) -> int:
    """Planned human-type census at a congestion level.

    The static population plus the expected passenger complement of the
    level's vehicle target (one passenger per vehicle with the given
    probability, rounded to the nearest whole user).
    """
    return static_users + round(passenger_prob * target_population(level))


@dataclass
class HtConfig:
    size_bytes: int = 1000
    static_users: int = 30
    dl_mean_ms: float = 10.0
    ul_mean_ms: float = 20.0

    def validate(self) -> None:
        if self.size_bytes <= 0 or self.static_users < 0:
            raise ConfigError("ht sizes and counts must be non-negative")
        if self.dl_mean_ms <= 0 or self.ul_mean_ms <= 0:
            raise ConfigError("ht inter-arrival means must be positive")


@dataclass
class MtConfig:
    enabled: bool = True
    size_bytes: int = 800
    ul_period_ms: int = 100
    dl_period_s: float = 1.0
    overhead_bytes: int = 20

    def validate(self) -> None:
        if self.size_bytes <= 0 or self.overhead_bytes < 0:
            raise ConfigError("mt sizes must be positive")
        if self.ul_period_ms <= 0 or self.dl_period_s <= 0:
            raise ConfigError("mt periods must be positive")


class _UnitExpCache:
    """Amortizes scalar exponential draws through block generation."""

    __slots__ = ("stream", "buf", "i")

    def __init__(self, stream: RngStream) -> None:
        self.stream = stream
        self.buf: list[float] = []
        self.i = 0

    def draw(self) -> float:
        if self.i >= len(self.buf):
            self.buf = self.stream.exponential_block(4096, 1.0).tolist()
            self.i = 0
        v = self.buf[self.i]
        self.i += 1
        return v


class StaticHtWorkload:
    """Fixed HT population with pre-generated Poisson arrival schedules.

    All arrival times for the whole horizon are drawn up front per user and
    merged into one time-ordered schedule per direction, so per-TTI ingestion
    is a pointer walk.
    """

    def __init__(self, cfg: HtConfig, link: LinkModel, dl_sched: PfScheduler,
                 ul_sched: PfScheduler, rach: RachController, collector,
                 traffic: RngStream, placement: RngStream, node_ids,
                 horizon_us: SimTime, coverage_m: float = 500.0) -> None:
        cfg.validate()
        self.cfg = cfg
        self.users: list[tuple[int, float, Flow, Flow]] = []
        dl_sink = collector.make_sink(HT, DL, cfg.size_bytes * 8)
        ul_sink = collector.make_sink(HT, UL, cfg.size_bytes * 8)
        dl_drop = collector.make_drop_sink(HT, DL)
        ul_drop = collector.make_drop_sink(HT, UL)
        self._gen_dl = collector.gen_bins(HT, DL)
        self._gen_ul = collector.gen_bins(HT, UL)

        per_user_dl: list[np.ndarray] = []
        per_user_ul: list[np.ndarray] = []
        for _ in range(cfg.static_users):
            node = next(node_ids)
            # uniform over the disc: r = R * sqrt(u)
            dist = coverage_m * float(np.sqrt(placement.uniform(0.0, 1.0)))
            fdl = dl_sched.new_flow(node, HT, cfg.size_bytes, dl_sink, dl_drop)
            ful = ul_sched.new_flow(node, HT, cfg.size_bytes, ul_sink, ul_drop)
            fdl.set_rate(link.dl_rate_per_rb(dist))
            s1 = link.ul_sinr1_db(dist)
            ful.set_rate(link.ul_rate_bits(s1, 1), s1)
            rach.register(node, ful)
            self.users.append((node, dist, fdl, ful))
            per_user_dl.append(_poisson_times(traffic, cfg.dl_mean_ms * US_PER_MS, horizon_us))
            per_user_ul.append(_poisson_times(traffic, cfg.ul_mean_ms * US_PER_MS, horizon_us))

        self._dl_times, dl_idx = _merge_schedules(per_user_dl)
        self._dl_flows = [self.users[i][2] for i in dl_idx]
        self._ul_times, ul_idx = _merge_schedules(per_user_ul)
        self._ul_flows = [self.users[i][3] for i in ul_idx]
        self._dl_ptr = 0
        self._ul_ptr = 0
        self._dl_sched = dl_sched
        self._ul_sched = ul_sched
        self._rach = rach

    def ingest(self, t_us: SimTime) -> None:
        """Enqueue every arrival strictly before t_us (the TTI about to run)."""
        times = self._dl_times
        flows = self._dl_flows
        i = self._dl_ptr
        n = len(times)
        bl = self._dl_sched.backlogged
        gen = self._gen_dl
        while i < n and times[i] < t_us:
            created = times[i]
            f = flows[i]
            f.queue.append(created)
            f.backlog_bits += f.size_bits
            if f not in bl:
                bl[f] = None
            gen[created // US_PER_S] += 1
            i += 1
        self._dl_ptr = i

        times = self._ul_times
        flows = self._ul_flows
        i = self._ul_ptr
        n = len(times)
        bl = self._ul_sched.backlogged
        gen = self._gen_ul
        rach = self._rach
        while i < n and times[i] < t_us:
            created = times[i]
            f = flows[i]
            f.queue.append(created)
            f.backlog_bits += f.size_bits
            if f.blocked:
                rach.request(f.node, created)
            else:
                if f not in bl:
                    bl[f] = None
                rach.note_ul_activity(f.node, created)
            gen[created // US_PER_S] += 1
            i += 1
        self._ul_ptr = i


def _poisson_times(stream: RngStream, mean_us: float, horizon_us: SimTime) -> np.ndarray:
    parts = []
    total = 0.0
    est = max(64, int(horizon_us / mean_us * 1.1) + 32)
    while total < horizon_us:
        chunk = stream.exponential_block(est, mean_us)
        parts.append(chunk)
        total += float(chunk.sum())
        est = 256
    times = np.cumsum(np.concatenate(parts))
    return times[times < horizon_us].astype(np.int64)


def _merge_schedules(per_user: list[np.ndarray]):
    """Merge per-user arrival arrays into time order; returns (times, user_idx)."""
    if not per_user or sum(len(a) for a in per_user) == 0:
        return [], []
    times = np.concatenate(per_user)
    idx = np.concatenate([np.full(len(a), i, dtype=np.int32)
                          for i, a in enumerate(per_user)])
    order = np.argsort(times, kind="stable")
    return times[order].tolist(), idx[order].tolist()


class VehRec:
    """Per-vehicle network endpoint: MT flows plus optional passenger device."""

    __slots__ = ("vid", "node", "vehicle", "mt_ul", "mt_dl", "alive",
                 "pax_node", "pax_dl", "pax_ul")

    def __init__(self, vid: int, node: int, vehicle: Vehicle) -> None:
        self.vid = vid
        self.node = node
        self.vehicle = vehicle
        self.mt_ul: Flow | None = None
        self.mt_dl: Flow | None = None
        self.alive = True
        self.pax_node = -1
        self.pax_dl: Flow | None = None
        self.pax_ul: Flow | None = None


_K_MT_UL = 0
_K_MT_DL = 1
_K_PAX_DL = 2
_K_PAX_UL = 3


class RecurrentSources:
    """Heap of upcoming arrivals for dynamic endpoints (vehicles, passengers).

    Entries for despawned endpoints are dropped lazily when popped.
    """

    def __init__(self, mt_cfg: MtConfig, ht_cfg: HtConfig,
                 dl_sched: PfScheduler, ul_sched: PfScheduler,
                 rach: RachController, collector, router,
                 mt_stream: RngStream, pax_stream: RngStream) -> None:
        self.mt_cfg = mt_cfg
        self.ht_cfg = ht_cfg
        self.dl_sched = dl_sched
        self.ul_sched = ul_sched
        self.rach = rach
        self.collector = collector
        self.router = router
        self.mt_stream = mt_stream
        self._pax_exp = _UnitExpCache(pax_stream)
        self.heap: list[tuple[int, int, int, VehRec]] = []
        self._seq = 0
        self._gen = {
            _K_MT_UL: collector.gen_bins(MT, UL),
            _K_MT_DL: collector.gen_bins(MT, DL),
            _K_PAX_DL: collector.gen_bins(HT, DL),
            _K_PAX_UL: collector.gen_bins(HT, UL),
        }
        self._ul_period_us = mt_cfg.ul_period_ms * US_PER_MS
        self._dl_period_us = int(mt_cfg.dl_period_s * US_PER_S)
        self._pax_dl_mean_us = ht_cfg.dl_mean_ms * US_PER_MS
        self._pax_ul_mean_us = ht_cfg.ul_mean_ms * US_PER_MS

    def _push(self, t: int, kind: int, rec: VehRec) -> None:
        self._seq += 1
        heapq.heappush(self.heap, (t, self._seq, kind, rec))

    def add_vehicle(self, rec: VehRec, now_us: SimTime) -> None:
        if not self.mt_cfg.enabled:
            return
        phase = rec.vehicle.mt_phase_us
        first_ul = now_us + (phase - now_us) % self._ul_period_us
        dl_phase = int(self.mt_stream.uniform(0, self._dl_period_us))
        first_dl = now_us + (dl_phase - now_us) % self._dl_period_us
        self._push(first_ul, _K_MT_UL, rec)
        self._push(first_dl, _K_MT_DL, rec)

    def add_passenger(self, rec: VehRec, now_us: SimTime) -> None:
        self._push(now_us + int(self._pax_exp.draw() * self._pax_dl_mean_us),
                   _K_PAX_DL, rec)
        self._push(now_us + int(self._pax_exp.draw() * self._pax_ul_mean_us),
                   _K_PAX_UL, rec)

    def _enqueue_direct_ul(self, f: Flow, node: int, created: int) -> None:
        f.queue.append(created)
        f.backlog_bits += f.size_bits
        if f.blocked:
            self.rach.request(node, created)
        else:
            bl = self.ul_sched.backlogged
            if f not in bl:
                bl[f] = None
            self.rach.note_ul_activity(node, created)

    def _enqueue_direct_dl(self, f: Flow, created: int) -> None:
        f.queue.append(created)
        f.backlog_bits += f.size_bits
        bl = self.dl_sched.backlogged
        if f not in bl:
            bl[f] = None

    def materialize(self, t_us: SimTime) -> None:
        """Generate and enqueue every dynamic arrival strictly before t_us."""
        h = self.heap
        router = self.router
        gen = self._gen
        while h and h[0][0] < t_us:
            t_arr, _, kind, rec = heapq.heappop(h)
            if not rec.alive:
                continue
            if kind == _K_MT_UL:
                gen[kind][t_arr // US_PER_S] += 1
                if not router.route_ul(rec, t_arr):
                    self._enqueue_direct_ul(rec.mt_ul, rec.node, t_arr)
                self._push(t_arr + self._ul_period_us, kind, rec)
            elif kind == _K_MT_DL:
                gen[kind][t_arr // US_PER_S] += 1
                if not router.route_dl(rec, t_arr):
                    self._enqueue_direct_dl(rec.mt_dl, t_arr)
                self._push(t_arr + self._dl_period_us, kind, rec)
            elif kind == _K_PAX_DL:
                gen[kind][t_arr // US_PER_S] += 1
                self._enqueue_direct_dl(rec.pax_dl, t_arr)
                self._push(t_arr + int(self._pax_exp.draw() * self._pax_dl_mean_us),
                           kind, rec)
            else:
                gen[kind][t_arr // US_PER_S] += 1
                self._enqueue_direct_ul(rec.pax_ul, rec.pax_node, t_arr)
                self._push(t_arr + int(self._pax_exp.draw() * self._pax_ul_mean_us),
                           kind, rec)


class AggregationRouter:
    """Queue-head concentrator relay for stopped machine-type endpoints.

    Membership requires the vehicle to be stopped, within side-channel range
    of the concentrator, and past a per-member association delay. The
    concentrator is sticky: it keeps the role until it moves or despawns.
    Relay flows are re-homed to each newly elected concentrator; traffic in
    flight completes through the current one.
    """

    def __init__(self, mt_cfg: MtConfig, link: LinkModel,
                 dl_sched: PfScheduler, ul_sched: PfScheduler,
                 rach: RachController, side: SideChannel, collector,
                 registry: dict[int, VehRec], mobility: Mobility,
                 assoc_delay_ms: int = 200) -> None:
        self.mt_cfg = mt_cfg
        self.link = link
        self.dl_sched = dl_sched
        self.ul_sched = ul_sched
        self.rach = rach
        self.side = side
        self.collector = collector
        self.registry = registry
        self.mobility = mobility
        self.assoc_us = assoc_delay_ms * US_PER_MS
        self.active = False
        self.conc: VehRec | None = None
        self.members: dict[int, int] = {}      # vid -> association effective time
        self.bundle: list[tuple[int, int]] = []  # (created_us, ready_us)
        self.meta: list[int] = []              # member vid per relay DL packet
        self._meta_head = 0
        relay_bytes = mt_cfg.size_bytes + mt_cfg.overhead_bytes
        payload_bits = mt_cfg.size_bytes * 8
        ul_drop = collector.make_drop_sink(MT, UL)
        self.relay_ul = ul_sched.new_flow(-1, MT, relay_bytes,
                                          collector.make_sink(MT, UL, payload_bits),
                                          ul_drop)
        self.relay_ul.relay = True
        self.relay_dl = dl_sched.new_flow(-1, MT, relay_bytes,
                                          self._on_relay_dl,
                                          collector.make_drop_sink(MT, DL))
        self.relay_dl.relay = True
        self._payload_bits = payload_bits
        self.relayed_ul = 0
        self.relayed_dl = 0

    # -- policy hooks --------------------------------------------------------
    def enable(self, now_us: SimTime) -> None:
        self.active = True
        self.update(now_us)

    def disable(self, now_us: SimTime) -> None:
        """Stop routing new traffic through the relay; in-flight completes."""
        self.active = False
        self.members.clear()

    # -- election and membership ----------------------------------------------
    def update(self, now_us: SimTime) -> None:
        conc = self.conc
        if conc is not None and (not conc.alive or conc.vehicle.moving):
            self._drop_concentrator()
            conc = None
        if self.active and conc is None:
            conc = self._elect(now_us)
        if conc is None:
            return
        # refresh relay link rates from the concentrator's position
        d = abs(conc.vehicle.pos)
        self.relay_dl.set_rate(self.link.dl_rate_per_rb(d))
        s1 = self.link.ul_sinr1_db(d)
        self.relay_ul.set_rate(self.link.ul_rate_bits(s1, 1), s1)
        if not self.active:
            return
        members = self.members
        fresh: dict[int, int] = {}
        cx, cy = (conc.vehicle.pos, 0.0) if conc.vehicle.road == "A" else (0.0, conc.vehicle.pos)
        rng2 = self.side.range_m * self.side.range_m
        for road in ("A", "B"):
            for v in self.mobility.vehicles_by_road(road):
                if v.moving or v.vid == conc.vid or v.vid not in self.registry:
                    continue
                x, y = (v.pos, 0.0) if road == "A" else (0.0, v.pos)
                dx = x - cx
                dy = y - cy
                if dx * dx + dy * dy <= rng2:
                    fresh[v.vid] = members.get(v.vid, now_us + self.assoc_us)
        self.members = fresh

    def _elect(self, now_us: SimTime) -> VehRec | None:
        qa = self.mobility.queue_head("A")
        qb = self.mobility.queue_head("B")
        lengths = self.mobility.queue_lengths()
        head = None
        if qa is not None and qb is not None:
            head = qa if lengths["A"] >= lengths["B"] else qb
        else:
            head = qa or qb
        if head is None:
            return None
        rec = self.registry.get(head.vid)
        if rec is None:
            return None
        self.conc = rec
        self.members = {}
        self.relay_ul.node = rec.node
        self.rach.attach_flow(rec.node, self.relay_ul)
        self.relay_dl.node = rec.node
        return rec

    def _drop_concentrator(self) -> None:
        if self.conc is not None:
            if self.conc.node in self.rach.node_flows:
                self.rach.detach_flow(self.conc.node, self.relay_ul)
            self.conc = None
        self.members.clear()
        self.ul_sched.block(self.relay_ul)
        self.relay_ul.node = -1
        self.relay_dl.node = -1

    def on_despawn(self, vid: int) -> None:
        if self.conc is not None and self.conc.vid == vid:
            self._drop_concentrator()
        else:
            self.members.pop(vid, None)

    def _is_member(self, rec: VehRec, t_us: SimTime) -> bool:
        if not self.active or self.conc is None:
            return False
        eff = self.members.get(rec.vid)
        return eff is not None and eff <= t_us

    # -- data path -------------------------------------------------------------
    def route_ul(self, rec: VehRec, t_us: SimTime) -> bool:
        """Absorb an uplink report into the side channel; False means go direct."""
        if not self._is_member(rec, t_us):
            return False
        done = self.side.send(self.mt_cfg.size_bytes, t_us)
        self.bundle.append((t_us, done))
        self.relayed_ul += 1
        return True

    def route_dl(self, rec: VehRec, t_us: SimTime) -> bool:
        if not self._is_member(rec, t_us):
            return False
        self.dl_sched.enqueue(self.relay_dl, t_us)
        self.meta.append(rec.vid)
        self.relayed_dl += 1
        return True

    def flush(self, now_us: SimTime) -> None:
        """Move side-channel-complete reports into the concentrator's uplink."""
        if not self.bundle:
            return
        ready = [c for c, r in self.bundle if r <= now_us]
        if not ready:
            return
        self.bundle = [(c, r) for c, r in self.bundle if r > now_us]
        if self.conc is None or not self.conc.alive:
            # nowhere to forward from: reports are lost with the concentrator
            self.relay_ul.drop_sink(len(ready), now_us, "relay_orphaned")
            return
        self.ul_sched.enqueue_many(self.relay_ul, ready)
        self.rach.note_ul_activity(self.conc.node, now_us)
        if not self.rach.is_connected(self.conc.node):
            self.rach.request(self.conc.node, now_us)

    def _on_relay_dl(self, created: int, delivered: int) -> None:
        i = self._meta_head
        vid = self.meta[i]
        self._meta_head = i + 1
        if i + 1 >= 4096 and (i + 1) * 2 >= len(self.meta):
            del self.meta[:i + 1]
            self._meta_head = 0
        rec = self.registry.get(vid)
        final = delivered
        if (rec is not None and rec.alive and self.conc is not None
                and self.conc.alive):
            d = vehicle_distance_m(rec.vehicle, self.conc.vehicle)
            if self.side.in_range(d):
                final = self.side.send(self.mt_cfg.size_bytes, delivered)
        self.collector.record(MT, DL, created, final, self._payload_bits)

    def inflight(self) -> int:
        return len(self.bundle)


class NullRouter:
    """Relay overlay absent (machine-type traffic disabled): all direct.

    enable/disable still track the policy state so adaptive runs work, but
    nothing is ever routed sideways.
    """

    def __init__(self) -> None:
        self.active = False
        self.relayed_ul = 0
        self.relayed_dl = 0

    def route_ul(self, rec, t_us) -> bool:
        return False

    def route_dl(self, rec, t_us) -> bool:
        return False

    def flush(self, now_us) -> None:
        pass

    def update(self, now_us) -> None:
        pass

    def on_despawn(self, vid) -> None:
        pass

    def enable(self, now_us) -> None:
        self.active = True

    def disable(self, now_us) -> None:
        self.active = False

    def inflight(self) -> int:
        return 0
