"""Abstract cellular cell: log-distance link budget, truncated-Shannon rate
mapping, per-TTI proportional-fair scheduling on both carriers, contention
random access with backoff, and a shared-medium side channel.

SINR equals SNR here: no fading, no interference, isotropic antennas. The TTI
(scheduling epoch) is 1 ms; rates are expressed in bits per RB per TTI.
"""
from __future__ import annotations

import math
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, RngStream, US_PER_MS, US_PER_S

LIGHT_SPEED = 299_792_458.0
# 20*log10(4*pi/c): free-space constant so FSPL(1 m) = 20log10(f) + this
_FSPL_1M = 20.0 * math.log10(4.0 * math.pi / LIGHT_SPEED)
THERMAL_NOISE_DBM_HZ = -174.0

TTI_US = 1 * US_PER_MS
TTI_S = 1e-3

_LOG10K = [0.0] + [10.0 * math.log10(k) for k in range(1, 101)]
_LOG10K[0] = 0.0  # index by RB count, k >= 1


def pathloss_db(distance_m: float, carrier_hz: float, exponent: float = 3.0) -> float:
    """Log-distance pathloss anchored at free space for a 1 m reference.

    Distances under 1 m clamp to the reference distance.
    """
    if carrier_hz <= 0:
        raise ConfigError(f"carrier frequency must be positive, got {carrier_hz}")
    d = distance_m if distance_m > 1.0 else 1.0
    fspl_1m = 20.0 * math.log10(carrier_hz) + _FSPL_1M
    return fspl_1m + 10.0 * exponent * math.log10(d)


def per_rb_rate_bits(sinr_db: float, eta_max: float = 5.55,
                     sinr_floor_db: float = -6.0,
                     rb_bandwidth_hz: float = 180_000.0) -> float:
    """Truncated-Shannon bits per RB per TTI; zero below the SINR floor."""
    if sinr_db < sinr_floor_db:
        return 0.0
    eff = 0.75 * math.log2(1.0 + 10.0 ** (sinr_db / 10.0))
    if eff > eta_max:
        eff = eta_max
    return eff * rb_bandwidth_hz * TTI_S


@dataclass
class CellConfig:
    """Cell-wide radio constants. rb_count is the live policy knob (25 or 50)."""

    rb_count: int = 25
    rb_bandwidth_hz: float = 180_000.0
    dl_carrier_hz: float = 945e6
    ul_carrier_hz: float = 900e6
    enb_tx_power_dbm: float = 43.0
    enb_noise_figure_db: float = 3.0
    ue_tx_power_dbm: float = 23.0
    ue_noise_figure_db: float = 9.0
    eta_max: float = 5.55
    sinr_floor_db: float = -6.0
    pathloss_exponent: float = 3.0
    pf_t_avg_s: float = 1.0

    def validate(self) -> None:
        if self.rb_count <= 0:
            raise ConfigError(f"rb_count must be positive, got {self.rb_count}")
        if self.pf_t_avg_s <= 0:
            raise ConfigError("pf.t_avg_s must be positive")


class LinkModel:
    """Per-node SINR and rate helpers for both carriers.

    DL transmit power is split evenly across the carrier's RBs, so per-RB DL
    SINR depends on the live rb_count. UL power is per-UE: a UE allocated k
    RBs spreads its budget over them (sinr_k = sinr_1 - 10log10 k).
    """

    def __init__(self, cfg: CellConfig) -> None:
        self.cfg = cfg
        self._noise_rb_ue = (THERMAL_NOISE_DBM_HZ
                             + 10.0 * math.log10(cfg.rb_bandwidth_hz)
                             + cfg.ue_noise_figure_db)
        self._noise_rb_enb = (THERMAL_NOISE_DBM_HZ
                              + 10.0 * math.log10(cfg.rb_bandwidth_hz)
                              + cfg.enb_noise_figure_db)
        self.set_rb_count(cfg.rb_count)

    def set_rb_count(self, rb_count: int) -> None:
        if rb_count <= 0:
            raise ConfigError(f"rb_count must be positive, got {rb_count}")
        self.cfg.rb_count = rb_count
        self._dl_tx_rb = self.cfg.enb_tx_power_dbm - 10.0 * math.log10(rb_count)

    def dl_sinr_db(self, distance_m: float) -> float:
        pl = pathloss_db(distance_m, self.cfg.dl_carrier_hz, self.cfg.pathloss_exponent)
        return self._dl_tx_rb - pl - self._noise_rb_ue

    def ul_sinr1_db(self, distance_m: float) -> float:
        pl = pathloss_db(distance_m, self.cfg.ul_carrier_hz, self.cfg.pathloss_exponent)
        return self.cfg.ue_tx_power_dbm - pl - self._noise_rb_enb

    def dl_rate_per_rb(self, distance_m: float) -> float:
        return per_rb_rate_bits(self.dl_sinr_db(distance_m), self.cfg.eta_max,
                                self.cfg.sinr_floor_db, self.cfg.rb_bandwidth_hz)

    def dl_rate_per_rb_vec(self, distances_m: np.ndarray) -> np.ndarray:
        d = np.maximum(distances_m, 1.0)
        pl = (20.0 * math.log10(self.cfg.dl_carrier_hz) + _FSPL_1M
              + 10.0 * self.cfg.pathloss_exponent * np.log10(d))
        sinr = self._dl_tx_rb - pl - self._noise_rb_ue
        eff = np.minimum(self.cfg.eta_max, 0.75 * np.log2(1.0 + 10.0 ** (sinr / 10.0)))
        rate = eff * self.cfg.rb_bandwidth_hz * TTI_S
        rate[sinr < self.cfg.sinr_floor_db] = 0.0
        return rate

    def ul_sinr1_db_vec(self, distances_m: np.ndarray) -> np.ndarray:
        d = np.maximum(distances_m, 1.0)
        pl = (20.0 * math.log10(self.cfg.ul_carrier_hz) + _FSPL_1M
              + 10.0 * self.cfg.pathloss_exponent * np.log10(d))
        return self.cfg.ue_tx_power_dbm - pl - self._noise_rb_enb

    def ul_rate_bits(self, sinr1_db: float, k: int) -> float:
        """Bits served in one TTI by k RBs under the per-UE power split."""
        if k <= 0:
            return 0.0
        sinr_k = sinr1_db - _LOG10K[k if k < len(_LOG10K) else len(_LOG10K) - 1]
        return k * per_rb_rate_bits(sinr_k, self.cfg.eta_max,
                                    self.cfg.sinr_floor_db, self.cfg.rb_bandwidth_hz)



class Flow:
    """One schedulable traffic flow (a node/class/direction tuple).

    Packet queue is a deque of creation timestamps; payload size is constant
    per flow, so bits/packets convert without per-packet objects.
    """

    __slots__ = ("fid", "node", "klass", "direction", "size_bytes", "size_bits",
                 "rate1", "int_rate1", "sinr1", "ul_caps", "is_ul", "rbar",
                 "last_tti", "backlog_bits", "partial_bits", "queue", "blocked",
                 "active", "sink", "drop_sink", "relay")

    def __init__(self, fid: int, node: int, klass: str, direction: str,
                 size_bytes: int, sink, drop_sink) -> None:
        self.fid = fid
        self.node = node
        self.klass = klass
        self.direction = direction
        self.size_bytes = size_bytes
        self.size_bits = size_bytes * 8
        self.rate1 = 0.0          # bits per RB per TTI at k=1
        self.int_rate1 = 0        # int(rate1) when integral, else 0
        self.sinr1 = 0.0          # UL only: k=1 SINR for the power split
        self.ul_caps = None       # UL only: cached multi-RB capacity curve
        self.is_ul = direction == "ul"
        self.rbar = 0.0           # PF average rate, bits/s
        self.last_tti = -1
        self.backlog_bits = 0
        self.partial_bits = 0
        self.queue: deque[int] = deque()
        self.blocked = False      # UL: node has no connection
        self.active = True
        self.sink = sink          # sink(created_us, delivered_us) per packet
        self.drop_sink = drop_sink  # drop_sink(count, t_us, reason)
        self.relay = None         # aggregation bookkeeping, opaque here

    def set_rate(self, rate1: float, sinr1: float = 0.0) -> None:
        self.rate1 = rate1
        self.int_rate1 = int(rate1) if float(rate1).is_integer() else 0
        if sinr1 != self.sinr1:
            self.sinr1 = sinr1
            self.ul_caps = None


class PfScheduler:
    """Greedy per-RB proportional fair over one direction of the carrier.

    Each TTI, RBs go one at a time to the backlogged flow maximizing
    instantaneous_rate / average_rate; since the metric is fixed within a TTI,
    that equals rank-order allocation capped by per-flow backlog need. The
    average-rate recurrence R <- (1-1/T)R + (1/T)*served is applied lazily
    with exact exponents over idle gaps.
    """

    def __init__(self, direction: str, cfg: CellConfig, link: LinkModel,
                 audit: bool = False) -> None:
        self.direction = direction
        self.cfg = cfg
        self.link = link
        self.rb_count = cfg.rb_count
        t_avg_ttis = cfg.pf_t_avg_s / TTI_S
        self._alpha = 1.0 / t_avg_ttis
        self._decay = 1.0 - self._alpha
        self.flows: list[Flow] = []
        self.backlogged: dict[Flow, None] = {}
        self.audit = audit
        self.audit_failures = 0
        self.tti_served_bits = 0  # scratch for callers/tests

    def new_flow(self, node: int, klass: str, size_bytes: int, sink, drop_sink) -> Flow:
        f = Flow(len(self.flows), node, klass, self.direction, size_bytes, sink, drop_sink)
        self.flows.append(f)
        return f

    def set_rb_count(self, rb_count: int) -> None:
        self.rb_count = rb_count

    def enqueue(self, f: Flow, created_us: int, count: int = 1) -> None:
        if not f.active:
            raise ConfigError(f"enqueue on inactive flow {f.fid}")
        q = f.queue
        for _ in range(count):
            q.append(created_us)
        f.backlog_bits += f.size_bits * count
        if not f.blocked and f not in self.backlogged:
            self.backlogged[f] = None

    def enqueue_many(self, f: Flow, created_list) -> None:
        f.queue.extend(created_list)
        f.backlog_bits += f.size_bits * len(created_list)
        if not f.blocked and f.backlog_bits and f not in self.backlogged:
            self.backlogged[f] = None

    def block(self, f: Flow) -> None:
        f.blocked = True
        self.backlogged.pop(f, None)

    def unblock(self, f: Flow) -> None:
        f.blocked = False
        if f.backlog_bits and f.active:
            self.backlogged[f] = None

    def drop_all(self, f: Flow, t_us: int, reason: str) -> int:
        """Drop every queued packet of the flow; returns the count."""
        n = len(f.queue)
        if n:
            f.drop_sink(n, t_us, reason)
        f.queue.clear()
        f.backlog_bits = 0
        f.partial_bits = 0
        self.backlogged.pop(f, None)
        return n

    def deactivate(self, f: Flow, t_us: int, reason: str) -> int:
        dropped = self.drop_all(f, t_us, reason)
        f.active = False
        return dropped

    def allocate(self, tti_idx: int) -> int:
        """Run one TTI; returns RBs used. Deliveries hit flow sinks inline."""
        bl = self.backlogged
        if not bl:
            return 0
        decay = self._decay
        alpha = self._alpha
        prev = tti_idx - 1
        ranked = []
        for f in bl:
            gap = prev - f.last_tti
            if gap > 0:
                f.rbar *= decay ** gap
                f.last_tti = prev
            r = f.rbar
            ranked.append((-(f.rate1 / (r if r > 1.0 else 1.0)), f.fid, f))
        if len(ranked) > 1:
            ranked.sort()
        rb_left = self.rb_count
        delivered_edge = (tti_idx + 1) * TTI_US
        emptied = None
        total_served = 0
        for _, _, f in ranked:
            if rb_left <= 0:
                break
            backlog = f.backlog_bits
            if f.is_ul:
                # per-UE power split: k RBs carry less than k times the k=1
                # rate. Grow the cached capacity curve as far as this TTI
                # could use, then take the smallest k covering the backlog,
                # else the largest useful k within budget.
                caps = f.ul_caps
                if caps is None:
                    r1 = self.link.ul_rate_bits(f.sinr1, 1)
                    caps = f.ul_caps = [r1] if r1 > 0.0 else []
                if not caps:
                    continue  # below the SINR floor even on one RB
                top = caps[-1]
                n = len(caps)
                while top < backlog and n < rb_left:
                    nxt = self.link.ul_rate_bits(f.sinr1, n + 1)
                    if nxt <= top:
                        break  # extra RBs no longer add capacity
                    caps.append(nxt)
                    top = nxt
                    n += 1
                m = rb_left if rb_left < n else n
                j = bisect_left(caps, backlog, 0, m)
                if j >= m:
                    j = m - 1
                k = j + 1
                cap = caps[j]
            else:
                if f.int_rate1:
                    need = -(-backlog // f.int_rate1)
                elif f.rate1 > 0.0:
                    need = math.ceil(backlog / f.rate1)
                else:
                    continue  # no usable link this TTI
                k = need if need <= rb_left else rb_left
                cap = k * f.rate1
            served = backlog if backlog <= cap else int(cap)
            if served <= 0:
                continue
            rb_left -= k
            f.backlog_bits = backlog - served
            total_served += served
            # deliveries
            p = f.partial_bits + served
            size_bits = f.size_bits
            if p >= size_bits:
                q = f.queue
                sink = f.sink
                while p >= size_bits and q:
                    created = q.popleft()
                    p -= size_bits
                    sink(created, delivered_edge)
            f.partial_bits = p
            # serve-term of the PF recurrence (bits/TTI -> bits/s)
            f.rbar = f.rbar * decay + alpha * (served * 1000.0)
            f.last_tti = tti_idx
            if f.backlog_bits == 0:
                if emptied is None:
                    emptied = [f]
                else:
                    emptied.append(f)
        if emptied is not None:
            for f in emptied:
                bl.pop(f, None)
        if self.audit:
            self._check_conservation(rb_left)
        self.tti_served_bits = total_served
        return self.rb_count - rb_left

    def _check_conservation(self, rb_left: int) -> None:
        if rb_left < 0:
            self.audit_failures += 1
        elif rb_left > 0:
            # work conservation: leftover RBs imply no serviceable backlog remains
            if any(f.backlog_bits > 0 for f in self.backlogged):
                self.audit_failures += 1


@dataclass
class RachStats:
    attempts: int = 0
    collisions: int = 0
    grants: int = 0
    exhausted_nodes: int = 0
    dropped_packets: int = 0


class _NodeAccess:
    __slots__ = ("node", "waiting", "attempts", "next_at", "connected",
                 "grant_at", "last_busy_us")

    def __init__(self, node: int) -> None:
        self.node = node
        self.waiting = False
        self.attempts = 0
        self.next_at = 0
        self.connected = False
        self.grant_at = -1
        self.last_busy_us = 0


class RachController:
    """Contention random access gating uplink service.

    PRACH opportunities every period; colliding nodes back off uniformly and
    retry; a node exhausting max_attempts drops its pending uplink packets and
    re-arms on the next packet. Idle connections release after a timeout.
    """

    def __init__(self, stream: RngStream, ul: PfScheduler,
                 preambles: int = 54, period_ms: int = 5, max_attempts: int = 10,
                 backoff_ms: int = 20, grant_delay_ms: int = 15,
                 idle_release_s: float = 10.0) -> None:
        if preambles <= 0 or max_attempts <= 0:
            raise ConfigError("rach preambles and max_attempts must be positive")
        self.stream = stream
        self.ul = ul
        self.preambles = preambles
        self.period_us = period_ms * US_PER_MS
        self.max_attempts = max_attempts
        self.backoff_us = backoff_ms * US_PER_MS
        self.grant_delay_us = grant_delay_ms * US_PER_MS
        self.idle_release_us = int(idle_release_s * US_PER_S)
        self.nodes: dict[int, _NodeAccess] = {}
        self.node_flows: dict[int, list[Flow]] = {}
        self._pending_grants: list[tuple[int, int]] = []  # (activate_at, node)
        self.stats = RachStats()

    def register(self, node: int, ul_flow: Flow | None) -> _NodeAccess:
        acc = _NodeAccess(node)
        self.nodes[node] = acc
        self.node_flows[node] = []
        if ul_flow is not None:
            self.attach_flow(node, ul_flow)
        return acc

    def attach_flow(self, node: int, ul_flow: Flow) -> None:
        """Bind an uplink flow's service to the node's connection state."""
        self.node_flows[node].append(ul_flow)
        acc = self.nodes[node]
        if acc.connected:
            self.ul.unblock(ul_flow)
        else:
            self.ul.block(ul_flow)

    def detach_flow(self, node: int, ul_flow: Flow) -> None:
        flows = self.node_flows.get(node)
        if flows is not None and ul_flow in flows:
            flows.remove(ul_flow)

    def forget(self, node: int) -> None:
        self.nodes.pop(node, None)
        self.node_flows.pop(node, None)

    def request(self, node: int, now_us: int) -> None:
        """Arm contention for a node with pending UL data and no connection."""
        acc = self.nodes[node]
        if acc.connected or acc.waiting or acc.grant_at >= 0:
            return
        acc.waiting = True
        acc.attempts = 0
        acc.next_at = now_us
        acc.last_busy_us = now_us

    def tick(self, now_us: int) -> None:
        """One PRACH opportunity: resolve grants due, then contention."""
        if self._pending_grants:
            due = [g for g in self._pending_grants if g[0] <= now_us]
            if due:
                self._pending_grants = [g for g in self._pending_grants if g[0] > now_us]
                for _, node in due:
                    acc = self.nodes.get(node)
                    if acc is None:
                        continue
                    acc.grant_at = -1
                    acc.connected = True
                    acc.last_busy_us = now_us
                    for flow in self.node_flows.get(node, ()):
                        self.ul.unblock(flow)
        contenders = [acc for acc in self.nodes.values()
                      if acc.waiting and acc.next_at <= now_us]
        if not contenders:
            return
        contenders.sort(key=lambda a: a.node)
        n = len(contenders)
        self.stats.attempts += n
        picks = self.stream.integers_block(n, self.preambles)
        counts = np.bincount(picks, minlength=self.preambles)
        for acc, p in zip(contenders, picks):
            if counts[p] == 1:
                acc.waiting = False
                acc.attempts = 0
                acc.grant_at = now_us + self.grant_delay_us
                self._pending_grants.append((acc.grant_at, acc.node))
                self.stats.grants += 1
            else:
                self.stats.collisions += 1
                acc.attempts += 1
                if acc.attempts >= self.max_attempts:
                    acc.waiting = False
                    acc.attempts = 0
                    self.stats.exhausted_nodes += 1
                    for flow in self.node_flows.get(acc.node, ()):
                        self.stats.dropped_packets += self.ul.drop_all(
                            flow, now_us, "rach_exhausted")
                else:
                    back = self.stream.uniform(0.0, float(self.backoff_us))
                    acc.next_at = now_us + int(back)

    def note_ul_activity(self, node: int, now_us: int) -> None:
        acc = self.nodes.get(node)
        if acc is not None:
            acc.last_busy_us = now_us

    def sweep_idle(self, now_us: int) -> int:
        """Release connections idle past the timeout; returns release count."""
        released = 0
        cutoff = now_us - self.idle_release_us
        for node, acc in self.nodes.items():
            if acc.connected and acc.last_busy_us <= cutoff:
                flows = self.node_flows.get(node, ())
                if any(f.backlog_bits for f in flows):
                    continue  # pending data is activity
                acc.connected = False
                for f in flows:
                    self.ul.block(f)
                released += 1
        return released

    def is_connected(self, node: int) -> bool:
        acc = self.nodes.get(node)
        return acc is not None and acc.connected

    def disconnect(self, node: int) -> None:
        acc = self.nodes.get(node)
        if acc is None:
            return
        acc.connected = False
        acc.waiting = False
        acc.grant_at = -1
        self._pending_grants = [g for g in self._pending_grants if g[1] != node]


class SideChannel:
    """Shared-medium hop abstracted as a serialized FIFO pipe.

    Per-packet cost is a fixed overhead plus airtime at full capacity; queueing
    behind earlier packets yields the contention penalty, so back-to-back load
    drains at exactly the pipe capacity.
    """

    def __init__(self, capacity_bps: float = 24e6, overhead_us: int = 100,
                 range_m: float = 150.0) -> None:
        if capacity_bps <= 0:
            raise ConfigError("side channel capacity must be positive")
        self.capacity_bps = capacity_bps
        self.overhead_us = overhead_us
        self.range_m = range_m
        self.busy_until = 0
        self.sent = 0

    def airtime_us(self, size_bytes: int) -> int:
        return self.overhead_us + round(size_bytes * 8 * US_PER_S / self.capacity_bps)

    def send(self, size_bytes: int, now_us: int) -> int:
        """Enqueue one packet; returns its completion time."""
        start = now_us if now_us > self.busy_until else self.busy_until
        done = start + self.airtime_us(size_bytes)
        self.busy_until = done
        self.sent += 1
        return done

    def in_range(self, distance_m: float) -> bool:
        return distance_m <= self.range_m
