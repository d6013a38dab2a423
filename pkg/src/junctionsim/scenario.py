"""One configured run: junction, carrier, workloads, sensing, and policy
engine wired onto a single event spine.

The spine is a dispatcher block every PRACH period (5 ms by default). Within
a block, strictly in this order: decision-window estimate and policy switch,
mobility step with link-rate refresh and relay upkeep, sensor sampling,
once-per-second housekeeping, the PRACH opportunity, then one scheduler pass
per TTI. All cadences are validated to be multiples of the block so every
subsystem lands exactly on its own grid.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass

from .adaptation import AdaptationEngine, rule_from_names, parse_policy
from .apps import (AggregationRouter, HtConfig, MtConfig, NullRouter,
                   RecurrentSources, StaticHtWorkload, VehRec, HT, MT, DL, UL)
from .config import Config
from .core import (ConfigError, Engine, SimTime, StreamRegistry,
                   US_PER_MS, US_PER_S)
from .metrics import (KEYS, ConservationReport, MetricsCollector,
                      conservation_check)
from .mobility import (CongestionSchedule, LightConfig, Mobility,
                       MobilityConfig, TrafficLight)
from .radio import (CellConfig, LinkModel, PfScheduler, RachController,
                    SideChannel)
from .sensing import (CongestionLevel, SensorLayout, SensorTrace, estimate)


def parse_schedule(text: str) -> CongestionSchedule:
    """Parse 'level:start_s[,level:start_s...]' into a schedule."""
    segments = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        name, sep, start = part.partition(":")
        if not sep:
            raise ConfigError(f"schedule segment {part!r} is not level:start_s")
        try:
            start_us = int(round(float(start) * US_PER_S))
        except ValueError:
            raise ConfigError(f"schedule start {start!r} is not a number") from None
        segments.append((start_us, CongestionLevel.parse(name)))
    segments.sort(key=lambda s: s[0])
    return CongestionSchedule(segments)


@dataclass
class RunResult:
    seed: int
    scenario: int
    policy_mode: str
    final_policy: str
    level_label: str
    summary_rows: list[dict]
    totals: dict
    conservation: ConservationReport
    rach: dict
    adaptation_events: list
    estimates: list[dict]
    collector: MetricsCollector
    trace: SensorTrace
    counters: dict
    config: dict
    wall_s: float


class Simulation:
    """Builds every component from a Config and runs the horizon."""

    def __init__(self, cfg: Config) -> None:
        self.cfg = cfg
        self.seed = cfg["seed"]
        horizon_s = cfg["horizon_s"]
        if horizon_s <= 0:
            raise ConfigError("horizon_s must be positive")
        self.horizon_us = int(round(horizon_s * US_PER_S))
        self.block_us = cfg["rach.period_ms"] * US_PER_MS
        if self.block_us <= 0 or self.block_us % US_PER_MS:
            raise ConfigError("rach.period_ms must be a positive whole number")
        self._validate_grid(cfg)
        self.scenario = cfg["scenario"]
        if self.scenario not in (1, 2):
            raise ConfigError(f"scenario must be 1 or 2, got {self.scenario}")
        self.warmup_s = int(round(cfg["metrics.warmup_s"]))
        if not 0 <= self.warmup_s < horizon_s:
            raise ConfigError("metrics.warmup_s must lie inside the horizon")
        self.window_us = int(round(cfg["adapt.window_s"] * US_PER_S))

        streams = StreamRegistry(self.seed)
        self.engine = Engine()
        self.collector = MetricsCollector(self.horizon_us)

        # junction
        light = TrafficLight(LightConfig(cfg["light.green_s"], cfg["light.red_s"],
                                         cfg["light.first_green"]))
        self.schedule = parse_schedule(cfg["schedule"])
        mob_cfg = MobilityConfig(
            speed_mps=cfg["vehicle.speed_mps"],
            headway_m=cfg["vehicle.headway_m"],
            vehicle_len_m=cfg["vehicle.length_m"],
            startup_delay_s=cfg["vehicle.startup_s"],
            min_spacing_ms=cfg["vehicle.min_gap_ms"],
            coverage_radius_m=cfg["vehicle.coverage_m"],
            stop_line_m=cfg["vehicle.stop_line_m"],
            step_ms=cfg["vehicle.step_ms"],
            passenger_prob=cfg["vehicle.passenger_prob"],
            population_margin=cfg["vehicle.population_margin"],
        )
        self.step_us = cfg["vehicle.step_ms"] * US_PER_MS
        self.mobility = Mobility(mob_cfg, light, self.schedule,
                                 streams.stream("mobility"),
                                 scenario2=(self.scenario == 2),
                                 on_spawn=self._on_spawn,
                                 on_despawn=self._on_despawn)

        # sensing
        self.layout = SensorLayout(
            stop_line_m=cfg["vehicle.stop_line_m"],
            stopline_offset_m=cfg["sensing.near_offset_m"],
            upstream_offset_m=cfg["sensing.far_offset_m"],
            zone_len_m=cfg["sensing.zone_m"],
            vehicle_len_m=cfg["vehicle.length_m"],
        )
        self.sample_period_us = cfg["sensing.period_ms"] * US_PER_MS
        self.trace = SensorTrace(self.layout.sensor_ids, start_us=0,
                                 period_us=self.sample_period_us)
        self.thresholds = (cfg["classify.low_max"], cfg["classify.moderate_max"],
                           cfg["classify.high_max"])

        # carrier
        cell = CellConfig(
            rb_count=cfg["cell.rb_count"],
            dl_carrier_hz=cfg["cell.dl_carrier_hz"],
            ul_carrier_hz=cfg["cell.ul_carrier_hz"],
            enb_tx_power_dbm=cfg["cell.enb_tx_dbm"],
            enb_noise_figure_db=cfg["cell.enb_nf_db"],
            ue_tx_power_dbm=cfg["cell.ue_tx_dbm"],
            ue_noise_figure_db=cfg["cell.ue_nf_db"],
            eta_max=cfg["cell.eta_max"],
            sinr_floor_db=cfg["cell.sinr_floor_db"],
            pathloss_exponent=cfg["cell.pathloss_exp"],
            pf_t_avg_s=cfg["cell.pf_t_avg_s"],
        )
        cell.validate()
        self.link = LinkModel(cell)
        self.dl_sched = PfScheduler(DL, cell, self.link, audit=True)
        self.ul_sched = PfScheduler(UL, cell, self.link, audit=True)
        self.rach = RachController(
            streams.stream("rach"), self.ul_sched,
            preambles=cfg["rach.preambles"],
            period_ms=cfg["rach.period_ms"],
            max_attempts=cfg["rach.max_attempts"],
            backoff_ms=cfg["rach.backoff_ms"],
            grant_delay_ms=cfg["rach.grant_delay_ms"],
            idle_release_s=cfg["rach.idle_release_s"],
        )
        self.side = SideChannel(cfg["side.capacity_bps"], cfg["side.overhead_us"],
                                cfg["side.range_m"])

        # workloads
        self.mt_cfg = MtConfig(cfg["mt.enabled"], cfg["mt.size_bytes"],
                               cfg["mt.ul_period_ms"], cfg["mt.dl_period_s"],
                               cfg["mt.overhead_bytes"])
        self.mt_cfg.validate()
        self.ht_cfg = HtConfig(cfg["ht.size_bytes"], cfg["ht.static_users"],
                               cfg["ht.dl_mean_ms"], cfg["ht.ul_mean_ms"])
        self.ht_cfg.validate()
        self.node_ids = itertools.count()
        self.registry: dict[int, VehRec] = {}
        self.ht = StaticHtWorkload(
            self.ht_cfg, self.link, self.dl_sched, self.ul_sched, self.rach,
            self.collector, streams.stream("traffic-ht"),
            streams.stream("placement"), self.node_ids, self.horizon_us,
            coverage_m=cfg["vehicle.coverage_m"],
        ) if self.ht_cfg.static_users else None

        if self.mt_cfg.enabled:
            self.router = AggregationRouter(
                self.mt_cfg, self.link, self.dl_sched, self.ul_sched,
                self.rach, self.side, self.collector, self.registry,
                self.mobility, assoc_delay_ms=cfg["agg.assoc_delay_ms"])
        else:
            self.router = NullRouter()
        self.sources = RecurrentSources(
            self.mt_cfg, self.ht_cfg, self.dl_sched, self.ul_sched, self.rach,
            self.collector, self.router, streams.stream("traffic-mt"),
            streams.stream("traffic-ht-passenger"))

        # per-class sinks for dynamically created flows
        mt_bits = self.mt_cfg.size_bytes * 8
        ht_bits = self.ht_cfg.size_bytes * 8
        self._mt_ul_sink = self.collector.make_sink(MT, UL, mt_bits)
        self._mt_dl_sink = self.collector.make_sink(MT, DL, mt_bits)
        self._mt_ul_drop = self.collector.make_drop_sink(MT, UL)
        self._mt_dl_drop = self.collector.make_drop_sink(MT, DL)
        self._ht_dl_sink = self.collector.make_sink(HT, DL, ht_bits)
        self._ht_ul_sink = self.collector.make_sink(HT, UL, ht_bits)
        self._ht_dl_drop = self.collector.make_drop_sink(HT, DL)
        self._ht_ul_drop = self.collector.make_drop_sink(HT, UL)
        self.pax_alive = 0

        # policy engine
        mode = cfg["policy"]
        if mode != "adaptive":
            parse_policy(mode)
        rule = rule_from_names(cfg["rule.low"], cfg["rule.moderate"],
                               cfg["rule.high"], cfg["rule.veryhigh"])
        self.adapt = AdaptationEngine(mode, rule, self.dl_sched, self.ul_sched,
                                      self.link, self.router,
                                      base_rb=cfg["cell.rb_count"],
                                      boost_rb=cfg["cell.rb_count_boost"],
                                      refresh_rates=self._refresh_all_rates)
        self.estimates: list[dict] = []

        self.mobility.seed_initial_population()
        self.adapt.start()
        self.engine.schedule(0, "dispatch", self._block)

    def _validate_grid(self, cfg: Config) -> None:
        block = cfg["rach.period_ms"] * US_PER_MS
        checks = (
            ("horizon_s", int(round(cfg["horizon_s"] * US_PER_S))),
            ("vehicle.step_ms", cfg["vehicle.step_ms"] * US_PER_MS),
            ("sensing.period_ms", cfg["sensing.period_ms"] * US_PER_MS),
            ("adapt.window_s", int(round(cfg["adapt.window_s"] * US_PER_S))),
        )
        for name, value in checks:
            if value <= 0 or value % block:
                raise ConfigError(
                    f"{name} must be a positive multiple of rach.period_ms")
        window = int(round(cfg["adapt.window_s"] * US_PER_S))
        period = cfg["sensing.period_ms"] * US_PER_MS
        if window % period:
            raise ConfigError("adapt.window_s must be a multiple of the sensing period")

    # -- vehicle lifecycle -----------------------------------------------------
    def _on_spawn(self, v) -> None:
        now = v.entered_at
        node = next(self.node_ids)
        rec = VehRec(v.vid, node, v)
        d = v.pos if v.pos >= 0 else -v.pos
        if self.mt_cfg.enabled:
            rec.mt_ul = self.ul_sched.new_flow(node, MT, self.mt_cfg.size_bytes,
                                               self._mt_ul_sink, self._mt_ul_drop)
            rec.mt_dl = self.dl_sched.new_flow(node, MT, self.mt_cfg.size_bytes,
                                               self._mt_dl_sink, self._mt_dl_drop)
            s1 = self.link.ul_sinr1_db(d)
            rec.mt_ul.set_rate(self.link.ul_rate_bits(s1, 1), s1)
            rec.mt_dl.set_rate(self.link.dl_rate_per_rb(d))
            self.rach.register(node, rec.mt_ul)
            self.sources.add_vehicle(rec, now)
        if v.passenger:
            pnode = next(self.node_ids)
            rec.pax_node = pnode
            rec.pax_dl = self.dl_sched.new_flow(pnode, HT, self.ht_cfg.size_bytes,
                                                self._ht_dl_sink, self._ht_dl_drop)
            rec.pax_ul = self.ul_sched.new_flow(pnode, HT, self.ht_cfg.size_bytes,
                                                self._ht_ul_sink, self._ht_ul_drop)
            s1 = self.link.ul_sinr1_db(d)
            rec.pax_ul.set_rate(self.link.ul_rate_bits(s1, 1), s1)
            rec.pax_dl.set_rate(self.link.dl_rate_per_rb(d))
            self.rach.register(pnode, rec.pax_ul)
            self.sources.add_passenger(rec, now)
            self.pax_alive += 1
        self.registry[v.vid] = rec

    def _on_despawn(self, v, now_us: SimTime) -> None:
        rec = self.registry.pop(v.vid, None)
        if rec is None:
            return
        rec.alive = False
        self.router.on_despawn(v.vid)
        if rec.mt_ul is not None:
            self.ul_sched.deactivate(rec.mt_ul, now_us, "despawn")
            self.dl_sched.deactivate(rec.mt_dl, now_us, "despawn")
            self.rach.forget(rec.node)
        if rec.pax_dl is not None:
            self.dl_sched.deactivate(rec.pax_dl, now_us, "despawn")
            self.ul_sched.deactivate(rec.pax_ul, now_us, "despawn")
            self.rach.forget(rec.pax_node)
            self.pax_alive -= 1

    # -- link rate upkeep --------------------------------------------------------
    def _refresh_vehicle_rates(self) -> None:
        link = self.link
        for rec in self.registry.values():
            p = rec.vehicle.pos
            d = p if p >= 0 else -p
            if rec.mt_dl is not None:
                rec.mt_dl.set_rate(link.dl_rate_per_rb(d))
                s1 = link.ul_sinr1_db(d)
                rec.mt_ul.set_rate(link.ul_rate_bits(s1, 1), s1)
            if rec.pax_dl is not None:
                rec.pax_dl.set_rate(link.dl_rate_per_rb(d))
                s1 = link.ul_sinr1_db(d)
                rec.pax_ul.set_rate(link.ul_rate_bits(s1, 1), s1)

    def _refresh_all_rates(self) -> None:
        link = self.link
        if self.ht is not None:
            for _, dist, fdl, ful in self.ht.users:
                fdl.set_rate(link.dl_rate_per_rb(dist))
                s1 = link.ul_sinr1_db(dist)
                ful.set_rate(link.ul_rate_bits(s1, 1), s1)
        self._refresh_vehicle_rates()
        self.router.update(self.engine.now)

    # -- the spine ---------------------------------------------------------------
    def _block(self, ev) -> None:
        t = ev.fire_at
        if t and t % self.window_us == 0:
            self._on_window(t)
        if t % self.step_us == 0:
            if t:
                self.mobility.step(t)
                self._refresh_vehicle_rates()
            self.router.update(t)
            self.router.flush(t)
        if t % self.sample_period_us == 0:
            self.trace.append(self.layout.sample(
                self.mobility.positions_by_road(), t))
        if t % US_PER_S == 0:
            self.rach.sweep_idle(t)
            ht_users = (self.ht_cfg.static_users if self.ht else 0) + self.pax_alive
            mt_users = len(self.registry) if self.mt_cfg.enabled else 0
            self.collector.sample_users(t, ht_users, mt_users)
        self.rach.tick(t)

        ht = self.ht
        sources = self.sources
        dl_alloc = self.dl_sched.allocate
        ul_alloc = self.ul_sched.allocate
        tti0 = t // 1000
        n_ttis = self.block_us // 1000
        for j in range(n_ttis):
            tti_time = t + j * 1000
            if ht is not None:
                ht.ingest(tti_time)
            sources.materialize(tti_time)
            dl_alloc(tti0 + j)
            ul_alloc(tti0 + j)

        nxt = t + self.block_us
        if nxt < self.horizon_us:
            self.engine.schedule(nxt, "dispatch", self._block)

    def _on_window(self, t: SimTime) -> None:
        est = estimate(self.trace, (t - self.window_us, t), self.layout,
                       self.thresholds)
        self.adapt.on_estimate(t, est.n, est.level)
        self.estimates.append({
            "t_s": t // US_PER_S,
            "n_est": est.n,
            "mean_speed_mps": est.mean_speed_mps,
            "level": est.level.label,
            "policy": self.adapt.policy,
        })

    # -- execution ----------------------------------------------------------------
    def run(self) -> RunResult:
        t0 = time.perf_counter()
        self.engine.run_until(self.horizon_us)
        wall = time.perf_counter() - t0

        backlog = {k: 0 for k in KEYS}
        for sched in (self.dl_sched, self.ul_sched):
            for f in sched.flows:
                backlog[(f.klass, f.direction)] += len(f.queue)
        inflight = {(MT, UL): self.router.inflight()}
        conservation = conservation_check(self.collector, backlog, inflight)

        horizon_s = self.horizon_us // US_PER_S
        summary = self.collector.summarize((self.warmup_s, horizon_s))
        if len(self.schedule.segments) == 1:
            level_label = self.schedule.segments[0][1].label
        else:
            level_label = "mixed"

        counters = {
            "spawned": self.mobility.total_spawned,
            "despawned": self.mobility.total_despawned,
            "in_coverage_end": self.mobility.in_coverage_count(),
            "relayed_ul": self.router.relayed_ul,
            "relayed_dl": self.router.relayed_dl,
            "side_sent": self.side.sent,
            "dl_audit_failures": self.dl_sched.audit_failures,
            "ul_audit_failures": self.ul_sched.audit_failures,
            "drop_reasons": dict(self.collector.drop_reasons),
        }
        rach = {
            "attempts": self.rach.stats.attempts,
            "collisions": self.rach.stats.collisions,
            "grants": self.rach.stats.grants,
            "exhausted_nodes": self.rach.stats.exhausted_nodes,
            "dropped_packets": self.rach.stats.dropped_packets,
        }
        return RunResult(
            seed=self.seed,
            scenario=self.scenario,
            policy_mode=self.adapt.mode,
            final_policy=self.adapt.policy,
            level_label=level_label,
            summary_rows=summary,
            totals=self.collector.totals(),
            conservation=conservation,
            rach=rach,
            adaptation_events=self.adapt.events,
            estimates=self.estimates,
            collector=self.collector,
            trace=self.trace,
            counters=counters,
            config=self.cfg.as_dict(),
            wall_s=wall,
        )


def run_simulation(cfg: Config) -> RunResult:
    return Simulation(cfg).run()
