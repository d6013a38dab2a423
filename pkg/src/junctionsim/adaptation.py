"""Context-aware policy engine: maps sensed congestion to a network policy
once per decision window and applies the transitions.

Policies:
  standard    baseline carrier configuration, every endpoint direct
  aggregator  relay overlay on: stopped vehicles bundle uplink through the
              queue-head concentrator, downlink hops the side channel
  extra       carrier widened to the boosted RB count, everything direct
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .core import ConfigError, SimTime
from .radio import LinkModel, PfScheduler
from .sensing import CongestionLevel

POLICY_STANDARD = "standard"
POLICY_AGGREGATOR = "aggregator"
POLICY_EXTRA = "extra"
POLICIES = (POLICY_STANDARD, POLICY_AGGREGATOR, POLICY_EXTRA)

DEFAULT_RULE = {
    CongestionLevel.LOW: POLICY_STANDARD,
    CongestionLevel.MODERATE: POLICY_AGGREGATOR,
    CongestionLevel.HIGH: POLICY_EXTRA,
    CongestionLevel.VERY_HIGH: POLICY_EXTRA,
}


def parse_policy(name: str) -> str:
    if name not in POLICIES:
        raise ConfigError(f"unknown policy {name!r}, expected one of {POLICIES}")
    return name


def rule_from_names(low: str, moderate: str, high: str, very_high: str) -> dict:
    return {
        CongestionLevel.LOW: parse_policy(low),
        CongestionLevel.MODERATE: parse_policy(moderate),
        CongestionLevel.HIGH: parse_policy(high),
        CongestionLevel.VERY_HIGH: parse_policy(very_high),
    }


@dataclass
class AdaptationEvent:
    t_us: SimTime
    n_est: int
    level: CongestionLevel
    prev_policy: str
    next_policy: str
    actions: str


class AdaptationEngine:
    """Applies policy transitions on decision-window boundaries.

    In adaptive mode the policy follows the rule table against the windowed
    congestion estimate. In pinned mode the policy is applied once at t=0 and
    held for the whole run (estimates are still logged by the caller).
    """

    def __init__(self, mode: str, rule: dict, dl_sched: PfScheduler,
                 ul_sched: PfScheduler, link: LinkModel, router,
                 base_rb: int, boost_rb: int, refresh_rates) -> None:
        if mode != "adaptive":
            parse_policy(mode)
        if boost_rb <= 0 or base_rb <= 0:
            raise ConfigError("rb counts must be positive")
        self.mode = mode
        self.rule = rule
        self.dl_sched = dl_sched
        self.ul_sched = ul_sched
        self.link = link
        self.router = router
        self.base_rb = base_rb
        self.boost_rb = boost_rb
        self.refresh_rates = refresh_rates
        self.policy = POLICY_STANDARD
        self.events: list[AdaptationEvent] = []

    def start(self) -> None:
        """Apply the initial policy before the first tick."""
        if self.mode != "adaptive" and self.mode != POLICY_STANDARD:
            self._transition(self.mode, 0, n_est=0, level=CongestionLevel.LOW)

    def on_estimate(self, t_us: SimTime, n_est: int, level: CongestionLevel) -> None:
        if self.mode != "adaptive":
            return
        target = self.rule[level]
        if target != self.policy:
            self._transition(target, t_us, n_est, level)

    def _transition(self, target: str, t_us: SimTime, n_est: int,
                    level: CongestionLevel) -> None:
        actions = []
        prev = self.policy
        if prev == POLICY_AGGREGATOR and target != POLICY_AGGREGATOR:
            self.router.disable(t_us)
            actions.append("relay_off")
        if prev == POLICY_EXTRA and target != POLICY_EXTRA:
            self._set_rb(self.base_rb)
            actions.append(f"rb={self.base_rb}")
        if target == POLICY_AGGREGATOR:
            self.router.enable(t_us)
            actions.append("relay_on")
        elif target == POLICY_EXTRA:
            self._set_rb(self.boost_rb)
            actions.append(f"rb={self.boost_rb}")
        self.policy = target
        self.events.append(AdaptationEvent(t_us, n_est, level, prev, target,
                                           "+".join(actions)))

    def _set_rb(self, rb: int) -> None:
        self.link.set_rb_count(rb)
        self.dl_sched.set_rb_count(rb)
        self.ul_sched.set_rb_count(rb)
        self.refresh_rates()
