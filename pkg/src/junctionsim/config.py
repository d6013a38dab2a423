"""Flat key=value run configuration with typed defaults.

Every tunable has exactly one key. Overrides coerce to the default's type;
unknown keys fail fast so typos never silently fall back to defaults.
"""
from __future__ import annotations

from .core import ConfigError

DEFAULTS: dict[str, object] = {
    # run shape
    "seed": 1,
    "horizon_s": 300.0,
    "scenario": 1,                  # 2 adds passenger devices to vehicles
    "policy": "adaptive",           # adaptive | standard | aggregator | extra
    "schedule": "low:0,moderate:75,high:150,veryhigh:225",
    "metrics.warmup_s": 90.0,
    "adapt.window_s": 90.0,

    # carrier
    "cell.rb_count": 25,
    "cell.rb_count_boost": 50,
    "cell.dl_carrier_hz": 945e6,
    "cell.ul_carrier_hz": 900e6,
    "cell.enb_tx_dbm": 43.0,
    "cell.ue_tx_dbm": 23.0,
    "cell.enb_nf_db": 3.0,
    "cell.ue_nf_db": 9.0,
    "cell.eta_max": 5.55,
    "cell.sinr_floor_db": -6.0,
    "cell.pathloss_exp": 3.0,
    "cell.pf_t_avg_s": 1.0,

    # junction and vehicles
    "light.green_s": 60.0,
    "light.red_s": 30.0,
    "light.first_green": "A",
    "vehicle.speed_mps": 5.0,
    "vehicle.headway_m": 7.0,
    "vehicle.length_m": 4.5,
    "vehicle.startup_s": 1.0,
    "vehicle.coverage_m": 500.0,
    "vehicle.stop_line_m": -5.0,
    "vehicle.step_ms": 100,
    "vehicle.min_gap_ms": 50,
    "vehicle.population_margin": 0.95,
    "vehicle.passenger_prob": 0.25,

    # presence sensing and classification
    "sensing.period_ms": 250,
    "sensing.near_offset_m": 10.0,
    "sensing.far_offset_m": 100.0,
    "sensing.zone_m": 2.0,
    "classify.low_max": 20,
    "classify.moderate_max": 60,
    "classify.high_max": 100,

    # traffic
    "mt.enabled": True,
    "mt.size_bytes": 800,
    "mt.ul_period_ms": 100,
    "mt.dl_period_s": 1.0,
    "mt.overhead_bytes": 20,
    "ht.size_bytes": 1000,
    "ht.static_users": 30,
    "ht.dl_mean_ms": 10.0,
    "ht.ul_mean_ms": 20.0,

    # access and side channel
    "rach.preambles": 54,
    "rach.period_ms": 5,
    "rach.grant_delay_ms": 15,
    "rach.max_attempts": 10,
    "rach.backoff_ms": 20,
    "rach.idle_release_s": 10.0,
    "side.capacity_bps": 24e6,
    "side.overhead_us": 100,
    "side.range_m": 150.0,
    "agg.assoc_delay_ms": 200,

    # policy rule table (congestion level -> policy)
    "rule.low": "standard",
    "rule.moderate": "aggregator",
    "rule.high": "extra",
    "rule.veryhigh": "extra",

    # artifact emission
    "emit.timeseries": True,
    "emit.estimates": True,
    "emit.sensors": False,
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key: str, value, default) -> object:
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in _TRUE:
            return True
        if s in _FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        try:
            return int(str(value), 0)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if isinstance(default, float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    return str(value)


class Config:
    """One run's settings: defaults plus validated overrides."""

    def __init__(self, overrides: dict | None = None) -> None:
        self._values = dict(DEFAULTS)
        if overrides:
            for k, v in overrides.items():
                self.set(k, v)

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self._values[key] = _coerce(key, value, DEFAULTS[key])

    def apply_pairs(self, pairs: list[str]) -> None:
        """Apply 'key=value' override strings (CLI form)."""
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not key=value")
            key, _, value = pair.partition("=")
            self.set(key.strip(), value.strip())

    def __getitem__(self, key: str):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def as_dict(self) -> dict:
        return dict(self._values)
