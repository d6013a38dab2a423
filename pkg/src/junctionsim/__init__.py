"""Deterministic discrete-event simulator of a signalized road junction served
by one cellular cell: presence-sensor congestion estimation drives a policy
engine that reshapes the network (relay aggregation, extra resources) to
protect both human and machine traffic."""

from .core import (ConfigError, Engine, Event, MalformedTraceError, RngStream,
                   SimTime, SimulationFault, StreamRegistry, US_PER_MS,
                   US_PER_S)
from .sensing import (CongestionEstimate, CongestionLevel, SensorLayout,
                      SensorTrace, classify, estimate, read_trace,
                      target_population, write_trace)
from .mobility import (CongestionSchedule, LightConfig, Mobility,
                       MobilityConfig, TrafficLight, Vehicle,
                       vehicle_distance_m)
from .radio import (CellConfig, Flow, LinkModel, PfScheduler, RachController,
                    SideChannel, pathloss_db, per_rb_rate_bits)
from .apps import (AggregationRouter, HtConfig, MtConfig, RecurrentSources,
                   StaticHtWorkload, planned_ht_population)
from .adaptation import (AdaptationEngine, AdaptationEvent, DEFAULT_RULE,
                         POLICY_AGGREGATOR, POLICY_EXTRA, POLICY_STANDARD,
                         parse_policy, rule_from_names)
from .metrics import MetricsCollector, conservation_check
from .config import Config, DEFAULTS
from .scenario import RunResult, Simulation, parse_schedule, run_simulation
from .harness import (cell_name, matrix_cells, run_matrix, run_once,
                      write_run_outputs)

__version__ = "0.1.0"

__all__ = [
    "AdaptationEngine", "AdaptationEvent", "AggregationRouter", "CellConfig",
    "Config", "ConfigError", "CongestionEstimate", "CongestionLevel",
    "CongestionSchedule", "DEFAULTS", "DEFAULT_RULE", "Engine", "Event",
    "Flow", "HtConfig", "LightConfig", "LinkModel", "MalformedTraceError",
    "MetricsCollector", "Mobility", "MobilityConfig", "MtConfig",
    "PfScheduler", "POLICY_AGGREGATOR", "POLICY_EXTRA", "POLICY_STANDARD",
    "RachController", "RecurrentSources", "RngStream", "RunResult",
    "SensorLayout", "SensorTrace", "SideChannel", "SimTime", "Simulation",
    "SimulationFault", "StaticHtWorkload", "StreamRegistry", "TrafficLight",
    "US_PER_MS", "US_PER_S", "Vehicle", "cell_name", "classify",
    "conservation_check", "estimate", "matrix_cells", "parse_policy",
    "parse_schedule", "pathloss_db", "per_rb_rate_bits", "planned_ht_population",
    "read_trace",
    "rule_from_names", "run_matrix", "run_once", "run_simulation",
    "target_population", "vehicle_distance_m", "write_run_outputs",
    "write_trace",
]
