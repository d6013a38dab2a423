"""Two signal cycles of junction traffic: watch queues build on red and drain
front-first on green.

Run:  python demos/02_junction_traffic.py [seed]
"""
import sys

from junctionsim import (CongestionLevel, CongestionSchedule, LightConfig,
                         Mobility, MobilityConfig, StreamRegistry,
                         TrafficLight, US_PER_S)


def main(seed: int = 1):
    streams = StreamRegistry(seed)
    light = TrafficLight(LightConfig())
    schedule = CongestionSchedule.constant(CongestionLevel.MODERATE)
    mob = Mobility(MobilityConfig(), light, schedule,
                   streams.stream("mobility"), scenario2=False)
    mob.seed_initial_population(mt_enabled=False)

    print("t(s)  light A/B   queue A  queue B  in coverage  moving")
    step = 100_000  # 100 ms
    for t in range(0, 180 * US_PER_S, step):
        mob.step(t)
        if t % (10 * US_PER_S):
            continue
        ga = "G" if light.is_green("A", t) else "r"
        gb = "G" if light.is_green("B", t) else "r"
        q = mob.queue_lengths()
        print(f"{t // US_PER_S:>4}  {ga}/{gb}         "
              f"{q['A']:>6}  {q['B']:>7}  {mob.in_coverage_count():>11}  "
              f"{mob.moving_count():>6}")

    print(f"\nspawned {mob.total_spawned}, despawned {mob.total_despawned} "
          f"over 180 s at the moderate target "
          f"({mob.road_target(0):.0f} vehicles per approach)")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
