"""The cell in isolation: pathloss, the uplink power split, proportional-fair
sharing under mixed demand, and contention on the random access channel.

Run:  python demos/04_cell_scheduling.py
"""
from junctionsim import (CellConfig, LinkModel, PfScheduler, RachController,
                         StreamRegistry, pathloss_db)


class Tally:
    def __init__(self):
        self.packets = 0

    def __call__(self, created, delivered):
        self.packets += 1

    def drop(self, count, t_us, reason):
        pass


def main():
    cell = CellConfig()
    link = LinkModel(cell)

    print("downlink: the whole 500 m cell sits in rate saturation")
    print("  distance   pathloss      per-RB rate")
    for d in (10, 100, 250, 500):
        pl = pathloss_db(d, cell.dl_carrier_hz)
        r = link.dl_rate_per_rb(d)
        print(f"  {d:>5} m   {pl:>7.2f} dB   {r:>7.1f} bits/RB/TTI")

    # uplink power divides across granted RBs, so capacity grows sublinearly
    s1 = link.ul_sinr1_db(500.0)
    print(f"\nuplink at the cell edge (single-RB SINR {s1:.1f} dB):")
    print("  RBs granted   total bits/TTI   bits per RB")
    for k in (1, 2, 4, 8, 16, 25):
        total = link.ul_rate_bits(s1, k)
        print(f"  {k:>11}   {total:>14.0f}   {total / k:>11.1f}")

    # proportional fairness with unequal demand: an overloaded neighbor does
    # not starve the light user, and no resource block goes idle
    dl = PfScheduler("dl", cell, link, audit=True)
    heavy, light = Tally(), Tally()
    f_heavy = dl.new_flow(0, "HT", 1000, heavy, heavy.drop)
    f_heavy.set_rate(link.dl_rate_per_rb(100.0))
    f_light = dl.new_flow(1, "HT", 1000, light, light.drop)
    f_light.set_rate(link.dl_rate_per_rb(400.0))
    for tti in range(1000):
        t = tti * 1000
        for _ in range(4):              # 32 kb/TTI against a ~25 kb cell
            dl.enqueue(f_heavy, t)
        if tti % 10 == 0:
            dl.enqueue(f_light, t)
        dl.allocate(tti)
    print(f"\nproportional fairness over 1000 TTIs:")
    print(f"  heavy user: {heavy.packets:>4} of 4000 offered packets delivered")
    print(f"  light user: {light.packets:>4} of  100 offered packets delivered")
    print(f"  audit failures (work conservation, RB cap): {dl.audit_failures}")

    # random access: more contenders, more collisions
    print("\nrandom access, 54 preambles per opportunity:")
    print("  contenders   collision share of attempts")
    for m in (2, 5, 15, 40):
        streams = StreamRegistry(99)
        ul = PfScheduler("ul", cell, link)
        rach = RachController(streams.stream("rach"), ul)
        for node in range(m):
            rach.register(node, None)
        for i in range(2000):
            t = i * 5000
            for node in range(m):
                acc = rach.nodes[node]
                acc.connected = False
                acc.waiting = False
                acc.grant_at = -1
                rach.request(node, t)
            rach.tick(t)
        share = rach.stats.collisions / rach.stats.attempts
        print(f"  {m:>10}   {share:>6.1%}")


if __name__ == "__main__":
    main()
