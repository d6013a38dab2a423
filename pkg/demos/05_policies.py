"""Side-by-side policy comparison at one congestion level: what each network
configuration buys, and what it costs.

Runs three full simulations (same seed, same traffic) and prints the per-user
human throughput, machine delivery ratio, and machine latency for each policy.

Run:  python demos/05_policies.py [--level moderate] [--seed 1] [--horizon 150]
"""
import argparse

from junctionsim import Config, run_simulation


def row(result, klass, direction):
    for r in result.summary_rows:
        if r["class"] == klass and r["direction"] == direction:
            return r
    raise KeyError((klass, direction))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--level", default="moderate",
                    choices=["low", "moderate", "high", "veryhigh"])
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--horizon", type=float, default=150.0)
    args = ap.parse_args()

    results = {}
    for policy in ("standard", "aggregator", "extra"):
        cfg = Config({
            "seed": args.seed,
            "horizon_s": args.horizon,
            "metrics.warmup_s": min(90.0, args.horizon / 2),
            "schedule": f"{args.level}:0",
            "policy": policy,
        })
        print(f"running {policy} ...", flush=True)
        results[policy] = run_simulation(cfg)

    print(f"\nlevel {args.level}, seed {args.seed}, "
          f"measured after warmup\n")
    header = f"{'':14}" + "".join(f"{p:>14}" for p in results)
    print(header)

    def line(label, fmt, get):
        vals = "".join(f"{get(r):>14{fmt}}" for r in results.values())
        print(f"{label:<14}{vals}")

    line("HT dl kb/s", ".1f",
         lambda r: row(r, "HT", "dl")["per_user_throughput_bps"] / 1000)
    line("HT ul kb/s", ".1f",
         lambda r: row(r, "HT", "ul")["per_user_throughput_bps"] / 1000)
    line("MT ul ratio", ".4f",
         lambda r: row(r, "MT", "ul")["delivery_ratio"])
    line("MT ul ms", ".3f",
         lambda r: row(r, "MT", "ul")["mean_latency_ms"])
    line("MT dl ms", ".3f",
         lambda r: row(r, "MT", "dl")["mean_latency_ms"])
    line("relayed ul", "d",
         lambda r: r.counters["relayed_ul"])
    line("side sends", "d",
         lambda r: r.counters["side_sent"])

    print("\nthe aggregator trades machine latency for cell headroom; the "
          "wider carrier buys headroom directly")


if __name__ == "__main__":
    main()
