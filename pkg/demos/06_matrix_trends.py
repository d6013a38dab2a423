"""Shrunken replication matrix: every congestion level against its policy
arms, a few seeds each, then the cross-seed trend table.

This is the full experiment pipeline at a fraction of the default horizon so
it finishes in about a minute. Artifacts land under out/demo_matrix/.

Run:  python demos/06_matrix_trends.py [--seeds 2] [--horizon 60]
"""
import argparse
import csv

from junctionsim import run_matrix


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=2)
    ap.add_argument("--horizon", type=float, default=60.0)
    ap.add_argument("--out", default="out/demo_matrix")
    args = ap.parse_args()

    overrides = {
        "horizon_s": args.horizon,
        "metrics.warmup_s": args.horizon / 2,
        "adapt.window_s": args.horizon / 2,
    }
    path = run_matrix(overrides, list(range(1, args.seeds + 1)), args.out,
                      log=lambda line: print(line, flush=True))

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))

    print(f"\nhuman-type downlink per user (kb/s, mean over {args.seeds} "
          f"seeds), scenario 1:")
    print(f"{'level':<10}" + "".join(f"{p:>12}" for p in
                                     ("standard", "aggregator", "extra")))
    for level in ("low", "moderate", "high", "veryhigh"):
        cells = {}
        for r in rows:
            if (r["scenario"], r["level"], r["class"], r["direction"]) == \
                    ("1", level, "HT", "dl"):
                kb = float(r["per_user_throughput_bps_mean"]) / 1000
                cells[r["policy"]] = f"{kb:.1f}"
        line = "".join(f"{cells.get(p, '-'):>12}" for p in
                       ("standard", "aggregator", "extra"))
        print(f"{level:<10}{line}")

    print(f"\nmachine uplink delivery ratio, scenario 1:")
    print(f"{'level':<10}" + "".join(f"{p:>12}" for p in
                                     ("standard", "aggregator", "extra")))
    for level in ("low", "moderate", "high", "veryhigh"):
        cells = {}
        for r in rows:
            if (r["scenario"], r["level"], r["class"], r["direction"]) == \
                    ("1", level, "MT", "ul"):
                cells[r["policy"]] = f"{float(r['delivery_ratio_mean']):.4f}"
        line = "".join(f"{cells.get(p, '-'):>12}" for p in
                       ("standard", "aggregator", "extra"))
        print(f"{level:<10}{line}")

    print(f"\nfull table: {path}")


if __name__ == "__main__":
    main()
