"""Planner runtime with and without the grip map, plus the lookup scaling check."""

import argparse
from pathlib import Path

from gripmap import bench
from gripmap.io import atomic_write_text, write_csv, write_json


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/planner_runtime")
    ap.add_argument("--cycles", type=int, default=1000)
    ap.add_argument("--warmup", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    out = Path(args.out)

    rep = bench.bench_planner(bench.default_workload(seed=args.seed), args.cycles, args.warmup)
    write_csv(out / "planner_raw.csv", rep.pop("raw"))
    write_json(out / "planner.json", rep)
    text = bench.planner_table(rep)

    look = bench.bench_lookup(seed=args.seed)
    write_json(out / "lookup.json", look)
    for cells, r in look["grids"].items():
        text += f"lookup {cells:>8} cells: {r['median_lookup_s'] * 1e9:.2f} ns median\n"
    text += f"lookup size ratio {look['ratio']:.3f}\n"
    atomic_write_text(out / "table.txt", text)
    print(text, end="")


if __name__ == "__main__":
    main()
