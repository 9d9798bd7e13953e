"""Overtake on the oval with and without the truth-matched grip map.

Writes both run reports and a side-by-side CSV of speed and true tire
utilization against distance for velocity-profile and utilization plots.
"""

import argparse
from pathlib import Path

import numpy as np

from gripmap.io import write_csv, write_json
from gripmap.scenarios import bundled
from gripmap.sim import load_scenario, run_scenario


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/spin")
    args = ap.parse_args(argv)
    out = Path(args.out)

    runs = {}
    for name in ("vegas_nomap", "vegas_map"):
        rep = run_scenario(load_scenario(bundled("scenarios", f"{name}.json")))
        rep.write(out / name)
        runs[name] = rep
        s = rep.summary
        spin = [e for e in s["events"] if e["type"] == "spin"]
        print(f"{name:12s} spin {'yes' if spin else 'no ':3s}  max util_true {s['max_util_true']:.3f}  "
              f"corner entry {s['min_corner_entry_v']:.2f} m/s")

    a, b = runs["vegas_nomap"].columns, runs["vegas_map"].columns
    end = min(a["s"][-1], b["s"][-1])
    grid = np.arange(a["s"][0], end, 1.0)
    write_csv(out / "comparison.csv", {
        "s": grid,
        "v_nomap": np.interp(grid, a["s"], a["v"]),
        "v_map": np.interp(grid, b["s"], b["v"]),
        "util_true_nomap": np.interp(grid, a["s"], a["util_true"]),
        "util_true_map": np.interp(grid, b["s"], b["util_true"]),
        "util_assumed_nomap": np.interp(grid, a["s"], a["util_assumed"]),
    })
    write_json(out / "summary.json", {k: r.summary for k, r in runs.items()})


if __name__ == "__main__":
    main()
