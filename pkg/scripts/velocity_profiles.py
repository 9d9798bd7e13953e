"""Velocity profiles on the bundled circuit: spatial grip map vs. uniform worst case.

Writes ``velocity_profiles.csv`` (s, v_map, v_global, theta_map) and a short
lap-time summary, plus the 6-point sweep of the non-bottleneck grip level.
"""

import argparse
from pathlib import Path

import numpy as np

from gripmap.gggv import load_gggv
from gripmap.io import write_csv, write_json
from gripmap.raceline import compare_global_vs_map
from gripmap.scenarios import bundled, circuit_map
from gripmap.track import load_track


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/velocity_profiles")
    ap.add_argument("--no-sweep", action="store_true")
    args = ap.parse_args(argv)
    out = Path(args.out)

    track = load_track(bundled("tracks", "circuit.csv"))
    model = load_gggv(bundled("vehicles", "circuit.json"))
    cmp = compare_global_vs_map(track, model, circuit_map(track))
    s = np.arange(0.0, track.s_max, 1.0)
    m, g = cmp.with_map, cmp.with_global
    write_csv(out / "velocity_profiles.csv", {
        "s": s,
        "v_map": np.interp(s, m.path.s, m.profile.v),
        "v_global": np.interp(s, g.path.s, g.profile.v),
        "theta_map": np.interp(s, m.path.s, m.profile.theta),
    })
    summary = {"lap_time_map": cmp.lap_time_map, "lap_time_global": cmp.lap_time_global,
               "improvement": cmp.improvement_fraction, "theta_global": cmp.theta_global}
    print(f"map {cmp.lap_time_map:.3f} s, uniform {cmp.theta_global:.2f}: {cmp.lap_time_global:.3f} s, "
          f"improvement {cmp.improvement_fraction:.2%}")

    if not args.no_sweep:
        sweep = []
        for other in np.linspace(0.75, 1.0, 6):
            c = compare_global_vs_map(track, model, circuit_map(track, other_theta=float(other)))
            sweep.append({"other_theta": float(other), "improvement": c.improvement_fraction})
            print(f"  other theta {other:.2f}: improvement {c.improvement_fraction:.2%}")
        summary["sweep"] = sweep
    write_json(out / "summary.json", summary)


if __name__ == "__main__":
    main()
