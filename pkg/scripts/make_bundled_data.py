"""Regenerate the data files shipped under src/gripmap/data.

Tracks are written first and read back, so every derived file (maps,
racelines) is built on exactly the geometry a user will load.
"""

import argparse
import json
from pathlib import Path

from gripmap.gggv import GggvModel
from gripmap.grid import build_gripmap, write_gripmap
from gripmap.io import atomic_write_text, write_json
from gripmap.planner import PlannerConfig, Weights
from gripmap.raceline import optimize_raceline, raceline_csv
from gripmap.scenarios import CIRCUIT_BOUNDS, circuit_map, oval, rounded_rectangle
from gripmap.sim import GroundTruthGrip, truth_gripmap
from gripmap.track import load_track, write_track_csv

# Oval for the overtake scenario: inside lane is n > 0 on a counter-clockwise loop.
OVAL_BOUNDS = (-8.0, 6.0)
OVAL_VEHICLE = dict(ax_max=8.0, ay_max=20.0, ax_min=15.0, v_max=78.0)
# plateau and falloff put the outside overtaking line (n ~ 2) about 30-35 % below the racing line
VEGAS_TRUTH = dict(n_rl="raceline", w_p=2.0, slope=0.19, floor=0.6)
VEGAS_WEIGHTS = Weights(track=0.02, jerk=0.01, opponent=5.0, grip=100.0, progress=5.0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "src" / "gripmap" / "data"))
    args = ap.parse_args(argv)
    out = Path(args.out)
    for sub in ("tracks", "vehicles", "maps", "racelines", "planner", "scenarios"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    # circuit: four corners of different radii, one of them slippery
    x, y = rounded_rectangle()
    write_track_csv(out / "tracks" / "circuit.csv", x, y, *CIRCUIT_BOUNDS, closed=True)
    circuit = load_track(out / "tracks" / "circuit.csv")
    circuit_model = GggvModel.constant(12.0, 12.0, v_max=80.0)
    write_json(out / "vehicles" / "circuit.json", circuit_model.to_dict())
    grid = circuit_map(circuit)
    write_gripmap(grid, out / "maps" / "circuit.gmap")
    write_gripmap(build_gripmap(circuit, grid.s_dim, grid.n_dim, grid.w_max, 0.75),
                  out / "maps" / "circuit_uniform075.gmap")
    rl = optimize_raceline(circuit, circuit_model, grid)
    atomic_write_text(out / "racelines" / "circuit.csv", raceline_csv(rl.path, rl.profile))
    print(f"circuit: s_max {circuit.s_max:.1f} m, lap {rl.lap_time:.3f} s")
    write_json(out / "planner" / "default.json", PlannerConfig().to_dict())

    # oval for the overtake scenario
    x, y = oval()
    write_track_csv(out / "tracks" / "oval.csv", x, y, *OVAL_BOUNDS, closed=True)
    track = load_track(out / "tracks" / "oval.csv")
    model = GggvModel.constant(**OVAL_VEHICLE)
    write_json(out / "vehicles" / "oval.json", model.to_dict())
    dims = (int(track.s_max // 10), 8)
    rl = optimize_raceline(track, model, build_gripmap(track, dims[0], dims[1], track.half_width + 1.0))
    atomic_write_text(out / "racelines" / "oval.csv", raceline_csv(rl.path, rl.profile))
    print(f"oval: s_max {track.s_max:.1f} m, lap {rl.lap_time:.3f} s")
    truth_args = {k: v for k, v in VEGAS_TRUTH.items() if k != "n_rl"}
    truth = GroundTruthGrip(n_rl=(rl.path.s, rl.path.n), s_max=track.s_max, **truth_args)
    write_gripmap(truth_gripmap(truth, track.s_max, dims[0], dims[1], track.half_width + 1.0),
                  out / "maps" / "oval_truth.gmap")
    planner = PlannerConfig(weights=VEGAS_WEIGHTS, opp_long_radius=15.0, opp_lat_radius=4.0)
    write_json(out / "planner" / "vegas.json", planner.to_dict())

    base = {
        "track": "../tracks/oval.csv",
        "raceline": "../racelines/oval.csv",
        "gggv": "../vehicles/oval.json",
        "planner": "../planner/vegas.json",
        "truth": VEGAS_TRUTH,
        "map_dims": list(dims),
        # opponent capped at 69 m/s holds the inside line; ego closes from behind
        "ego": {"s": 350.0, "v": 76.0},
        "opponents": [{"s": 400.0, "n": 5.0, "v": 69.0, "v_cap": 69.0}],
        "duration": 20.0,
        "dt": 0.02,
        "planner_period": 0.1,
        "seed": 0,
        # end of the entry spiral into turn one
        "corner_entry_s": [750.0],
    }
    for name, planner_map in (("vegas_nomap", "none"), ("vegas_map", "../maps/oval_truth.gmap")):
        doc = dict(base, name=name, planner_map=planner_map)
        atomic_write_text(out / "scenarios" / f"{name}.json", json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
