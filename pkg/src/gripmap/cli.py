"""Command-line entry point: ``gripmap <group> <verb> [flags]``.

Groups are ``gripmap`` (map authoring), ``raceline``, ``sim`` and ``bench``.
Every command writes its outputs plus a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 validation error, 3 infeasible, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import InfeasibleError, ValidationError
from .gggv import default_model, load_gggv
from .grid import (
    TelemetryLog,
    apply_updates,
    build_gripmap,
    grid_stats,
    read_gripmap,
    set_region,
    set_theta,
    suggest_theta_updates,
    to_json,
    write_gripmap,
)
from .io import atomic_write_text, read_csv, write_csv, write_json, write_manifest
from .raceline import LatticeConfig, compare_global_vs_map, optimize_raceline, raceline_csv
from .track import frenet_to_cartesian, load_track

EXIT_OK, EXIT_VALIDATION, EXIT_INFEASIBLE, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--config", help="JSON file of flag values (flags given on the command line win)")
    p.add_argument("--seed", type=int, help="random seed (sim default: the scenario's own seed)")
    p.add_argument("--out", default=".", help="output directory")


def _lattice_flags(p):
    d = LatticeConfig()
    p.add_argument("--layer-step", type=float, default=d.layer_step)
    p.add_argument("--n-candidates", type=int, default=d.n_candidates)
    p.add_argument("--smooth-weight", type=float, default=d.smooth_weight)
    p.add_argument("--margin", type=float, default=d.margin)
    p.add_argument("--iterations", type=int, default=d.iterations)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gripmap", description=__doc__.splitlines()[0])
    groups = ap.add_subparsers(dest="group", required=True, parser_class=_Parser)

    g = groups.add_parser("gripmap", help="build, inspect and edit grip maps")
    verbs = g.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    p = verbs.add_parser("build", help="uniform map over a track")
    p.add_argument("--track", required=True)
    p.add_argument("--s-dim", type=int, required=True)
    p.add_argument("--n-dim", type=int, required=True)
    p.add_argument("--w-max", type=float, help="lateral half-width (default: track half-width + 1 m)")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--name", default="map.gmap")
    p = verbs.add_parser("inspect", help="JSON dump and summary statistics")
    p.add_argument("--map", required=True)
    p.add_argument("--open", action="store_true", help="map belongs to an open track")
    p = verbs.add_parser("set", help="edit one cell or a region")
    p.add_argument("--map", required=True)
    p.add_argument("--open", action="store_true")
    p.add_argument("--cell", type=int, nargs=2, metavar=("I", "J"))
    p.add_argument("--region", type=float, nargs=4, metavar=("S0", "S1", "N0", "N1"))
    p.add_argument("--value", type=float, required=True)
    p.add_argument("--name", default="map.gmap")
    p = verbs.add_parser("suggest", help="propose updates from telemetry (s, n, utilization, anomaly)")
    p.add_argument("--map", required=True)
    p.add_argument("--open", action="store_true")
    p.add_argument("--telemetry", required=True)
    p.add_argument("--target-util", type=float, default=0.95)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--min-samples", type=int, default=20)
    p.add_argument("--apply", action="store_true", help="also write the updated map")
    p = verbs.add_parser("export", help="cell polygons and theta as CSV for heat maps")
    p.add_argument("--map", required=True)
    p.add_argument("--track", help="add Cartesian corners using this track")
    for p in verbs.choices.values():
        _common(p)

    r = groups.add_parser("raceline", help="offline raceline optimization")
    verbs = r.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for name, text in (("optimize", "minimum-time raceline on a map"),
                       ("compare", "map raceline vs. uniform worst-case factor")):
        p = verbs.add_parser(name, help=text)
        p.add_argument("--track", required=True)
        p.add_argument("--gggv", help="vehicle envelope JSON (default: constant 10 m/s^2)")
        p.add_argument("--map", required=True)
        _lattice_flags(p)
        _common(p)
    verbs.choices["compare"].add_argument("--theta-global", type=float)

    s = groups.add_parser("sim", help="closed-loop scenario simulation")
    verbs = s.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    p = verbs.add_parser("run")
    p.add_argument("--scenario", required=True)
    p.add_argument("--planner-map", help="override: none, uniform:<theta>, truth or a .gmap path")
    _common(p)
    p.set_defaults(seed=None)

    b = groups.add_parser("bench", help="runtime benchmarks")
    verbs = b.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    p = verbs.add_parser("planner")
    p.add_argument("--cycles", type=int, default=1000)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--no-opponent", action="store_true")
    p.add_argument("--degenerate", action="store_true", help="workload where no candidate survives")
    _common(p)
    p = verbs.add_parser("lookup")
    p.add_argument("--lookups", type=int, default=40_000)
    p.add_argument("--repeats", type=int, default=31)
    p.add_argument("--sizes", type=int, nargs="+", default=[1_000, 1_000_000])
    _common(p)
    return ap


def parse_args(argv):
    """Parse ``argv``; values from ``--config`` act as defaults (and satisfy required flags)."""
    ap = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and len(argv) >= 2:
        sub = _subparser(ap, argv[:2])
        if sub is not None:
            _apply_config(sub, known.config)
    return ap.parse_args(argv)


def _subparser(ap, names):
    for name in names:
        actions = [a for a in ap._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions or name not in actions[0].choices:
            return None
        ap = actions[0].choices[name]
    return ap


def _apply_config(sub, path):
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = set(cfg) - set(actions)
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")
    for key, value in cfg.items():
        actions[key].required = False
        actions[key].default = value


def _params(args) -> dict:
    skip = {"out", "config", "seed", "group", "verb"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _finish(args, inputs, outputs):
    inputs = dict(inputs, config=args.config)
    write_manifest(args.out, f"{args.group} {args.verb}", _params(args), inputs, args.seed, outputs)


def _model(args):
    return load_gggv(args.gggv) if args.gggv else default_model()


# -- gripmap ----------------------------------------------------------------------


def cmd_gripmap(args):
    out = Path(args.out)
    if args.verb == "build":
        track = load_track(args.track)
        w_max = args.w_max if args.w_max is not None else track.half_width + 1.0
        grid = build_gripmap(track, args.s_dim, args.n_dim, w_max, args.theta)
        path = out / args.name
        write_gripmap(grid, path)
        print(f"wrote {path}: {grid.s_dim} x {grid.N} cells, delta_s {grid.delta_s:.4g} m, "
              f"{path.stat().st_size} bytes")
        _finish(args, {"track": args.track}, [path])
        return
    grid = read_gripmap(args.map, closed=not getattr(args, "open", False))
    if args.verb == "inspect":
        stats = grid_stats(grid)
        path = out / "inspect.json"
        atomic_write_text(path, to_json(grid) + "\n")
        print(f"{grid.s_dim} x {grid.N} cells  min {stats['min']:.4g}  max {stats['max']:.4g}  "
              f"mean {stats['mean']:.4g}")
        outputs = [path]
    elif args.verb == "set":
        if (args.cell is None) == (args.region is None):
            raise ValidationError("give exactly one of --cell or --region")
        if args.cell is not None:
            grid = set_theta(grid, args.cell[0], args.cell[1], args.value)
        else:
            s0, s1, n0, n1 = args.region
            grid = set_region(grid, (s0, s1), (n0, n1), args.value)
        path = out / args.name
        write_gripmap(grid, path)
        outputs = [path]
    elif args.verb == "suggest":
        cols = read_csv(args.telemetry)
        missing = {"s", "n", "utilization", "anomaly"} - set(cols)
        if missing:
            raise ValidationError(f"{args.telemetry}: missing columns {sorted(missing)}")
        log = TelemetryLog(cols["s"], cols["n"], cols["utilization"], cols["anomaly"] != 0)
        updates = suggest_theta_updates(grid, log, args.target_util, args.step, args.min_samples)
        path = out / "suggestions.csv"
        write_csv(path, {
            "i": [u.i for u in updates], "j": [u.j for u in updates],
            "old_theta": [u.old_theta for u in updates], "new_theta": [u.new_theta for u in updates],
            "reason": [u.reason for u in updates],
        } if updates else {"i": [], "j": [], "old_theta": [], "new_theta": [], "reason": []})
        outputs = [path]
        print(f"{len(updates)} proposed updates")
        if args.apply:
            mpath = out / "map.gmap"
            write_gripmap(apply_updates(grid, updates), mpath)
            outputs.append(mpath)
    else:  # export
        outputs = [_export_cells(grid, args, out)]
    _finish(args, {"map": args.map, "track": getattr(args, "track", None),
                   "telemetry": getattr(args, "telemetry", None)}, outputs)


def _export_cells(grid, args, out):
    i, j = np.meshgrid(np.arange(grid.s_dim), np.arange(grid.N), indexing="ij")
    i, j = i.ravel(), j.ravel()
    s0 = grid.s_boundaries()[i]
    n0 = grid.n_boundaries()[j]
    cols = {"i": i, "j": j, "s0": s0, "s1": s0 + grid.delta_s, "n0": n0, "n1": n0 + grid.delta_n,
            "theta": grid.theta[i, j]}
    if args.track:
        track = load_track(args.track)
        corners = ((cols["s0"], cols["n0"]), (cols["s1"], cols["n0"]),
                   (cols["s1"], cols["n1"]), (cols["s0"], cols["n1"]))
        for k, (s, n) in enumerate(corners):
            pose = frenet_to_cartesian(track, np.minimum(s, track.s_max), n)
            cols[f"x{k}"] = np.asarray(pose.x)
            cols[f"y{k}"] = np.asarray(pose.y)
    path = out / "cells.csv"
    write_csv(path, cols)
    return path


# -- raceline ---------------------------------------------------------------------


def cmd_raceline(args):
    out = Path(args.out)
    track = load_track(args.track)
    grid = read_gripmap(args.map, closed=track.closed)
    model = _model(args)
    lattice = LatticeConfig(layer_step=args.layer_step, n_candidates=args.n_candidates,
                            smooth_weight=args.smooth_weight, margin=args.margin,
                            iterations=args.iterations)
    inputs = {"track": args.track, "map": args.map, "gggv": args.gggv}
    if args.verb == "optimize":
        rl = optimize_raceline(track, model, grid, lattice)
        path = out / "raceline.csv"
        atomic_write_text(path, raceline_csv(rl.path, rl.profile))
        spath = out / "summary.json"
        write_json(spath, {"lap_time": rl.lap_time, "dp_cost": rl.dp_cost, "knots": len(rl.knot_s)})
        print(f"lap time {rl.lap_time:.3f} s")
        _finish(args, inputs, [path, spath])
        return
    cmp = compare_global_vs_map(track, model, grid, lattice, args.theta_global)
    paths = [out / "raceline_map.csv", out / "raceline_global.csv", out / "compare.json"]
    atomic_write_text(paths[0], raceline_csv(cmp.with_map.path, cmp.with_map.profile))
    atomic_write_text(paths[1], raceline_csv(cmp.with_global.path, cmp.with_global.profile))
    write_json(paths[2], {"lap_time_map": cmp.lap_time_map, "lap_time_global": cmp.lap_time_global,
                          "improvement": cmp.improvement_fraction, "theta_global": cmp.theta_global})
    print(f"map {cmp.lap_time_map:.3f} s  global {cmp.lap_time_global:.3f} s  "
          f"improvement {cmp.improvement_fraction:.2%}")
    _finish(args, inputs, paths)


# -- sim / bench ------------------------------------------------------------------


def cmd_sim(args):
    from .sim import load_scenario, run_scenario

    scn = load_scenario(args.scenario, args.planner_map)
    if args.seed is None:
        args.seed = scn.seed
    scn.seed = args.seed
    report = run_scenario(scn)
    outputs = report.write(args.out)
    s = report.summary
    spin = next((e for e in s["events"] if e["type"] == "spin"), None)
    print(f"{scn.name}: spin={'yes at t=%.2f s' % spin['t'] if spin else 'no'}  "
          f"max util_true {s['max_util_true']:.3f}")
    inputs = {"scenario": args.scenario, **{k: str(v) for k, v in scn.sources.items()}}
    _finish(args, inputs, outputs)


def cmd_bench(args):
    from . import bench

    out = Path(args.out)
    if args.verb == "planner":
        w = bench.default_workload(seed=args.seed or 0, opponent=not args.no_opponent, degenerate=args.degenerate)
        rep = bench.bench_planner(w, cycles=args.cycles, warmup=args.warmup)
        raw = rep.pop("raw")
        paths = [out / "bench_planner.json", out / "bench_planner.txt", out / "bench_planner_raw.csv"]
        write_json(paths[0], {"configs": {c: rep[c] for c in bench.CONFIGS},
                              "relative_overhead": rep["relative_overhead"],
                              "workload": {"candidates": w.cfg.n_candidates, "points": w.cfg.n_points,
                                           "states": len(w.states), "opponent": not args.no_opponent,
                                           "degenerate": args.degenerate}})
        text = bench.planner_table(rep)
        atomic_write_text(paths[1], text)
        write_csv(paths[2], raw)
        print(text, end="")
    else:
        rep = bench.bench_lookup(tuple(args.sizes), args.lookups, args.repeats, args.seed or 0)
        paths = [out / "bench_lookup.json", out / "bench_lookup.txt"]
        write_json(paths[0], rep)
        lines = [f"{'cells':>10} {'median [ns/lookup]':>20}"]
        lines += [f"{k:>10} {v['median_lookup_s'] * 1e9:>20.3f}" for k, v in rep["grids"].items()]
        lines.append(f"ratio {rep['ratio']:.3f}")
        text = "\n".join(lines) + "\n"
        atomic_write_text(paths[1], text)
        print(text, end="")
    _finish(args, {}, paths)


COMMANDS = {"gripmap": cmd_gripmap, "raceline": cmd_raceline, "sim": cmd_sim, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        COMMANDS[args.group](args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
