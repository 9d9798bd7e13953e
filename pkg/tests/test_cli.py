import csv
import json
import math

import numpy as np
import pytest

from gripmap.cli import EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_VALIDATION, main
from gripmap.grid import HEADER_SIZE, read_gripmap
from gripmap.raceline import RACELINE_COLUMNS
from gripmap.scenarios import bundled
from gripmap.sim import RUN_COLUMNS

CIRCUIT = str(bundled("tracks", "circuit.csv"))
CAR = str(bundled("vehicles", "circuit.json"))
UNIFORM = str(bundled("maps", "circuit_uniform075.gmap"))
FAST = ["--layer-step", "4", "--n-candidates", "5", "--iterations", "2"]


def run(*argv):
    return main([str(a) for a in argv])


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(row for row in f if not row.startswith("#")))


def circle_csv(path, radius, count, half_width):
    a = np.linspace(0.0, 2 * math.pi, count, endpoint=False)
    lines = ["x,y,n_min,n_max"] + [f"{radius * math.cos(t)!r},{radius * math.sin(t)!r},{-half_width},{half_width}"
                                   for t in a]
    path.write_text("\n".join(lines) + "\n")
    return path


# -- gripmap ---------------------------------------------------------------------------------


def test_build_format_arithmetic(tmp_path):
    # polygon of 5000 one-metre chords: a 5 km loop
    count = 5000
    radius = 1.0 / (2 * math.sin(math.pi / count))
    track = circle_csv(tmp_path / "big.csv", radius, count, 7.0)
    assert run("gripmap", "build", "--track", track, "--s-dim", 2000, "--n-dim", 8, "--out", tmp_path) == EXIT_OK
    gmap = tmp_path / "map.gmap"
    grid = read_gripmap(gmap)
    assert grid.delta_s == pytest.approx(2.5, rel=1e-3)
    assert grid.N == 16
    assert gmap.stat().st_size == HEADER_SIZE + 2000 * 16 * 8 + 4 == 30 + 256_000 + 4
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "gripmap build"
    assert manifest["inputs"]["track"]["sha256"]


def test_inspect_uniform(tmp_path):
    assert run("gripmap", "inspect", "--map", UNIFORM, "--out", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "inspect.json").read_text())
    assert doc["stats"] == {"min": 0.75, "max": 0.75, "mean": 0.75}


def test_set_cell_and_region(tmp_path):
    assert run("gripmap", "set", "--map", UNIFORM, "--cell", 3, 2, "--value", 0.5, "--out", tmp_path) == EXIT_OK
    g = read_gripmap(tmp_path / "map.gmap")
    assert g.theta[3, 2] == 0.5 and np.count_nonzero(g.theta != 0.75) == 1
    assert run("gripmap", "set", "--map", UNIFORM, "--region", 0, 50, -7, 7, "--value", 0.9,
               "--out", tmp_path) == EXIT_OK
    g = read_gripmap(tmp_path / "map.gmap")
    assert g.theta[0, 0] == 0.9 and g.theta[-1, 0] == 0.75


def test_suggest_all_visited_cells(tmp_path):
    grid = read_gripmap(UNIFORM)
    visited = [(i, j) for i in range(0, grid.s_dim, 7) for j in range(grid.N)]
    rows = ["s,n,utilization,anomaly"]
    for i, j in visited:
        s, n = grid.cell_center(i, j)
        rows += [f"{float(s)!r},{float(n)!r},0.7,0"] * 25
    tel = tmp_path / "tel.csv"
    tel.write_text("\n".join(rows) + "\n")
    assert run("gripmap", "suggest", "--map", UNIFORM, "--telemetry", tel, "--apply", "--out", tmp_path) == EXIT_OK
    table = read_rows(tmp_path / "suggestions.csv")
    assert table[0] == ["i", "j", "old_theta", "new_theta", "reason"]
    proposed = {(int(r[0]), int(r[1])): float(r[3]) for r in table[1:]}
    assert set(proposed) == set(visited)
    assert all(v == pytest.approx(0.80) for v in proposed.values())
    updated = read_gripmap(tmp_path / "map.gmap")
    assert np.count_nonzero(updated.theta != grid.theta) == len(visited)


@pytest.mark.parametrize("text", ["s,n,utilization\n1,0,0.5\n", "s,n,utilization,anomaly\n1,0,abc,0\n",
                                  "s,n,utilization,anomaly\n1,0,0.5\n", ""])
def test_suggest_bad_telemetry(tmp_path, text):
    tel = tmp_path / "tel.csv"
    tel.write_text(text)
    assert run("gripmap", "suggest", "--map", UNIFORM, "--telemetry", tel, "--out", tmp_path) == EXIT_VALIDATION


def test_export_cells(tmp_path):
    assert run("gripmap", "export", "--map", UNIFORM, "--track", CIRCUIT, "--out", tmp_path) == EXIT_OK
    rows = read_rows(tmp_path / "cells.csv")
    grid = read_gripmap(UNIFORM)
    assert rows[0][:7] == ["i", "j", "s0", "s1", "n0", "n1", "theta"]
    assert "x0" in rows[0] and "y3" in rows[0]
    assert len(rows) - 1 == grid.s_dim * grid.N


# -- raceline ------------------------------------------------------------------------------


def test_compare_uniform_is_zero(tmp_path):
    code = run("raceline", "compare", "--track", CIRCUIT, "--gggv", CAR, "--map", UNIFORM,
               "--theta-global", 0.75, *FAST, "--out", tmp_path)
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "compare.json").read_text())
    assert doc["improvement"] == 0.0
    assert doc["lap_time_map"] == doc["lap_time_global"]


def test_compare_varying_grip(tmp_path):
    code = run("raceline", "compare", "--track", CIRCUIT, "--gggv", CAR,
               "--map", bundled("maps", "circuit.gmap"), *FAST, "--out", tmp_path)
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "compare.json").read_text())
    assert doc["improvement"] > 0.0 and doc["theta_global"] == pytest.approx(0.75)
    for name in ("raceline_map.csv", "raceline_global.csv"):
        assert read_rows(tmp_path / name)[0] == list(RACELINE_COLUMNS)


def test_optimize_is_byte_identical(tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run("raceline", "optimize", "--track", CIRCUIT, "--gggv", CAR,
                   "--map", bundled("maps", "circuit.gmap"), *FAST, "--seed", 5, "--out", out) == EXIT_OK
    for name in ("raceline.csv", "summary.json", "manifest.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = read_rows(outs[0] / "raceline.csv")
    assert rows[0] == list(RACELINE_COLUMNS)
    # lossless: every value is the shortest repr of the float it parses to
    for r in rows[1:]:
        assert [repr(float(v)) for v in r] == r


def test_infeasible_exit_code(tmp_path):
    track = circle_csv(tmp_path / "tiny.csv", 5.0, 120, 2.0)
    car = tmp_path / "weak.json"
    car.write_text(json.dumps({"v_grid": [0.0], "az_grid": [9.81], "ax_max": [[1.0]], "ax_min": [[1.0]],
                               "ay_max": [[1.0]], "v_max": 80.0}))
    assert run("gripmap", "build", "--track", track, "--s-dim", 10, "--n-dim", 2, "--theta", 0.01,
               "--out", tmp_path) == EXIT_OK
    code = run("raceline", "optimize", "--track", track, "--gggv", car, "--map", tmp_path / "map.gmap",
               "--layer-step", 1.0, "--n-candidates", 3, "--out", tmp_path)
    assert code == EXIT_INFEASIBLE


# -- exit codes and plumbing ---------------------------------------------------------------------


def test_validation_exit_codes(tmp_path):
    assert run("gripmap", "set", "--map", UNIFORM, "--value", 0.5, "--out", tmp_path) == EXIT_VALIDATION
    assert run("gripmap", "frobnicate", "--out", tmp_path) == EXIT_VALIDATION
    bad = tmp_path / "bad.gmap"
    bad.write_bytes(b"not a grip map at all, definitely not" * 3)
    assert run("gripmap", "inspect", "--map", bad, "--out", tmp_path) == EXIT_VALIDATION
    assert run("gripmap", "build", "--track", CIRCUIT, "--s-dim", 0, "--n-dim", 2, "--out", tmp_path) == EXIT_VALIDATION


def test_io_exit_code(tmp_path):
    assert run("gripmap", "inspect", "--map", tmp_path / "missing.gmap", "--out", tmp_path) == EXIT_IO


def test_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"map": UNIFORM, "cell": [1, 1], "value": 0.6}))
    assert run("gripmap", "set", "--config", cfg, "--out", tmp_path) == EXIT_OK
    assert read_gripmap(tmp_path / "map.gmap").theta[1, 1] == 0.6
    # command line wins over the file
    assert run("gripmap", "set", "--config", cfg, "--value", 0.7, "--out", tmp_path) == EXIT_OK
    assert read_gripmap(tmp_path / "map.gmap").theta[1, 1] == 0.7
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run("gripmap", "set", "--config", cfg, "--out", tmp_path) == EXIT_VALIDATION


def test_rerun_is_idempotent(tmp_path):
    for _ in range(2):
        assert run("gripmap", "set", "--map", UNIFORM, "--region", 100, 200, -2, 2, "--value", 0.8,
                   "--out", tmp_path) == EXIT_OK
        snapshot = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    again = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    assert snapshot == again
    manifest = json.loads(snapshot["manifest.json"])
    assert set(manifest) == {"command", "params", "seed", "inputs", "outputs", "versions"}
    assert manifest["outputs"] == ["map.gmap"]


def test_bench_planner_schema(tmp_path):
    assert run("bench", "planner", "--cycles", 12, "--warmup", 2, "--out", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "bench_planner.json").read_text())
    assert set(doc["configs"]) == {"with_map", "without_map"}
    assert "relative_overhead" in doc
    rows = read_rows(tmp_path / "bench_planner_raw.csv")
    header, body = rows[0], rows[1:]
    assert len(body) == 12
    for cfg in ("with_map", "without_map"):
        col = np.array([float(r[header.index(f"{cfg}_s")]) for r in body])
        assert doc["configs"][cfg]["samples"] == 12
        assert doc["configs"][cfg]["mean_cycle_s"] == pytest.approx(col.mean(), rel=1e-12)
        assert doc["configs"][cfg]["std_cycle_s"] == pytest.approx(col.std(ddof=1), rel=1e-12)
    text = (tmp_path / "bench_planner.txt").read_text()
    assert "with_map" in text and "relative_overhead" in text


def test_bench_lookup(tmp_path):
    assert run("bench", "lookup", "--lookups", 1000, "--repeats", 3, "--sizes", 1000, 8000,
               "--out", tmp_path) == EXIT_OK
    doc = json.loads((tmp_path / "bench_lookup.json").read_text())
    assert set(doc["grids"]) == {"1000", "8000"}


def test_sim_short_run(tmp_path):
    scn = tmp_path / "scn.json"
    doc = json.loads(bundled("scenarios", "vegas_nomap.json").read_text())
    base = bundled("scenarios")
    for key in ("track", "raceline", "gggv", "planner"):
        doc[key] = str((base / doc[key]).resolve())
    doc["duration"] = 1.0
    scn.write_text(json.dumps(doc))
    assert run("sim", "run", "--scenario", scn, "--out", tmp_path) == EXIT_OK
    rows = read_rows(tmp_path / "run.csv")
    assert rows[0] == list(RUN_COLUMNS) and len(rows) == 51
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["seed"] == doc.get("seed", 0)
    first = (tmp_path / "run.csv").read_bytes()
    assert run("sim", "run", "--scenario", scn, "--out", tmp_path) == EXIT_OK
    assert (tmp_path / "run.csv").read_bytes() == first


@pytest.mark.slow
def test_sim_spin_dichotomy(tmp_path):
    a, b = tmp_path / "nomap", tmp_path / "map"
    assert run("sim", "run", "--scenario", bundled("scenarios", "vegas_nomap.json"), "--out", a) == EXIT_OK
    assert run("sim", "run", "--scenario", bundled("scenarios", "vegas_map.json"), "--out", b) == EXIT_OK
    types = lambda p: {e["type"] for e in json.loads((p / "summary.json").read_text())["events"]}
    assert "spin" in types(a)
    assert "spin" not in types(b)
