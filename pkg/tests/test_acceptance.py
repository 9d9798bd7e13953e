"""End-to-end acceptance checks, one test per numbered criterion.

Each test records a one-line detail string; the conftest hook prints
``criterion N: PASS/FAIL detail`` in the terminal summary.
"""

import json
import math
import time
import zlib

import numpy as np
import pytest

from conftest import circle_points
from oracles import enumerate_paths, grid_scan_index
from gripmap.bench import bench_lookup, bench_planner, default_workload
from gripmap.errors import ChecksumError
from gripmap.gggv import GggvModel, load_gggv
from gripmap.grid import GripMapGrid, build_gripmap, index_of, load_gripmap, lookup_theta, save_gripmap
from gripmap.planner import OpponentState, PlannerConfig, PlannerState, Weights, evaluate_cycle, plan_cycle
from gripmap.raceline import (
    Lattice,
    LatticeConfig,
    build_lattice,
    centerline_path,
    compare_global_vs_map,
    optimize_raceline,
    raceline_csv,
    solve_lattice,
    speed_profile,
)
from gripmap.scenarios import _turn, bundled, circuit_map, integrate_pieces
from gripmap.sim import load_scenario, run_scenario, scenario_from_dict
from gripmap.track import TrackGeometry, load_track


class Clock:
    def __init__(self, limit):
        self.limit = limit
        self.start = time.perf_counter()

    @property
    def elapsed(self):
        return time.perf_counter() - self.start

    def check(self):
        assert self.elapsed < self.limit, f"took {self.elapsed:.1f} s, limit {self.limit} s"


def note(request, text):
    request.node.user_properties.append(("detail", text))


# -- 1: lookup correctness -------------------------------------------------------------------


def probe_points(grid, rng, count):
    ds, dn = grid.delta_s, grid.delta_n
    k = count // 4
    s = [rng.uniform(-0.2 * grid.s_max, 1.2 * grid.s_max, k)]
    n = [rng.uniform(-1.3 * grid.w_max, 1.3 * grid.w_max, k)]
    # exact cell boundaries and their float neighbours
    i = rng.integers(0, grid.s_dim + 1, k)
    j = rng.integers(-grid.n_dim, grid.n_dim + 1, k)
    sb, nb = i * ds, j * dn
    for direction in (-np.inf, np.inf):
        s.append(np.nextafter(sb, direction))
        n.append(np.nextafter(nb, direction))
    s.append(sb)
    n.append(nb)
    extremes = np.array([0.0, -0.0, grid.s_max, -grid.s_max, 3 * grid.s_max + 0.5 * ds, 1e300, -1e300,
                         np.nextafter(grid.s_max, 0), np.nextafter(0.0, -1)])
    s.append(extremes)
    n.append(np.resize([0.0, grid.w_max, -grid.w_max, 1e300, -1e300, np.nextafter(-grid.w_max, -1)],
                       extremes.size))
    return np.concatenate(s), np.concatenate(n)


@pytest.mark.criterion(1)
def test_criterion_1_lookup_correctness(request):
    clock = Clock(10.0)
    rng = np.random.default_rng(2024)
    samples = mismatches = 0
    for g in range(24):
        s_max = float(rng.uniform(50.0, 6000.0))
        w_max = float(rng.uniform(2.0, 15.0))
        grid = GripMapGrid(s_max, w_max, rng.uniform(0.3, 1.2, (int(rng.integers(1, 400)), 2 * int(rng.integers(1, 9)))),
                           closed=bool(g % 2))
        s, n = probe_points(grid, rng, 6000)
        i_ref, j_ref = grid_scan_index(grid, s, n)
        got = index_of(grid, s, n)
        theta = lookup_theta(grid, s, n)
        bad = (got.i != i_ref) | (got.j != j_ref) | (theta != grid.theta[i_ref, j_ref])
        for q in range(0, s.size, 97):  # scalar path too
            one = index_of(grid, float(s[q]), float(n[q]))
            bad[q] |= (one.i, one.j) != (i_ref[q], j_ref[q])
        mismatches += int(np.count_nonzero(bad))
        samples += s.size
    note(request, f"{samples} samples over 24 grids, {mismatches} mismatches, {clock.elapsed:.1f} s")
    assert samples >= 100_000
    assert mismatches == 0
    clock.check()


# -- 2: constant-time lookup ---------------------------------------------------------------------


@pytest.mark.criterion(2)
def test_criterion_2_constant_time_lookup(request):
    clock = Clock(60.0)
    rep = bench_lookup(sizes=(1_000, 1_000_000), lookups=40_000, repeats=31)
    meds = {k: v["median_lookup_s"] * 1e9 for k, v in rep["grids"].items()}
    note(request, "median ns/lookup " + ", ".join(f"{k} cells: {v:.2f}" for k, v in meds.items())
         + f"; ratio {rep['ratio']:.2f}")
    assert rep["ratio"] < 3.0
    clock.check()


# -- 3: planner overhead ------------------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_criterion_3_planner_overhead(request):
    clock = Clock(600.0)
    wl = default_workload(seed=0)
    assert wl.cfg.n_candidates == 1000 and wl.cfg.n_points == 40
    rep = bench_planner(wl, cycles=1000, warmup=50)
    w, wo = rep["with_map"], rep["without_map"]
    note(request, f"with {w['mean_cycle_s'] * 1e3:.3f} ms, without {wo['mean_cycle_s'] * 1e3:.3f} ms, "
                  f"overhead {rep['relative_overhead']:+.2%}, {w['samples']} cycles each")
    assert w["samples"] >= 1000 and wo["samples"] >= 1000
    assert rep["relative_overhead"] < 0.05
    clock.check()


# -- 4: speed-profile analytics ---------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_criterion_4_speed_profile(request, circle100):
    clock = Clock(5.0)
    model = GggvModel.constant(10.0, 10.0, v_max=80.0)
    path = centerline_path(circle100)
    got = {}
    for theta, expected in ((1.0, 31.62), (0.75, 27.39)):
        prof = speed_profile(circle100, path, model, build_gripmap(circle100, 60, 4, 6.0, theta))
        got[theta] = (float(prof.v.min()), float(prof.v.max()))
        assert np.max(np.abs(prof.v - expected)) <= 0.03
        assert math.sqrt(theta * 10.0 * 100.0) == pytest.approx(expected, abs=0.005)
    x = np.arange(0.0, 800.0 + 1e-9, 1.0)
    line = TrackGeometry.from_centerline(x, np.zeros_like(x), -5.0, 5.0, closed=False)
    lpath = centerline_path(line)
    prof = speed_profile(line, lpath, model, build_gripmap(line, 40, 4, 6.0), v_start=5.0)
    kin = np.minimum(np.sqrt(25.0 + 2 * 10.0 * lpath.s), 80.0)
    rel = float(np.max(np.abs(prof.v / kin - 1)))
    note(request, f"circle v at theta 1: {got[1.0][0]:.4f}..{got[1.0][1]:.4f}, theta 0.75: "
                  f"{got[0.75][0]:.4f}..{got[0.75][1]:.4f}; straight max rel error {rel:.2e}")
    assert rel < 1e-3
    clock.check()


# -- 5: lattice optimality ------------------------------------------------------------------------------


def _instances():
    model = GggvModel.constant(10.0, 10.0, v_max=80.0)
    rng = np.random.default_rng(55)
    x, y = integrate_pieces([(80.0, 0.0, 0.0)] + _turn(math.pi / 2, 30.0, 10.0) + [(80.0, 0.0, 0.0)])
    corner = TrackGeometry.from_centerline(x, y, -6.0, 6.0, closed=False)
    cx, cy = circle_points(30.0, 200)
    loop = TrackGeometry.from_centerline(cx, cy, -6.0, 6.0)
    for k in range(6):
        C, K = (3, 5) if k % 2 else (4, 6)
        grid = GripMapGrid(corner.s_max, 7.0, rng.uniform(0.6, 1.2, (12, 4)), closed=False)
        yield build_lattice(corner, model, grid, LatticeConfig(layer_step=corner.s_max / (K - 1), n_candidates=C))
        grid = GripMapGrid(loop.s_max, 7.0, rng.uniform(0.6, 1.2, (9, 4)))
        yield build_lattice(loop, model, grid, LatticeConfig(layer_step=loop.s_max / K, n_candidates=C,
                                                             smooth_weight=0.05), v_ref=rng.uniform(10, 30, K))
    for k in range(12):
        K, C = (6, 4) if k % 3 else (5, 3)
        stage = rng.uniform(0, 1, (K, C, C, C))
        if k % 4 == 0:
            stage = np.round(stage * 3)  # many ties
        lat = Lattice(None, None, None, LatticeConfig(), np.arange(K, dtype=float), np.zeros((K, C)),
                      None, None, None, bool(k % 2), stage=stage)
        yield lat


@pytest.mark.criterion(5)
def test_criterion_5_lattice_optimality(request):
    clock = Clock(30.0)
    count = equal = 0
    for lat in _instances():
        C, K = lat.stage.shape[1], lat.stage.shape[0]
        assert C**K <= 4**6
        idx, total = solve_lattice(lat)
        best, argmins = enumerate_paths(lat.stage, lat.closed)
        count += 1
        equal += int(total == best and any(np.array_equal(idx, p) for p in argmins))
    note(request, f"{equal}/{count} instances equal to exhaustive enumeration, {clock.elapsed:.1f} s")
    assert equal == count
    clock.check()


# -- 6: lap-time improvement --------------------------------------------------------------------------


@pytest.mark.criterion(6)
def test_criterion_6_lap_time_improvement(request, circuit):
    clock = Clock(120.0)
    model = load_gggv(bundled("vehicles", "circuit.json"))
    base = compare_global_vs_map(circuit, model, circuit_map(circuit))
    uniform = compare_global_vs_map(circuit, model, build_gripmap(circuit, 130, 6, 7.0, 0.8))
    sweep = []
    for other in np.linspace(0.75, 1.0, 6):
        grid = circuit_map(circuit, other_theta=float(other))
        assert 0.75 <= grid.theta.min() and grid.theta.max() <= 1.0
        sweep.append(compare_global_vs_map(circuit, model, grid).improvement_fraction)
    note(request, f"improvement {base.improvement_fraction:.2%} ({base.lap_time_map:.2f} s vs "
                  f"{base.lap_time_global:.2f} s), uniform {uniform.improvement_fraction:.1%}, sweep "
                  + " ".join(f"{x:.2%}" for x in sweep) + f", {clock.elapsed:.0f} s")
    assert base.improvement_fraction > 0
    assert uniform.improvement_fraction == 0.0
    assert sweep[0] == 0.0
    assert all(b >= a for a, b in zip(sweep, sweep[1:]))
    clock.check()


# -- 7: spin dichotomy --------------------------------------------------------------------------------


@pytest.mark.criterion(7)
def test_criterion_7_spin_dichotomy(request):
    clock = Clock(120.0)
    nomap = run_scenario(load_scenario(bundled("scenarios", "vegas_nomap.json"))).summary
    withmap = run_scenario(load_scenario(bundled("scenarios", "vegas_map.json"))).summary
    spin = lambda s: any(e["type"] == "spin" for e in s["events"])
    note(request, f"no map: spin={spin(nomap)} max util_true {nomap['max_util_true']:.3f} entry v "
                  f"{nomap['min_corner_entry_v']}; map: spin={spin(withmap)} max util_true "
                  f"{withmap['max_util_true']:.3f} entry v {withmap['min_corner_entry_v']}")
    assert spin(nomap) and nomap["loss_of_control"]
    assert nomap["max_util_true"] > 1.3
    assert not spin(withmap) and not withmap["loss_of_control"]
    assert withmap["max_util_true"] <= 1.02
    assert withmap["min_corner_entry_v"] < nomap["min_corner_entry_v"]
    clock.check()


# -- 8: determinism and persistence ---------------------------------------------------------------


@pytest.mark.criterion(8)
def test_criterion_8_determinism(request, circuit):
    clock = Clock(30.0)
    model = load_gggv(bundled("vehicles", "circuit.json"))
    lattice = LatticeConfig(layer_step=4.0, n_candidates=5, iterations=2)
    csvs = [raceline_csv(r.path, r.profile) for r in
            (optimize_raceline(circuit, model, circuit_map(circuit), lattice) for _ in range(2))]
    assert csvs[0] == csvs[1]

    doc = json.loads(bundled("scenarios", "vegas_map.json").read_text())
    doc["duration"] = 3.0
    runs = [run_scenario(scenario_from_dict(doc, bundled("scenarios"))) for _ in range(2)]
    assert runs[0].csv() == runs[1].csv()
    assert json.dumps(runs[0].summary, sort_keys=True, default=str) == json.dumps(runs[1].summary, sort_keys=True, default=str)

    rng = np.random.default_rng(8)
    corrupted_caught = 0
    for k in range(20):
        grid = GripMapGrid(float(rng.uniform(10, 5000)), float(rng.uniform(1, 10)),
                           rng.uniform(0.1, 1.2, (int(rng.integers(1, 300)), 2 * int(rng.integers(1, 6)))))
        blob = save_gripmap(grid)
        back = load_gripmap(blob)
        assert save_gripmap(back) == blob
        assert back.theta.tobytes() == grid.theta.tobytes()
        assert (back.s_max, back.w_max) == (grid.s_max, grid.w_max)
        assert int.from_bytes(blob[-4:], "little") == zlib.crc32(blob[:-4])
        bad = bytearray(blob)
        pos = int(rng.integers(0, len(blob) - 4))
        bad[pos] ^= 1 << int(rng.integers(0, 8))
        with pytest.raises(ChecksumError):
            load_gripmap(bytes(bad))
        corrupted_caught += 1
    note(request, f"raceline CSV and run report byte-identical; 20 map round trips exact, "
                  f"{corrupted_caught} corruptions rejected, {clock.elapsed:.1f} s")
    clock.check()


# -- 9: soft constraint consistency ------------------------------------------------------------------


def hard_selection(terms, weights):
    """Lowest non-grip cost among candidates with no utilization excess; ties to the lower row."""
    best, best_cost = None, math.inf
    w = weights
    for r in range(terms.shape[0]):
        if terms[r, 3] != 0.0:
            continue
        cost = w.track * terms[r, 0] + w.jerk * terms[r, 1] + w.opponent * terms[r, 2] - w.progress * terms[r, 4]
        if cost < best_cost:
            best, best_cost = r, cost
    return best


@pytest.mark.criterion(9)
def test_criterion_9_soft_equals_hard(request, circuit, circuit_raceline, circuit_grid):
    clock = Clock(60.0)
    model = load_gggv(bundled("vehicles", "circuit.json"))
    weights = Weights(grip=1e6)
    cfg = PlannerConfig(weights=weights)
    rng = np.random.default_rng(99)
    agree = tested = contested = drawn = 0
    while tested < 100:
        drawn += 1
        s = float(rng.uniform(0, circuit.s_max))
        state = PlannerState(s, float(rng.uniform(15.0, 45.0)), float(rng.uniform(-3, 3)),
                             float(np.clip(circuit_raceline.offset_at(s) + rng.normal(0, 1.5), -5, 5)),
                             float(rng.uniform(-1, 1)))
        opps = [OpponentState((s + float(rng.uniform(10, 40))) % circuit.s_max, float(rng.uniform(-4, 4)),
                              float(rng.uniform(10, 35)))] if rng.uniform() < 0.5 else []
        ev = evaluate_cycle(state, circuit_raceline, circuit_grid, model, circuit, opps, cfg)
        hard = hard_selection(ev.terms, weights)
        if hard is None:
            continue
        tested += 1
        free = hard_selection(np.where(np.arange(5) == 3, 0.0, ev.terms), weights)
        contested += int(ev.terms[free, 3] > 0)
        soft = plan_cycle(state, circuit_raceline, circuit_grid, model, circuit, opps, cfg)
        agree += int(soft.best.index == int(ev.rows[hard]))
    note(request, f"{agree}/{tested} cycles agree ({contested} where the grip-blind choice had excess, "
                  f"{drawn - tested} draws without a zero-excess candidate skipped), {clock.elapsed:.1f} s")
    assert agree == tested
    clock.check()
