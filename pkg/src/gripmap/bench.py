"""Wall-clock benchmarks for the planner cycle and for map lookups.

Configurations are interleaved cycle by cycle so slow drifts in machine
load hit both alike, and the garbage collector is paused while timing.
"""

from __future__ import annotations

import gc
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .gggv import GggvModel, load_gggv
from .grid import GripMapGrid, build_gripmap, lookup_theta, read_gripmap
from .planner import OpponentState, PlannerConfig, PlannerState, plan_cycle
from .raceline import RacelinePath, raceline_from_csv
from .track import TrackGeometry, load_track

CONFIGS = ("with_map", "without_map")


@dataclass
class PlannerWorkload:
    track: TrackGeometry
    raceline: RacelinePath
    grid: GripMapGrid
    model: GggvModel
    cfg: PlannerConfig
    states: list
    opponents: list = field(default_factory=list)


def default_workload(seed: int = 0, n_states: int = 64, opponent: bool = True,
                     degenerate: bool = False) -> PlannerWorkload:
    """Bundled circuit with its varying-grip map and the default 1000 x 40 sampling.

    Start states are drawn once from ``seed`` near the raceline.  With
    ``degenerate`` every candidate fails the hard checks (an impossible
    curvature limit), so a cycle has nothing to look up.
    """
    from .scenarios import bundled

    track = load_track(bundled("tracks", "circuit.csv"))
    raceline = raceline_from_csv(track, bundled("racelines", "circuit.csv"))
    grid = read_gripmap(bundled("maps", "circuit.gmap"), closed=track.closed)
    model = load_gggv(bundled("vehicles", "circuit.json"))
    cfg = PlannerConfig(kappa_max=1e-9) if degenerate else PlannerConfig()
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, track.s_max, n_states)
    n = np.clip(raceline.offset_at(s) + rng.normal(0.0, 0.5, n_states), -4.0, 4.0)
    v = rng.uniform(20.0, 40.0, n_states)
    states = [PlannerState(float(a), float(b), 0.0, float(c)) for a, b, c in zip(s, v, n)]
    opponents = []
    if opponent:
        opponents = [[OpponentState(float((st.s + 25.0) % track.s_max), 0.0, st.s_dot - 3.0)]
                     for st in states]
    return PlannerWorkload(track, raceline, grid, model, cfg, states, opponents)


def _stats(samples) -> dict:
    a = np.asarray(samples, dtype=float)
    return {"mean_cycle_s": float(a.mean()), "std_cycle_s": float(a.std(ddof=1)) if a.size > 1 else 0.0,
            "samples": int(a.size)}


def bench_planner(workload: PlannerWorkload, cycles: int = 1000, warmup: int = 50) -> dict:
    """Time ``plan_cycle`` with and without the map on the same states.

    The two configurations alternate which one runs first each cycle.
    Returns per-configuration statistics, the relative overhead
    ``mean_with / mean_without - 1`` and the raw per-cycle log.
    """
    if cycles < 1 or warmup < 0:
        raise ValueError("cycles must be >= 1 and warmup >= 0")
    w = workload
    times = {c: [] for c in CONFIGS}
    first = []

    def run(config, k):
        opp = w.opponents[k] if w.opponents else ()
        t0 = time.perf_counter()
        plan_cycle(w.states[k], w.raceline, w.grid, w.model, w.track, opp, w.cfg,
                   grip_cost=config == "with_map")
        return time.perf_counter() - t0

    enabled = gc.isenabled()
    gc.collect()
    gc.disable()
    try:
        for i in range(warmup + cycles):
            k = i % len(w.states)
            order = CONFIGS if i % 2 == 0 else CONFIGS[::-1]
            elapsed = {c: run(c, k) for c in order}
            if i >= warmup:
                for c in CONFIGS:
                    times[c].append(elapsed[c])
                first.append(order[0])
    finally:
        if enabled:
            gc.enable()

    report = {c: _stats(times[c]) for c in CONFIGS}
    report["relative_overhead"] = report["with_map"]["mean_cycle_s"] / report["without_map"]["mean_cycle_s"] - 1.0
    report["raw"] = {
        "cycle": list(range(cycles)),
        "state": [(i + warmup) % len(w.states) for i in range(cycles)],
        "with_map_s": times["with_map"],
        "without_map_s": times["without_map"],
        "first": first,
    }
    return report


def lookup_grid(cells: int, n_dim: int = 4, s_max: float = 5000.0) -> GripMapGrid:
    """Random-valued grid with ``cells`` = s_dim * 2 * n_dim."""
    s_dim = max(1, cells // (2 * n_dim))
    rng = np.random.default_rng(cells)
    theta = rng.uniform(0.5, 1.0, (s_dim, 2 * n_dim))
    return GripMapGrid(s_max, 8.0, theta, closed=True)


def bench_lookup(sizes=(1_000, 1_000_000), lookups: int = 40_000, repeats: int = 31,
                 seed: int = 0) -> dict:
    """Median per-lookup latency of a batched ``lookup_theta`` call per grid size."""
    rng = np.random.default_rng(seed)
    out = {}
    for cells in sizes:
        grid = lookup_grid(cells)
        s = rng.uniform(0.0, grid.s_max, lookups)
        n = rng.uniform(-grid.w_max, grid.w_max, lookups)
        lookup_theta(grid, s, n)
        per = []
        gc.disable()
        try:
            for _ in range(repeats):
                t0 = time.perf_counter()
                lookup_theta(grid, s, n)
                per.append((time.perf_counter() - t0) / lookups)
        finally:
            gc.enable()
        out[str(grid.s_dim * grid.N)] = {
            "s_dim": grid.s_dim, "n_dim": grid.n_dim, "lookups": lookups, "repeats": repeats,
            "median_lookup_s": float(np.median(per)), "samples_s": per,
        }
    meds = [v["median_lookup_s"] for v in out.values()]
    return {"grids": out, "ratio": max(meds) / min(meds)}


def planner_table(report: dict) -> str:
    """Aligned text table of a :func:`bench_planner` report."""
    lines = [f"{'config':<12} {'mean [s]':>12} {'std [s]':>12} {'samples':>8}"]
    for c in CONFIGS:
        r = report[c]
        lines.append(f"{c:<12} {r['mean_cycle_s']:>12.6f} {r['std_cycle_s']:>12.6f} {r['samples']:>8d}")
    lines.append(f"relative_overhead {report['relative_overhead']:+.4%}")
    return "\n".join(lines) + "\n"


def quick_workload(workload: PlannerWorkload, **cfg) -> PlannerWorkload:
    """Copy of ``workload`` with planner settings replaced (used by tests)."""
    return replace(workload, cfg=replace(workload.cfg, **cfg))
