"""Closed-loop simulation against a ground-truth grip field.

The ego is a point mass that follows the planner's selected trajectory.
While the commanded accelerations fit inside the *true* envelope they are
executed exactly.  Beyond it the command is scaled back onto the envelope
and the lost acceleration integrates into a tracking error.  Sustained
utilization above ``spin_threshold`` for ``spin_dwell`` seconds is a loss of
control and ends the run.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .gggv import GggvModel, load_gggv, utilization_from_limits
from .grid import THETA_CAP, GripMapGrid, build_gripmap, lookup_theta, read_gripmap
from .io import csv_text, write_json, atomic_write_text
from .planner import OpponentState, PlannerConfig, PlannerState, plan_cycle
from .raceline import raceline_from_csv
from .track import TrackGeometry, frenet_to_cartesian, load_track

RUN_COLUMNS = ("t", "s", "n", "x", "y", "v", "ax_cmd", "ay_cmd", "util_assumed", "util_true",
               "theta_assumed", "grip_true")


@dataclass(frozen=True)
class GroundTruthGrip:
    """Grip multiplier: 1 on a plateau around the racing line, linear falloff, floor.

    ``n_rl`` is a constant offset or a pair ``(s, n)`` of arrays describing
    the racing line along the lap.
    """

    n_rl: float | tuple = 0.0
    w_p: float = 3.0
    slope: float = 0.07
    floor: float = 0.6
    s_max: float | None = None

    def __post_init__(self):
        if not (0.0 < self.floor <= 1.0):
            raise ValidationError(f"floor must be in (0, 1], got {self.floor}")
        if self.w_p < 0 or self.slope < 0:
            raise ValidationError("plateau width and slope must be non-negative")
        if not np.isscalar(self.n_rl):
            s, n = (np.asarray(a, dtype=float) for a in self.n_rl)
            if s.shape != n.shape or s.ndim != 1 or s.size < 2:
                raise ValidationError("n_rl table needs matching 1-D s and n arrays")
            object.__setattr__(self, "n_rl", (s, n))

    def line_at(self, s):
        if np.isscalar(self.n_rl):
            return np.full(np.shape(s), float(self.n_rl)) if np.ndim(s) else float(self.n_rl)
        s_tab, n_tab = self.n_rl
        if self.s_max is not None:
            return np.interp(s, s_tab, n_tab, period=self.s_max)
        return np.interp(s, s_tab, n_tab)

    def multiplier(self, s, n):
        off = np.abs(np.asarray(n, dtype=float) - self.line_at(s))
        m = np.clip(1.0 - self.slope * np.maximum(0.0, off - self.w_p), self.floor, 1.0)
        return m if np.ndim(m) else float(m)

    def to_dict(self) -> dict:
        n_rl = self.n_rl if np.isscalar(self.n_rl) else [a.tolist() for a in self.n_rl]
        return {"n_rl": n_rl, "w_p": self.w_p, "slope": self.slope, "floor": self.floor}


def truth_gripmap(truth: GroundTruthGrip, s_max: float, s_dim: int, n_dim: int, w_max: float,
                  closed: bool = True, s_samples: int = 9, theta_cap: float = THETA_CAP) -> GripMapGrid:
    """Planner map matching ``truth``: each cell takes the lowest multiplier it contains.

    The multiplier is concave in n (until the floor), so its minimum over a
    cell's lateral span sits on the span's edges; along s the cell is sampled
    at ``s_samples`` evenly spaced stations including both edges.
    """
    grid = build_gripmap(s_max, s_dim, n_dim, w_max, 1.0, closed=closed, theta_cap=theta_cap)
    s_lo = grid.s_boundaries()
    stations = s_lo[:, None] + grid.delta_s * np.linspace(0.0, 1.0, s_samples)[None, :]
    n_lo = grid.n_boundaries()
    edges = np.stack([n_lo, n_lo + grid.delta_n], axis=-1)  # (N, 2)
    m = truth.multiplier(stations[:, None, :, None], edges[None, :, None, :])
    theta = np.minimum(m.min(axis=(2, 3)), theta_cap)
    return GripMapGrid(grid.s_max, grid.w_max, theta, closed=closed, theta_cap=theta_cap)


@dataclass
class SimVehicle:
    s: float
    n: float
    s_dot: float
    n_dot: float = 0.0
    s_ddot: float = 0.0
    n_ddot: float = 0.0
    progress: float = 0.0
    loss_of_control: bool = False
    spin_time: float | None = None
    command: object = None
    command_t0: float = 0.0
    # tracking error relative to the command: lateral (e, e_dot), longitudinal (es, ev)
    e: float = 0.0
    e_dot: float = 0.0
    es: float = 0.0
    ev: float = 0.0
    over_since: float | None = None

    def planner_state(self) -> PlannerState:
        return PlannerState(self.s, max(self.s_dot, 1e-3), self.s_ddot, self.n, self.n_dot, self.n_ddot)

    def set_command(self, command, t: float):
        self.command = command
        self.command_t0 = t
        self.e = self.e_dot = self.es = self.ev = 0.0


@dataclass
class StepRecord:
    util_assumed: float
    util_true: float
    theta_assumed: float
    grip_true: float
    ax_cmd: float
    ay_cmd: float
    v: float


def step_vehicle(vehicle: SimVehicle, point: dict, truth: GroundTruthGrip, model: GggvModel, dt: float,
                 t: float, track: TrackGeometry, grid: GripMapGrid | None = None,
                 spin_threshold: float = 1.15, spin_dwell: float = 0.3) -> StepRecord:
    """Advance one step towards the commanded kinematic ``point`` (see CandidateTrajectory.sample).

    ``t`` is the time at the end of this step.  Utilization is evaluated at
    the vehicle's actual position, against the planner map (assumed) and the
    truth multiplier (true).
    """
    if not (0.0 < dt <= 0.05):
        raise ValidationError(f"dt must be in (0, 0.05], got {dt}")
    if vehicle.loss_of_control:
        raise ValidationError("vehicle already lost control")
    ax, ay, v = point["ax"], point["ay"], point["v"]
    s_act = point["s"] + vehicle.es
    n_act = point["n"] + vehicle.e
    if track.closed:
        s_act = track.wrap_s(s_act)
    a_z = point["a_z"]
    base = model.base_limits(max(v, 0.0), a_z)
    nominal = utilization_from_limits(ax, ay, base, model.shape_exponent)
    theta = 1.0 if grid is None else lookup_theta(grid, s_act, n_act)
    grip = truth.multiplier(s_act, n_act)
    util_assumed = nominal / theta
    util_true = nominal / grip

    if util_true > 1.0:
        scale = 1.0 / util_true
        lost_ay = ay * (1.0 - scale)
        lost_ax = ax * (1.0 - scale)
        # sliding: the missing lateral force pushes the car away from the turn centre
        vehicle.e_dot -= lost_ay * dt
        vehicle.ev -= lost_ax * dt
        s_ddot = point["s_ddot"] * scale
    else:
        s_ddot = point["s_ddot"]
    vehicle.e += vehicle.e_dot * dt
    vehicle.es += vehicle.ev * dt

    old_s = vehicle.s
    vehicle.s = track.wrap_s(point["s"] + vehicle.es) if track.closed else point["s"] + vehicle.es
    vehicle.n = point["n"] + vehicle.e
    vehicle.s_dot = point["s_dot"] + vehicle.ev
    vehicle.n_dot = point["n_dot"] + vehicle.e_dot
    vehicle.s_ddot = s_ddot
    vehicle.n_ddot = point["n_ddot"]
    ds = vehicle.s - old_s
    if track.closed:
        ds = (ds + 0.5 * track.s_max) % track.s_max - 0.5 * track.s_max
    vehicle.progress += ds

    if util_true > spin_threshold:
        if vehicle.over_since is None:
            vehicle.over_since = t - dt
        if t - vehicle.over_since >= spin_dwell - 1e-9:
            vehicle.loss_of_control = True
            vehicle.spin_time = t
    else:
        vehicle.over_since = None
    return StepRecord(util_assumed, util_true, theta, grip, ax, ay, vehicle.s_dot)


# -- scenarios ---------------------------------------------------------------------


@dataclass(frozen=True)
class OpponentSpec:
    s: float
    n: float
    v: float
    v_cap: float
    accel: float = 2.0


@dataclass
class Scenario:
    track: TrackGeometry
    raceline: object
    model: GggvModel
    planner_map: GripMapGrid | None
    truth: GroundTruthGrip
    ego: dict
    opponents: list
    planner: PlannerConfig
    duration: float = 20.0
    dt: float = 0.02
    planner_period: float = 0.1
    seed: int = 0
    spin_threshold: float = 1.15
    spin_dwell: float = 0.3
    corner_entry_s: tuple = ()
    overtake_margin: float = 10.0
    state_noise: float = 0.0
    name: str = "scenario"
    sources: dict = field(default_factory=dict)


def _resolve(base: Path, value):
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_scenario(path, planner_map_override: str | None = None) -> Scenario:
    """Parse a scenario JSON file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return scenario_from_dict(doc, path.parent, planner_map_override)


def scenario_from_dict(doc: dict, base: Path = Path("."), planner_map_override: str | None = None) -> Scenario:
    required = {"track", "raceline", "truth", "ego", "duration"}
    missing = required - set(doc)
    if missing:
        raise ConfigError(f"scenario missing keys {sorted(missing)}")
    base = Path(base)
    sources = {}
    sources["track"] = _resolve(base, doc["track"])
    track = load_track(sources["track"])
    sources["raceline"] = _resolve(base, doc["raceline"])
    raceline = raceline_from_csv(track, sources["raceline"])
    gg = doc.get("gggv")
    if gg is None:
        model = GggvModel.constant()
    elif isinstance(gg, dict):
        model = GggvModel.from_dict(gg)
    else:
        sources["gggv"] = _resolve(base, gg)
        model = load_gggv(sources["gggv"])
    t = dict(doc["truth"])
    n_rl = t.pop("n_rl", 0.0)
    if n_rl == "raceline":
        n_rl = (raceline.s, raceline.n)
    elif not np.isscalar(n_rl):
        n_rl = tuple(n_rl)
    truth = GroundTruthGrip(n_rl=n_rl, s_max=track.s_max if track.closed else None, **t)
    spec = planner_map_override if planner_map_override is not None else doc.get("planner_map", "uniform:1.0")
    planner_map = _planner_map(spec, base, track, truth, doc, sources)
    pcfg = doc.get("planner", {})
    if isinstance(pcfg, str):
        sources["planner"] = _resolve(base, pcfg)
        pcfg = json.loads(sources["planner"].read_text())
    planner = PlannerConfig.from_dict(pcfg)
    ego = doc["ego"]
    for key in ("s", "v"):
        if key not in ego:
            raise ConfigError(f"ego state needs '{key}'")
    opponents = [OpponentSpec(**o) for o in doc.get("opponents", [])]
    known = {"duration", "dt", "planner_period", "seed", "spin_threshold", "spin_dwell",
             "corner_entry_s", "overtake_margin", "state_noise", "name"}
    extra = {k: doc[k] for k in known if k in doc}
    if "corner_entry_s" in extra:
        extra["corner_entry_s"] = tuple(float(x) for x in extra["corner_entry_s"])
    scn = Scenario(track, raceline, model, planner_map, truth, ego, opponents, planner,
                   sources=sources, **extra)
    _check_timing(scn)
    return scn


def _planner_map(spec, base, track, truth, doc, sources):
    if spec is None or spec == "none":
        return None
    if isinstance(spec, str) and spec.startswith("uniform:"):
        try:
            value = float(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad uniform map spec {spec!r}") from None
        if value == 1.0:
            return None
        dims = doc.get("map_dims", [max(1, int(round(track.s_max / 10.0))), 4])
        return build_gripmap(track, int(dims[0]), int(dims[1]), track.half_width + 1.0, value)
    if spec == "truth":
        dims = doc.get("map_dims", [max(1, int(round(track.s_max / 10.0))), 8])
        return truth_gripmap(truth, track.s_max, int(dims[0]), int(dims[1]), track.half_width + 1.0,
                             closed=track.closed)
    sources["planner_map"] = _resolve(base, spec)
    grid = read_gripmap(sources["planner_map"], closed=track.closed)
    if abs(grid.s_max - track.s_max) > 1e-6 * max(1.0, track.s_max):
        raise ValidationError(f"planner map s_max {grid.s_max} does not match track length {track.s_max}")
    return grid


def _check_timing(scn: Scenario):
    if not (0 < scn.dt <= 0.05):
        raise ConfigError(f"dt must be in (0, 0.05], got {scn.dt}")
    ratio = scn.planner_period / scn.dt
    if scn.planner_period < scn.dt or abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError("planner_period must be a whole multiple of dt")
    if scn.duration <= 0:
        raise ConfigError("duration must be positive")


@dataclass
class RunReport:
    columns: dict
    opponents: dict
    events: list
    summary: dict
    cycles: list

    def csv(self) -> str:
        return csv_text(self.columns)

    def write(self, out_dir) -> list:
        """run.csv, opponents.csv, summary.json and cycles.jsonl (wall-clock timings)."""
        out = Path(out_dir)
        paths = [out / "run.csv", out / "opponents.csv", out / "summary.json", out / "cycles.jsonl"]
        atomic_write_text(paths[0], self.csv())
        atomic_write_text(paths[1], csv_text(self.opponents))
        write_json(paths[2], self.summary)
        atomic_write_text(paths[3], "".join(json.dumps(c, sort_keys=True) + "\n" for c in self.cycles))
        return paths


def run_scenario(scn: Scenario) -> RunReport:
    """Closed loop: replan every ``planner_period``, follow with :func:`step_vehicle`."""
    track, model, grid = scn.track, scn.model, scn.planner_map
    rng = np.random.default_rng(scn.seed)
    ego = scn.ego
    s0 = float(ego["s"])
    veh = SimVehicle(s=s0, n=float(ego.get("n", scn.raceline.offset_at(s0))), s_dot=float(ego["v"]))
    opp_s = np.array([o.s for o in scn.opponents], dtype=float)
    opp_v = np.array([o.v for o in scn.opponents], dtype=float)
    opp_progress = opp_s - s0
    steps = int(round(scn.duration / scn.dt))
    every = int(round(scn.planner_period / scn.dt))
    log = {k: [] for k in RUN_COLUMNS}
    opp_log = {"t": [], "index": [], "s": [], "n": [], "v": []}
    events, cycles = [], []
    entries = sorted(scn.corner_entry_s)
    entry_v = []
    behind = {k: bool(opp_progress[k] > 0) for k in range(len(opp_s))}
    for step in range(steps):
        t = step * scn.dt
        if step % every == 0:
            state = veh.planner_state()
            if scn.state_noise > 0:
                state = state._replace(n=state.n + rng.normal(0.0, scn.state_noise))
            opps = [OpponentState(track.wrap_s(opp_s[k]) if track.closed else opp_s[k], o.n, opp_v[k])
                    for k, o in enumerate(scn.opponents)]
            res = plan_cycle(state, scn.raceline, grid, model, track, opps, scn.planner)
            cyc = res.diagnostics()
            cyc["t"] = round(t, 9)
            cycles.append(cyc)
            if res.emergency:
                events.append({"t": t, "type": "emergency"})
            veh.set_command(res.best, t)
        t_next = (step + 1) * scn.dt
        point = veh.command.sample(track, t_next - veh.command_t0)
        prev_progress = veh.progress
        rec = step_vehicle(veh, point, scn.truth, model, scn.dt, t_next, track, grid,
                           scn.spin_threshold, scn.spin_dwell)
        for k, o in enumerate(scn.opponents):
            opp_v[k] = min(opp_v[k] + o.accel * scn.dt, o.v_cap)
            opp_s[k] += opp_v[k] * scn.dt
            opp_progress[k] += opp_v[k] * scn.dt
            opp_log["t"].append(t_next)
            opp_log["index"].append(k)
            opp_log["s"].append(track.wrap_s(opp_s[k]) if track.closed else opp_s[k])
            opp_log["n"].append(o.n)
            opp_log["v"].append(opp_v[k])
            gap = veh.progress - opp_progress[k]
            if behind[k] and gap > scn.overtake_margin:
                behind[k] = False
                events.append({"t": t_next, "type": "overtake_complete", "opponent": k})
            elif not behind[k] and gap < 0:
                behind[k] = True
        for target in entries:
            lap_pos = s0 + prev_progress, s0 + veh.progress
            for lap in range(int(lap_pos[0] // track.s_max), int(lap_pos[1] // track.s_max) + 1):
                mark = lap * track.s_max + target
                if lap_pos[0] < mark <= lap_pos[1]:
                    entry_v.append({"s": target, "t": t_next, "v": rec.v})
        pose = frenet_to_cartesian(track, veh.s, veh.n) if abs(track.kappa_at(veh.s) * veh.n) < 1 else None
        row = (t_next, veh.s, veh.n, pose.x if pose else math.nan, pose.y if pose else math.nan, rec.v,
               rec.ax_cmd, rec.ay_cmd, rec.util_assumed, rec.util_true, rec.theta_assumed, rec.grip_true)
        for k, val in zip(RUN_COLUMNS, row):
            log[k].append(float(val))
        lo, hi = track.bounds_at(veh.s)
        if not (lo <= veh.n <= hi) and not any(e["type"] == "off_track" for e in events):
            events.append({"t": t_next, "type": "off_track", "s": veh.s, "n": veh.n})
        if veh.loss_of_control:
            events.append({"t": t_next, "type": "spin", "s": veh.s, "n": veh.n})
            break
    columns = {k: np.asarray(v) for k, v in log.items()}
    summary = _summarize(scn, columns, events, entry_v, veh, cycles)
    return RunReport(columns, {k: np.asarray(v) for k, v in opp_log.items()}, events, summary, cycles)


def _summarize(scn, cols, events, entry_v, veh, cycles) -> dict:
    ev = [e["v"] for e in entry_v]
    completed = veh.progress >= scn.track.s_max
    return {
        "name": scn.name,
        "seed": scn.seed,
        "duration_simulated": float(cols["t"][-1]) if cols["t"].size else 0.0,
        "loss_of_control": veh.loss_of_control,
        "spin_time": veh.spin_time,
        "max_util_true": float(np.max(cols["util_true"])) if cols["t"].size else 0.0,
        "max_util_assumed": float(np.max(cols["util_assumed"])) if cols["t"].size else 0.0,
        "corner_entries": entry_v,
        "min_corner_entry_v": min(ev) if ev else None,
        "max_corner_entry_v": max(ev) if ev else None,
        "max_v": float(np.max(cols["v"])) if cols["t"].size else 0.0,
        "distance": veh.progress,
        "lap_completed": bool(completed),
        "n_cycles": len(cycles),
        "n_emergency": sum(1 for e in events if e["type"] == "emergency"),
        "events": events,
        "truth": scn.truth.to_dict() if np.isscalar(scn.truth.n_rl) else {"n_rl": "table"},
        "planner_map": "uniform:1.0" if scn.planner_map is None else "grid",
    }
