"""Minimum-lap-time raceline under grid-scaled g-g-g-v limits.

Two stages:

* a dynamic program over a lattice of lateral offsets at evenly spaced
  knots.  The state is the pair of offsets at two consecutive knots, so the
  stage cost can see three points: traversal time at the quasi-steady
  cornering speed of the circle through them, plus ``smooth_weight`` times
  the squared turning angle.  Closed tracks are solved once per start pair
  and the cheapest consistent loop is kept.
* a forward/backward pass speed profile on the winning path, re-sampled
  densely through a periodic cubic spline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, InfeasibleError, ValidationError
from .gggv import GggvModel, Limits, utilization_from_limits
from .grid import GripMapGrid, build_gripmap, lookup_theta
from .io import csv_text, read_csv
from .track import TrackGeometry, frenet_to_cartesian


@dataclass(frozen=True, eq=False)
class RacelinePath:
    s: np.ndarray
    n: np.ndarray
    x: np.ndarray
    y: np.ndarray
    kappa: np.ndarray
    heading_rel: np.ndarray
    closed: bool
    s_max: float

    def __len__(self):
        return len(self.s)

    def offset_at(self, s):
        """Lateral offset of the path at arbitrary ``s`` (linear interpolation)."""
        if self.closed:
            return np.interp(s, self.s, self.n, period=self.s_max)
        return np.interp(s, self.s, self.n)


@dataclass(frozen=True, eq=False)
class SpeedProfile:
    v: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    utilization: np.ndarray
    lap_time: float


@dataclass(frozen=True)
class LatticeConfig:
    layer_step: float = 2.0
    n_candidates: int = 9
    smooth_weight: float = 0.1
    margin: float = 0.5
    output_step: float = 1.0
    # the quasi-steady speed of a triple is capped at (1 + speed_slack) times
    # the previous iterate's profile, so kinks cannot buy unreachable speed
    speed_slack: float = 0.1
    iterations: int = 6


@dataclass(frozen=True, eq=False)
class Raceline:
    path: RacelinePath
    profile: SpeedProfile
    knot_s: np.ndarray
    knot_n: np.ndarray
    knot_index: np.ndarray
    dp_cost: float

    @property
    def lap_time(self) -> float:
        return self.profile.lap_time


def _menger(x, y, closed):
    """Signed curvature of the circle through each point and its neighbours."""
    if closed:
        xa, ya, xc, yc = np.roll(x, 1), np.roll(y, 1), np.roll(x, -1), np.roll(y, -1)
    else:
        xa, ya = np.concatenate([[x[0]], x[:-1]]), np.concatenate([[y[0]], y[:-1]])
        xc, yc = np.concatenate([x[1:], [x[-1]]]), np.concatenate([y[1:], [y[-1]]])
    d1x, d1y = x - xa, y - ya
    d2x, d2y = xc - x, yc - y
    cross = d1x * d2y - d1y * d2x
    denom = np.hypot(d1x, d1y) * np.hypot(d2x, d2y) * np.hypot(xc - xa, yc - ya)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    if not closed and len(k) > 2:
        k[0], k[-1] = k[1], k[-2]
    return k


def _wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def path_from_offsets(track: TrackGeometry, s, n, bound_tol: float = 1e-9) -> RacelinePath:
    s = np.asarray(s, dtype=float)
    n = np.asarray(n, dtype=float)
    lo, hi = track.bounds_at(s)
    if np.any(n < lo - bound_tol) or np.any(n > hi + bound_tol):
        k = int(np.argmax((n < lo - bound_tol) | (n > hi + bound_tol)))
        raise ValidationError(f"path leaves the track at s={s[k]:.3f} (n={n[k]:.3f})")
    pose = frenet_to_cartesian(track, s, n)
    x, y = np.asarray(pose.x), np.asarray(pose.y)
    if track.closed:
        dx, dy = np.roll(x, -1) - np.roll(x, 1), np.roll(y, -1) - np.roll(y, 1)
    else:
        dx, dy = np.gradient(x), np.gradient(y)
    rel = _wrap_angle(np.arctan2(dy, dx) - track.heading_at(s))
    if np.any(np.abs(rel) > np.pi / 2):
        k = int(np.argmax(np.abs(rel)))
        raise ValidationError(f"relative heading exceeds pi/2 at s={s[k]:.3f}")
    return RacelinePath(s, n, x, y, _menger(x, y, track.closed), rel, track.closed, track.s_max)


def centerline_path(track: TrackGeometry) -> RacelinePath:
    return path_from_offsets(track, track.s, np.zeros_like(track.s))


def constant_offset_path(track: TrackGeometry, offset: float) -> RacelinePath:
    return path_from_offsets(track, track.s, np.full_like(track.s, float(offset)))


# -- speed profile ----------------------------------------------------------------


def speed_profile(
    track: TrackGeometry, path: RacelinePath, model: GggvModel, grid: GripMapGrid,
    v_start: float | None = None, v_min: float = 0.5, tol: float = 1e-9, max_sweeps: int = 50,
) -> SpeedProfile:
    """Pointwise-maximal speed profile along ``path``.

    Cornering cap, then forward (traction) and backward (braking) passes
    repeated until nothing moves.  The acceleration of segment k -> k+1 is
    charged to layer k and must fit in the p-norm remainder left by that
    layer's lateral acceleration.  ``v_start`` pins the first layer of an
    open path.
    """
    K = len(path)
    closed = path.closed
    p = model.shape_exponent
    theta = np.asarray(lookup_theta(grid, path.s, path.n), dtype=float)
    a_z = np.atleast_1d(track.a_z_at(path.s))
    kap = np.abs(path.kappa)
    ds = np.hypot(np.diff(path.x, append=path.x[0] if closed else path.x[-1]),
                  np.diff(path.y, append=path.y[0] if closed else path.y[-1]))
    n_seg = K if closed else K - 1
    if np.any(ds[:n_seg] <= 0):
        raise ValidationError("path has coincident consecutive layers")
    if not closed:
        ds[-1] = ds[-2]  # no segment after the last layer; keeps ax finite

    cap = np.asarray(model.cornering_speed(kap, theta, a_z), dtype=float)
    if np.any(cap < v_min):
        k = int(np.argmin(cap))
        raise InfeasibleError(
            f"layer {k} (s={path.s[k]:.2f}) cannot be driven above {v_min} m/s: "
            f"theta={theta[k]:.3f}, kappa={path.kappa[k]:.4g}",
            layer=k, s=float(path.s[k]),
        )
    v = cap.copy()
    if not closed and v_start is not None:
        v[0] = min(v[0], float(v_start))

    const = model._const

    def limits(k, vk):
        if const is not None:
            base = const
        else:
            base = model.base_limits(vk, a_z[k])
        t = theta[k]
        return base.ax_max * t, base.ax_min * t, base.ay_max * t

    def remainder(k, vk, braking):
        axp, axn, ayl = limits(k, vk)
        r = min(vk * vk * kap[k] / ayl, 1.0)
        frac = 0.0 if r >= 1.0 else (1.0 - r**p) ** (1.0 / p)
        return (axn if braking else axp) * frac

    def forward(k, k1):
        reach = math.sqrt(v[k] * v[k] + 2.0 * remainder(k, v[k], False) * ds[k])
        if reach < v[k1]:
            v[k1] = reach

    def backward(k, k1):
        v1 = v[k1]
        vk = v[k]
        if vk <= v1:
            return
        if (vk * vk - v1 * v1) / (2.0 * ds[k]) <= remainder(k, vk, True):
            return
        lo, hi = v1, vk
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if (mid * mid - v1 * v1) / (2.0 * ds[k]) <= remainder(k, mid, True):
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-13 * hi:
                break
        v[k] = lo

    if closed:
        start = int(np.argmin(cap))
        order = [(start + m) % K for m in range(K)]
        for _ in range(max_sweeps):
            before = v.copy()
            for k in order:
                forward(k, (k + 1) % K)
            for k1 in reversed(order):
                backward((k1 - 1) % K, k1)
            if np.max(np.abs(v - before)) < tol:
                break
        else:
            raise InfeasibleError("speed profile did not converge around the lap")
    else:
        for _ in range(max_sweeps):
            before = v.copy()
            for k in range(K - 1):
                forward(k, k + 1)
            for k in range(K - 2, -1, -1):
                backward(k, k + 1)
            if np.max(np.abs(v - before)) < tol:
                break

    if closed:
        v_next = np.roll(v, -1)
    else:
        v_next = np.append(v[1:], v[-1])
    ax = (v_next**2 - v**2) / (2.0 * ds)
    if not closed:
        ax[-1] = 0.0
    ay = v**2 * path.kappa
    seg_t = 2.0 * ds[:n_seg] / (v[:n_seg] + v_next[:n_seg])
    t = np.concatenate([[0.0], np.cumsum(seg_t)])
    lap_time = float(t[-1])
    t = t[:K]
    if const is not None:
        base = Limits(*(np.full(K, c) for c in const))
    else:
        base = model.base_limits(v, a_z)
    util = np.asarray(utilization_from_limits(ax, ay, base.scaled(theta), p))
    return SpeedProfile(v, ax, ay, t, theta, util, lap_time)


# -- lattice dynamic program -------------------------------------------------------


@dataclass(eq=False)
class Lattice:
    """Knots, candidate offsets and the precomputed stage-cost tensors."""

    track: TrackGeometry
    model: GggvModel
    grid: GripMapGrid
    config: LatticeConfig
    s: np.ndarray  # (K,)
    offsets: np.ndarray  # (K, C), candidate c at knot k
    x: np.ndarray
    y: np.ndarray
    ref_heading: np.ndarray  # reference heading at segment midpoints (K,)
    closed: bool
    v_ref: np.ndarray | None = None  # per-knot speed ceiling, or None
    stage: np.ndarray = field(default=None, repr=False)  # (K, C, C, C)

    @property
    def n_knots(self) -> int:
        return len(self.s)

    @property
    def n_candidates(self) -> int:
        return self.offsets.shape[1]

    def triple_cost(self, k: int, a: int, b: int, c: int) -> float:
        """Stage cost at knot k for offsets (a at k-1, b at k, c at k+1), scalar math."""
        K = self.n_knots
        km, kp = (k - 1) % K, (k + 1) % K
        ax_, ay_ = self.x[km, a], self.y[km, a]
        bx, by = self.x[k, b], self.y[k, b]
        cx, cy = self.x[kp, c], self.y[kp, c]
        d1x, d1y, d2x, d2y = bx - ax_, by - ay_, cx - bx, cy - by
        for (dx, dy), kk in (((d1x, d1y), km), ((d2x, d2y), k)):
            if abs(_wrap_angle(math.atan2(dy, dx) - self.ref_heading[kk])) > math.pi / 2:
                return math.inf
        l1, l2 = math.hypot(d1x, d1y), math.hypot(d2x, d2y)
        l3 = math.hypot(cx - ax_, cy - ay_)
        cross = d1x * d2y - d1y * d2x
        kappa = 2.0 * cross / (l1 * l2 * l3) if l1 * l2 * l3 > 0 else 0.0
        theta = lookup_theta(self.grid, self.s[k], self.offsets[k, b])
        v = float(self.model.cornering_speed(kappa, theta, self.track.a_z_at(self.s[k])))
        if self.v_ref is not None:
            v = min(v, float(self.v_ref[k]))
        if v <= 0:
            return math.inf
        turn = math.atan2(cross, d1x * d2x + d1y * d2y)
        return 0.5 * (l1 + l2) / v + self.config.smooth_weight * turn * turn


def knot_positions(track: TrackGeometry, layer_step: float) -> np.ndarray:
    """Evenly spaced knots dividing the lap (open tracks include both ends)."""
    segments = max(3, int(round(track.s_max / layer_step)))
    h = track.s_max / segments
    s = np.arange(segments) * h if track.closed else np.arange(segments + 1) * h
    if not track.closed:
        s[-1] = track.s_max
    return s


def build_lattice(track: TrackGeometry, model: GggvModel, grid: GripMapGrid,
                  config: LatticeConfig = LatticeConfig(), v_ref=None) -> Lattice:
    """Knots and candidates for ``track``; ``v_ref`` is an optional per-knot speed ceiling."""
    C = int(config.n_candidates)
    if C < 3:
        raise ConfigError(f"n_candidates must be >= 3, got {C}")
    if not config.layer_step > 0:
        raise ConfigError("layer_step must be positive")
    s = knot_positions(track, config.layer_step)
    K = len(s)
    lo, hi = track.bounds_at(s)
    lo = np.asarray(lo) + config.margin
    hi = np.asarray(hi) - config.margin
    if np.any(lo >= hi):
        raise ConfigError(f"margin {config.margin} leaves no drivable width at some knot")
    offsets = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, C)[None, :]
    # candidate 0 is the most central one; ties in the DP resolve toward it
    order = np.argsort(np.abs(offsets), axis=1, kind="stable")
    offsets = np.take_along_axis(offsets, order, axis=1)
    pose = frenet_to_cartesian(track, np.repeat(s, C).reshape(K, C), offsets)
    s_mid = s + 0.5 * (np.append(s[1:], track.s_max) - s) if track.closed else s + 0.5 * np.diff(s, append=s[-1])
    lat = Lattice(track, model, grid, config, s, offsets, np.asarray(pose.x), np.asarray(pose.y),
                  np.atleast_1d(track.heading_at(s_mid)), track.closed,
                  None if v_ref is None else np.broadcast_to(np.asarray(v_ref, dtype=float), (K,)).copy())
    lat.stage = _stage_tensor(lat)
    return lat


def _stage_tensor(lat: Lattice) -> np.ndarray:
    K, C = lat.offsets.shape
    idx = np.arange(K)
    km, kp = (idx - 1) % K, (idx + 1) % K
    # d1[k, a, b]: from candidate a at k-1 to b at k
    d1x = lat.x[:, None, :] - lat.x[km][:, :, None]
    d1y = lat.y[:, None, :] - lat.y[km][:, :, None]
    d2x = lat.x[kp][:, None, :] - lat.x[:, :, None]  # (k, b, c)
    d2y = lat.y[kp][:, None, :] - lat.y[:, :, None]
    l1 = np.hypot(d1x, d1y)
    l2 = np.hypot(d2x, d2y)
    l3 = np.hypot(lat.x[kp][:, None, :] - lat.x[km][:, :, None],
                  lat.y[kp][:, None, :] - lat.y[km][:, :, None])  # (k, a, c)
    h_in = np.abs(_wrap_angle(np.arctan2(d1y, d1x) - lat.ref_heading[km][:, None, None])) > np.pi / 2
    h_out = np.abs(_wrap_angle(np.arctan2(d2y, d2x) - lat.ref_heading[:, None, None])) > np.pi / 2

    cross = d1x[:, :, :, None] * d2y[:, None, :, :] - d1y[:, :, :, None] * d2x[:, None, :, :]
    dot = d1x[:, :, :, None] * d2x[:, None, :, :] + d1y[:, :, :, None] * d2y[:, None, :, :]
    denom = l1[:, :, :, None] * l2[:, None, :, :] * l3[:, :, None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        kappa = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    theta = np.asarray(lookup_theta(lat.grid, np.repeat(lat.s, C), lat.offsets.ravel())).reshape(K, C)
    a_z = np.atleast_1d(lat.track.a_z_at(lat.s))
    v = np.asarray(lat.model.cornering_speed(kappa, theta[:, None, :, None], a_z[:, None, None, None]))
    if lat.v_ref is not None:
        v = np.minimum(v, lat.v_ref[:, None, None, None])
    turn = np.arctan2(cross, dot)
    with np.errstate(divide="ignore"):
        cost = 0.5 * (l1[:, :, :, None] + l2[:, None, :, :]) / v + lat.config.smooth_weight * turn**2
    bad = h_in[:, :, :, None] | h_out[:, None, :, :] | ~(v > 0)
    return np.where(bad, np.inf, cost)


def solve_lattice(lat: Lattice):
    """Optimal candidate index per knot and its total stage cost."""
    K, C = lat.offsets.shape
    stage = lat.stage
    if lat.closed:
        S = C * C
        V = np.full((S, C, C), np.inf)
        V[np.arange(S), np.arange(S) // C, np.arange(S) % C] = 0.0
        back = np.empty((K, S, C, C), dtype=np.int16)
        for k in range(1, K):
            tot = V[:, :, :, None] + stage[k][None]  # (S, a, b, c)
            back[k] = np.argmin(tot, axis=1)
            V = np.take_along_axis(tot, back[k][:, None].astype(np.intp), axis=1)[:, 0]
        a0 = np.arange(S) // C
        b0 = np.arange(S) % C
        # V[s, c_{K-1}, c_K] with c_K == c_0 == a0, then close with stage 0
        closing = V[np.arange(S), :, a0] + stage[0][:, a0, b0].T  # (S, c_{K-1})
        last = np.argmin(closing, axis=1)
        totals = closing[np.arange(S), last]
        best = int(np.argmin(totals))
        total = float(totals[best])
        if not math.isfinite(total):
            _raise_no_path(lat)
        path = np.empty(K, dtype=np.intp)
        path[K - 1] = last[best]
        ck, ck1 = int(last[best]), int(a0[best])  # (c_{K-1}, c_K == c_0)
        for k in range(K - 1, 0, -1):
            a = int(back[k][best, ck, ck1])
            path[k - 1] = a
            ck, ck1 = a, ck
        return path, total
    V = np.zeros((C, C))
    back = np.empty((K, C, C), dtype=np.int16)
    for k in range(1, K - 1):
        tot = V[:, :, None] + stage[k]  # (a, b, c)
        back[k] = np.argmin(tot, axis=0)
        V = np.take_along_axis(tot, back[k][None].astype(np.intp), axis=0)[0]
    flat = int(np.argmin(V))
    total = float(V.flat[flat])
    if not math.isfinite(total):
        _raise_no_path(lat)
    path = np.empty(K, dtype=np.intp)
    path[K - 2], path[K - 1] = divmod(flat, C)
    for k in range(K - 2, 0, -1):
        path[k - 1] = back[k][path[k], path[k + 1]]
    return path, total


def _raise_no_path(lat: Lattice):
    K = lat.n_knots
    for k in range(K):
        if not lat.closed and (k == 0 or k == K - 1):
            continue
        if not np.isfinite(lat.stage[k]).any():
            # speeds are positive for any theta > 0, so only the heading limit empties a knot
            raise ConfigError(
                f"no admissible transition at knot {k} (s={lat.s[k]:.2f}): lattice too coarse "
                f"for the relative-heading limit (layer_step {lat.config.layer_step})"
            )
    raise InfeasibleError("no feasible closed path through the lattice")


def path_cost(lat: Lattice, idx) -> float:
    """Total stage cost of a candidate-index sequence (summed in DP order)."""
    K = lat.n_knots
    ks = list(range(1, K)) + [0] if lat.closed else list(range(1, K - 1))
    total = 0.0
    for k in ks:
        total += lat.stage[k][idx[(k - 1) % K], idx[k], idx[(k + 1) % K]]
    return float(total)


def densify(track: TrackGeometry, knot_s, knot_n, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Spline the knot offsets onto an evenly spaced s grid and clip to the track."""
    count = max(4, int(math.ceil(track.s_max / step)))
    h = track.s_max / count
    if track.closed:
        s = np.arange(count) * h
        spl = CubicSpline(np.append(knot_s, track.s_max), np.append(knot_n, knot_n[0]),
                          bc_type="periodic")
    else:
        s = np.arange(count + 1) * h
        s[-1] = track.s_max
        spl = CubicSpline(knot_s, knot_n, bc_type="natural")
    n = spl(s)
    lo, hi = track.bounds_at(s)
    return s, np.clip(n, lo, hi)


def _knot_speeds(path: RacelinePath, profile: SpeedProfile, knot_s) -> np.ndarray:
    if path.closed:
        return np.interp(knot_s, path.s, profile.v, period=path.s_max)
    return np.interp(knot_s, path.s, profile.v)


def optimize_raceline(
    track: TrackGeometry, model: GggvModel, grid: GripMapGrid,
    lattice: LatticeConfig = LatticeConfig(), v_start: float | None = None,
) -> Raceline:
    """Lattice DP seeded by the centerline profile, re-solved while the lap time improves.

    Each round caps the triple speeds at the previous round's exact profile
    (plus slack) and evaluates the winner with :func:`speed_profile`; the
    fastest evaluated round is returned.
    """
    if lattice.iterations < 1:
        raise ConfigError("iterations must be >= 1")
    step = min(lattice.output_step, grid.delta_s, track.spacing)
    seed = centerline_path(track)
    ref_path, ref_profile = seed, speed_profile(track, seed, model, grid, v_start=v_start)
    best = None
    for _ in range(lattice.iterations):
        knots = knot_positions(track, lattice.layer_step)
        v_ref = _knot_speeds(ref_path, ref_profile, knots) * (1.0 + lattice.speed_slack)
        lat = build_lattice(track, model, grid, lattice, v_ref=v_ref)
        idx, cost = solve_lattice(lat)
        knot_n = lat.offsets[np.arange(lat.n_knots), idx]
        s, n = densify(track, lat.s, knot_n, step)
        path = path_from_offsets(track, s, n)
        profile = speed_profile(track, path, model, grid, v_start=v_start)
        if best is not None and profile.lap_time >= best.lap_time:
            break
        best = Raceline(path, profile, lat.s, knot_n, idx, cost)
        ref_path, ref_profile = path, profile
    return best


# -- global vs. spatial comparison -----------------------------------------------


@dataclass(frozen=True, eq=False)
class Comparison:
    lap_time_map: float
    lap_time_global: float
    improvement_fraction: float
    theta_global: float
    with_map: Raceline
    with_global: Raceline


def reachable_min_theta(track: TrackGeometry, grid: GripMapGrid) -> float:
    """Smallest theta over every cell whose area overlaps the drivable corridor."""
    lo_n = grid.n_boundaries()
    hi_n = lo_n + grid.delta_n
    best = math.inf
    edges = grid.s_boundaries()
    for i in range(grid.s_dim):
        a, b = edges[i], edges[i] + grid.delta_s
        inside = track.s[(track.s >= a) & (track.s < b)]
        probe = np.concatenate([[a, min(b, track.s_max)], inside])
        n_lo, n_hi = track.bounds_at(probe)
        reach = (lo_n < np.max(n_hi)) & (hi_n > np.min(n_lo))
        if reach.any():
            best = min(best, float(grid.theta[i, reach].min()))
    return best


def compare_global_vs_map(
    track: TrackGeometry, model: GggvModel, grid: GripMapGrid,
    lattice: LatticeConfig = LatticeConfig(), theta_global: float | None = None,
) -> Comparison:
    """Lap time with the spatial map vs. the worst-case uniform factor."""
    if theta_global is None:
        theta_global = reachable_min_theta(track, grid)
    uniform = build_gripmap(track.s_max, grid.s_dim, grid.n_dim, grid.w_max, theta_global,
                            closed=grid.closed, theta_cap=grid.theta_cap)
    with_map = optimize_raceline(track, model, grid, lattice)
    with_global = optimize_raceline(track, model, uniform, lattice)
    t_map, t_glob = with_map.lap_time, with_global.lap_time
    return Comparison(t_map, t_glob, 1.0 - t_map / t_glob, theta_global, with_map, with_global)


# -- CSV ---------------------------------------------------------------------------

RACELINE_COLUMNS = ("s", "n", "x", "y", "kappa", "v", "ax", "ay", "t", "theta")


def raceline_csv(path: RacelinePath, profile: SpeedProfile) -> str:
    return csv_text({
        "s": path.s, "n": path.n, "x": path.x, "y": path.y, "kappa": path.kappa,
        "v": profile.v, "ax": profile.ax, "ay": profile.ay, "t": profile.t, "theta": profile.theta,
    })


def read_raceline_csv(path) -> dict:
    cols = read_csv(path)
    missing = set(RACELINE_COLUMNS) - set(cols)
    if missing:
        raise ValidationError(f"{path}: raceline CSV missing columns {sorted(missing)}")
    return cols


def raceline_from_csv(track: TrackGeometry, path, tol: float = 1e-3) -> RacelinePath:
    """Load a raceline CSV and check it was produced on ``track``."""
    cols = read_raceline_csv(path)
    if cols["s"].size == 0 or cols["s"][-1] > track.s_max + 1e-6:
        raise ValidationError(f"{path}: raceline s range does not fit the track")
    pose = frenet_to_cartesian(track, cols["s"], cols["n"])
    err = np.hypot(np.asarray(pose.x) - cols["x"], np.asarray(pose.y) - cols["y"])
    if np.max(err) > tol:
        raise ValidationError(
            f"{path}: raceline was built on a different track (position mismatch {np.max(err):.3g} m)"
        )
    return path_from_offsets(track, cols["s"], cols["n"], bound_tol=1e-6)
