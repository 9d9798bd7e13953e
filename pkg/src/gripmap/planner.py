"""Sampling-based Frenet planner with a soft grip-exceedance penalty.

Every cycle samples end states (end speed, end offset, horizon), connects
them to the current state with a quintic in n(t) and a quartic in s(t),
discards candidates that leave the track, turn tighter than ``kappa_max``
or exceed ``v_max``, and ranks the rest by a weighted cost.  Acceleration
limits are *not* a hard filter: points above the local (theta-scaled)
envelope are charged a squared hinge instead.

All candidates are handled as one batch of shape (M, P).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .errors import ConfigError, ValidationError
from .gggv import GggvModel
from .grid import GripMapGrid, _cells_into, _geometry, lookup_theta
from .track import TrackGeometry

COST_TERMS = ("raceline_tracking", "jerk", "opponent_proximity", "grip_excess", "progress")


class PlannerState(NamedTuple):
    s: float
    s_dot: float
    s_ddot: float = 0.0
    n: float = 0.0
    n_dot: float = 0.0
    n_ddot: float = 0.0


class OpponentState(NamedTuple):
    s: float
    n: float
    s_dot: float
    n_dot: float = 0.0


@dataclass(frozen=True)
class Weights:
    track: float = 1.0
    jerk: float = 0.5
    opponent: float = 5.0
    grip: float = 10.0
    progress: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.track, self.jerk, self.opponent, self.grip, self.progress])

    def scaled(self, c: float) -> "Weights":
        return Weights(*(c * w for w in self.as_array()))


@dataclass(frozen=True)
class PlannerConfig:
    # end speeds are offsets from the current speed unless speeds_absolute
    end_speeds: tuple = (-12.0, -9.0, -6.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0)
    speeds_absolute: bool = False
    # None: n_offsets evenly spread across the drivable width at s0
    end_offsets: tuple | None = None
    n_offsets: int = 20
    offset_margin: float = 0.5
    horizons: tuple = (1.0, 1.5, 2.0, 2.5, 3.0)
    n_points: int = 40
    min_end_speed: float = 1.0
    kappa_max: float | None = None
    weights: Weights = field(default_factory=Weights)
    # opponent barrier: zero beyond the ellipse with these semi-axes
    opp_long_radius: float = 10.0
    opp_lat_radius: float = 3.0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", Weights(**self.weights))
        for name in ("end_speeds", "horizons", "end_offsets"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, tuple(float(v) for v in np.atleast_1d(value)))
        if not self.end_speeds or not self.horizons:
            raise ConfigError("sampling sets must be non-empty")
        if self.end_offsets is not None and not self.end_offsets:
            raise ConfigError("sampling sets must be non-empty")
        if self.end_offsets is None and self.n_offsets < 1:
            raise ConfigError("n_offsets must be >= 1")
        if min(self.horizons) <= 0:
            raise ConfigError("horizons must be positive")
        if self.n_points < 4:
            raise ConfigError("n_points must be >= 4")
        if np.any(self.weights.as_array() < 0) or not np.any(self.weights.as_array() > 0):
            raise ConfigError("weights must be non-negative and not all zero")

    @property
    def n_candidates(self) -> int:
        n_off = self.n_offsets if self.end_offsets is None else len(self.end_offsets)
        return len(self.end_speeds) * n_off * len(self.horizons)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["end_speeds"] = list(self.end_speeds)
        doc["horizons"] = list(self.horizons)
        doc["end_offsets"] = None if self.end_offsets is None else list(self.end_offsets)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PlannerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown planner config keys {sorted(unknown)}")
        doc = dict(doc)
        if "weights" in doc:
            w = doc["weights"]
            bad = set(w) - {f.name for f in fields(Weights)}
            if bad:
                raise ConfigError(f"unknown weight keys {sorted(bad)}")
            doc["weights"] = Weights(**w)
        return cls(**doc)


def load_planner_config(path) -> PlannerConfig:
    try:
        return PlannerConfig.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


# -- candidate generation ----------------------------------------------------------


def quintic_coefficients(n0, n0_dot, n0_ddot, n_end, T):
    """Coefficients (ascending) of n(t) from (n0, n0', n0'') to (n_end, 0, 0) at T."""
    n_end = np.asarray(n_end, dtype=float)
    T = np.asarray(T, dtype=float)
    a0, a1, a2 = n0, n0_dot, 0.5 * n0_ddot
    h = n_end - (a0 + a1 * T + a2 * T**2)
    dv = -(a1 + 2 * a2 * T)
    da = -2 * a2
    a3 = (10 * h - 4 * dv * T + 0.5 * da * T**2) / T**3
    a4 = (-15 * h + 7 * dv * T - da * T**2) / T**4
    a5 = (6 * h - 3 * dv * T + 0.5 * da * T**2) / T**5
    shape = np.broadcast(n_end, T).shape
    return np.stack([np.broadcast_to(c, shape) for c in (a0, a1, a2, a3, a4, a5)], axis=-1)


def quartic_coefficients(s0, s0_dot, s0_ddot, v_end, T):
    """Coefficients (ascending) of s(t) reaching speed ``v_end`` with zero acceleration at T."""
    v_end = np.asarray(v_end, dtype=float)
    T = np.asarray(T, dtype=float)
    b0, b1, b2 = s0, s0_dot, 0.5 * s0_ddot
    dv = v_end - b1 - 2 * b2 * T
    da = -2 * b2
    b4 = (0.5 * T * da - dv) / (2 * T**3)
    b3 = (da - 12 * b4 * T**2) / (6 * T)
    shape = np.broadcast(v_end, T).shape
    return np.stack([np.broadcast_to(c, shape) for c in (b0, b1, b2, b3, b4)], axis=-1)


def _poly_derivs(coef, t, order):
    """Value and first ``order`` time derivatives of ascending polynomials, row-wise."""
    out = []
    c = coef
    for _ in range(order + 1):
        val = np.zeros(t.shape)
        for k in range(c.shape[-1] - 1, -1, -1):
            val = val * t + c[:, k : k + 1]
        out.append(val)
        c = c[:, 1:] * np.arange(1, c.shape[-1])
        if c.shape[-1] == 0:
            c = np.zeros((coef.shape[0], 1))
    return out


@dataclass(eq=False)
class CandidateBatch:
    """M candidates with P points each; per-point arrays have shape (M, P)."""

    horizon: np.ndarray
    end_speed: np.ndarray
    end_offset: np.ndarray
    lat_coef: np.ndarray  # (M, 6)
    lon_coef: np.ndarray  # (M, 5)
    t: np.ndarray
    s: np.ndarray
    s_dot: np.ndarray
    n: np.ndarray
    v: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    kappa: np.ndarray
    a_z: np.ndarray
    n_min: np.ndarray
    n_max: np.ndarray
    theta: np.ndarray | None = None
    utilization: np.ndarray | None = None

    def __len__(self):
        return len(self.horizon)

    @property
    def n_points(self) -> int:
        return self.t.shape[1]

    def candidate(self, i: int) -> "CandidateTrajectory":
        util = None if self.utilization is None else self.utilization[i].copy()
        theta = None if self.theta is None else self.theta[i].copy()
        return CandidateTrajectory(
            index=int(i), horizon=float(self.horizon[i]), end_speed=float(self.end_speed[i]),
            end_offset=float(self.end_offset[i]), lat_coef=self.lat_coef[i].copy(),
            lon_coef=self.lon_coef[i].copy(), t=self.t[i].copy(), s=self.s[i].copy(),
            n=self.n[i].copy(), v=self.v[i].copy(), ax=self.ax[i].copy(), ay=self.ay[i].copy(),
            kappa=self.kappa[i].copy(), theta=theta, utilization=util,
        )


@dataclass(eq=False)
class CandidateTrajectory:
    index: int
    horizon: float
    end_speed: float
    end_offset: float
    lat_coef: np.ndarray
    lon_coef: np.ndarray
    t: np.ndarray
    s: np.ndarray
    n: np.ndarray
    v: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray | None = None
    utilization: np.ndarray | None = None

    def state_at(self, t: float) -> PlannerState:
        """Frenet state on the polynomials at time ``t`` (clamped to the horizon)."""
        t = min(max(float(t), 0.0), self.horizon)
        tt = np.array([[t]])
        s, sd, sdd = (float(x[0, 0]) for x in _poly_derivs(self.lon_coef[None], tt, 2))
        n, nd, ndd = (float(x[0, 0]) for x in _poly_derivs(self.lat_coef[None], tt, 2))
        return PlannerState(s, sd, sdd, n, nd, ndd)

    def sample(self, track: TrackGeometry, t: float) -> dict:
        """Kinematic point (floats) at time ``t`` (clamped to the horizon)."""
        t = min(max(float(t), 0.0), self.horizon)
        k = frenet_kinematics(track, self.lat_coef[None], self.lon_coef[None], np.array([[t]]))
        return {key: float(val[0, 0]) for key, val in k.items()}

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("index", "horizon", "end_speed", "end_offset")}
        for k in ("lat_coef", "lon_coef", "t", "s", "n", "v", "ax", "ay", "kappa", "theta", "utilization"):
            val = getattr(self, k)
            out[k] = None if val is None else val.tolist()
        return out


def sampling_sets(state: PlannerState, track: TrackGeometry, cfg: PlannerConfig):
    """(end speeds, end offsets, horizons) for this cycle."""
    speeds = np.asarray(cfg.end_speeds, dtype=float)
    if not cfg.speeds_absolute:
        speeds = state.s_dot + speeds
    speeds = np.maximum(speeds, cfg.min_end_speed)
    if cfg.end_offsets is None:
        lo, hi = track.bounds_at(state.s)
        lo, hi = float(lo) + cfg.offset_margin, float(hi) - cfg.offset_margin
        if hi < lo:
            lo = hi = 0.5 * (lo + hi)
        offsets = np.linspace(lo, hi, cfg.n_offsets)
    else:
        offsets = np.asarray(cfg.end_offsets, dtype=float)
    return speeds, offsets, np.asarray(cfg.horizons, dtype=float)


def sample_candidates(state: PlannerState, track: TrackGeometry, cfg: PlannerConfig) -> CandidateBatch:
    """Connect ``state`` to every sampled end state and discretise in time."""
    if not state.s_dot > 0:
        raise ValidationError(f"planner state needs forward speed, got s_dot={state.s_dot}")
    speeds, offsets, horizons = sampling_sets(state, track, cfg)
    if speeds.size == 0 or offsets.size == 0 or horizons.size == 0:
        raise ConfigError("sampling sets must be non-empty")
    V, N, T = np.meshgrid(speeds, offsets, horizons, indexing="ij")
    V, N, T = V.ravel(), N.ravel(), T.ravel()
    lat = quintic_coefficients(state.n, state.n_dot, state.n_ddot, N, T)
    lon = quartic_coefficients(state.s, state.s_dot, state.s_ddot, V, T)
    return discretize(track, lat, lon, T, V, N, cfg.n_points)


def frenet_kinematics(track: TrackGeometry, lat, lon, t):
    """Point-mass motion of (s(t), n(t)) polynomials about the reference line.

    Returns a dict of arrays shaped like ``t``: s, s_dot, s_ddot, n, n_dot,
    n_ddot, v, ax (along the velocity), ay (left of it), kappa (driven path
    curvature, signed), plus the track channels at s.
    """
    s, sd, sdd = _poly_derivs(lon, t, 2)
    n, nd, ndd = _poly_derivs(lat, t, 2)
    kap, dkap, n_min, n_max, a_z = track.channels_at(s)
    alpha = 1.0 - kap * n
    vt = sd * alpha
    vn = nd
    at = sdd * alpha - sd * (dkap * sd * n + 2.0 * kap * nd)
    an = kap * sd * vt + ndd
    v = np.hypot(vt, vn)
    with np.errstate(invalid="ignore", divide="ignore"):
        ax = (at * vt + an * vn) / v
        ay = (an * vt - at * vn) / v
        kappa = ay / (v * v)
    return dict(s=s, s_dot=sd, s_ddot=sdd, n=n, n_dot=nd, n_ddot=ndd, v=v, ax=ax, ay=ay,
                kappa=kappa, a_z=a_z, n_min=n_min, n_max=n_max)


def discretize(track: TrackGeometry, lat, lon, T, end_speed, end_offset, n_points: int) -> CandidateBatch:
    t = T[:, None] * np.linspace(0.0, 1.0, n_points)[None, :]
    k = frenet_kinematics(track, lat, lon, t)
    return CandidateBatch(T, end_speed, end_offset, lat, lon, t, k["s"], k["s_dot"], k["n"], k["v"],
                          k["ax"], k["ay"], k["kappa"], k["a_z"], k["n_min"], k["n_max"])


# -- feasibility and cost ------------------------------------------------------------

REASONS = ("ok", "reverse", "bounds", "curvature", "speed")


def hard_feasibility(batch: CandidateBatch, track: TrackGeometry, model: GggvModel,
                     kappa_max: float | None = None):
    """Per-candidate (feasible, reason code); see ``REASONS``.

    Acceleration limits are deliberately absent: they are priced in the cost.
    """
    kmax = model.kappa_max if kappa_max is None else kappa_max
    reverse = ~np.all(batch.s_dot > 0, axis=1)
    if track.closed:
        outside = (batch.n < batch.n_min) | (batch.n > batch.n_max)
    else:
        outside = (batch.n < batch.n_min) | (batch.n > batch.n_max) | (batch.s > track.s_max) | (batch.s < 0)
    bounds = np.any(outside, axis=1)
    with np.errstate(invalid="ignore"):
        curvature = ~np.all(np.abs(batch.kappa) <= kmax, axis=1)
        speed = ~np.all(batch.v <= model.v_max, axis=1)
    reason = np.zeros(len(batch), dtype=np.int8)
    # report the first failing check in REASONS order
    for code, bad in ((4, speed), (3, curvature), (2, bounds), (1, reverse)):
        reason[bad] = code
    return reason == 0, reason


def candidate_feasibility(candidate: CandidateTrajectory, track: TrackGeometry, model: GggvModel,
                          kappa_max: float | None = None) -> tuple[bool, str]:
    """Single-candidate form of :func:`hard_feasibility`."""
    s = candidate.s[None]
    kap, dkap, n_min, n_max, a_z = track.channels_at(s)
    batch = CandidateBatch(
        np.array([candidate.horizon]), np.array([candidate.end_speed]), np.array([candidate.end_offset]),
        candidate.lat_coef[None], candidate.lon_coef[None], candidate.t[None], s,
        np.gradient(candidate.s, candidate.t)[None] if len(candidate.t) > 1 else np.ones((1, 1)),
        candidate.n[None], candidate.v[None], candidate.ax[None], candidate.ay[None],
        candidate.kappa[None], a_z, n_min, n_max,
    )
    ok, code = hard_feasibility(batch, track, model, kappa_max)
    return bool(ok[0]), REASONS[int(code[0])]


@numba.njit(cache=True, nogil=True)
def _utilization_kernel(rows, s, n, ax, ay, ax_max, ax_min, ay_max, p, theta_grid, inv_grid, geom,
                        use_grid, want_excess, theta_out, util_out, excess_out):
    """Theta lookup (optional), p-norm utilization and per-row squared hinge.

    Point arrays have shape (M, P) and only ``rows`` are visited; limit
    arrays are either the same shape or (1, 1) for a constant envelope.
    Returns False if a looked-up coordinate is not finite.
    """
    s_max, ds, dn, M, N, nd, n_offset, closed = geom
    Mi, Ni, ndi, is_closed = int(M), int(N), int(nd), closed > 0.5
    per_point = ax_max.size > 1
    inv_p = 1.0 / p
    mode = 2 if p == 2.0 else (0 if math.isinf(p) else 1)
    gx_p, gx_n, gy = 1.0 / ax_max[0, 0], 1.0 / ax_min[0, 0], 1.0 / ay_max[0, 0]
    P = s.shape[1]
    ss, nn = np.empty(P), np.empty(P)
    ii = np.zeros(P, dtype=np.intp)
    jj = np.zeros(P, dtype=np.intp)
    finite = True
    for q in range(rows.size):
        r = rows[q]
        if use_grid:
            finite &= _cells_into(s[r], n[r], ss, nn, ii, jj, s_max, ds, dn, Mi, Ni, ndi, n_offset,
                                  is_closed)
        acc = 0.0
        for k in range(P):
            th = 1.0
            inv_th = 1.0
            if use_grid:
                th = theta_grid[ii[k], jj[k]]
                inv_th = inv_grid[ii[k], jj[k]]
            if per_point:
                gx_p, gx_n, gy = 1.0 / ax_max[r, k], 1.0 / ax_min[r, k], 1.0 / ay_max[r, k]
            a = ax[r, k]
            rx = abs(a) * (gx_p if a >= 0.0 else gx_n) * inv_th
            ry = abs(ay[r, k]) * gy * inv_th
            if mode == 2:
                u = math.sqrt(rx * rx + ry * ry)
            elif mode == 0:
                u = max(rx, ry)
            else:
                u = (rx**p + ry**p) ** inv_p
            theta_out[r, k] = th
            util_out[r, k] = u
            if want_excess and u > 1.0:
                acc += (u - 1.0) * (u - 1.0)
        excess_out[q] = acc
    return finite


_NO_GRID = np.ones((1, 1))
_NO_GEOM = (1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0)


def attach_utilization(batch: CandidateBatch, rows: np.ndarray, model: GggvModel,
                       grid: GripMapGrid | None, want_excess: bool = True):
    """Fill theta and utilization for candidates ``rows``.

    Returns ``(lookups, excess)`` where ``excess`` is the per-row sum of
    squared utilization overshoot.  Without a grid every point uses theta = 1
    and nothing is looked up.  Rows outside ``rows`` are left as NaN.
    """
    M, P = batch.t.shape
    rows = np.ascontiguousarray(rows, dtype=np.intp)
    if model.is_constant:
        lim = [np.full((1, 1), x) for x in model._const]
    else:
        lim = [np.ascontiguousarray(np.broadcast_to(x, (M, P)), dtype=float)
               for x in model.base_limits(batch.v, batch.a_z)]
    full = rows.size == M
    th = np.empty((M, P)) if full else np.full((M, P), np.nan)
    util = np.empty((M, P)) if full else np.full((M, P), np.nan)
    excess = np.zeros(rows.size)
    if grid is None:
        theta_grid, inv_grid, geom, lookups = _NO_GRID, _NO_GRID, _NO_GEOM, 0
    else:
        g = _geometry(grid)
        theta_grid, inv_grid, lookups = grid.theta, grid.inv_theta, rows.size * P
        geom = (g[0], g[1], g[2], float(g[3]), float(g[4]), float(g[5]), g[6], float(g[7]))
    if rows.size and not _utilization_kernel(
        rows, batch.s, batch.n, batch.ax, batch.ay, lim[0], lim[1], lim[2], float(model.shape_exponent),
        theta_grid, inv_grid, geom, grid is not None, want_excess, th, util, excess,
    ):
        raise ValidationError("non-finite candidate coordinates")
    batch.theta, batch.utilization = th, util
    return lookups, excess


@dataclass(frozen=True)
class CostBreakdown:
    raceline_tracking: float
    jerk: float
    opponent_proximity: float
    grip_excess: float
    progress: float
    total: float

    def to_dict(self) -> dict:
        return asdict(self)


def _s_gap(a, b, track: TrackGeometry):
    d = a - b
    if track.closed:
        d = (d + 0.5 * track.s_max) % track.s_max - 0.5 * track.s_max
    return d


def cost_terms(batch: CandidateBatch, rows: np.ndarray, raceline, opponents: Sequence[OpponentState],
               track: TrackGeometry, model: GggvModel, cfg: PlannerConfig,
               excess: np.ndarray | None = None) -> np.ndarray:
    """Unweighted terms, shape (len(rows), 5), in ``COST_TERMS`` order.

    ``excess`` is the per-row grip overshoot from :func:`attach_utilization`;
    None leaves the grip term at zero.
    """
    if raceline is None:
        raise ConfigError("planner needs a raceline")
    terms = np.zeros((rows.size, len(COST_TERMS)))
    if rows.size == 0:
        return terms
    s, n, t = batch.s[rows], batch.n[rows], batch.t[rows]
    n_ref = raceline.offset_at(track.wrap_s(s) if track.closed else np.clip(s, 0, track.s_max))
    terms[:, 0] = np.mean((n - n_ref) ** 2, axis=1)
    dt = t[:, 1:2]
    jx = np.diff(batch.ax[rows], axis=1) / dt
    jy = np.diff(batch.ay[rows], axis=1) / dt
    terms[:, 1] = np.mean(jx * jx + jy * jy, axis=1)
    for opp in opponents:
        so = opp.s + opp.s_dot * t
        no = opp.n + opp.n_dot * t
        d = np.hypot(_s_gap(s, so, track) / cfg.opp_long_radius, (n - no) / cfg.opp_lat_radius)
        terms[:, 2] += np.mean(np.maximum(0.0, 1.0 - d) ** 2, axis=1)
    if excess is not None:
        terms[:, 3] = excess
    horizon = batch.horizon[rows]
    terms[:, 4] = (s[:, -1] - s[:, 0]) / (horizon * model.v_max)
    return terms


def weighted_total(terms: np.ndarray, weights: Weights) -> np.ndarray:
    w = weights.as_array()
    return terms[:, :4] @ w[:4] - w[4] * terms[:, 4]


def evaluate_cost(candidate: CandidateTrajectory, raceline, grid: GripMapGrid | None, model: GggvModel,
                  opponents: Sequence[OpponentState], weights: Weights, track: TrackGeometry,
                  cfg: PlannerConfig | None = None) -> CostBreakdown:
    """Cost of one candidate; utilization is recomputed from ``grid``."""
    cfg = cfg or PlannerConfig(weights=weights)
    kap, dkap, n_min, n_max, a_z = track.channels_at(candidate.s[None])
    batch = CandidateBatch(
        np.array([candidate.horizon]), np.array([candidate.end_speed]), np.array([candidate.end_offset]),
        candidate.lat_coef[None], candidate.lon_coef[None], candidate.t[None], candidate.s[None],
        np.ones((1, len(candidate.t))), candidate.n[None], candidate.v[None], candidate.ax[None],
        candidate.ay[None], candidate.kappa[None], a_z, n_min, n_max,
    )
    rows = np.array([0])
    _, excess = attach_utilization(batch, rows, model, grid)
    terms = cost_terms(batch, rows, raceline, opponents, track, model, cfg, excess)
    return _breakdown(terms[0], weights)


def _breakdown(terms, weights: Weights) -> CostBreakdown:
    total = float(weighted_total(terms[None], weights)[0])
    return CostBreakdown(*(float(x) for x in terms), total=total)


def select(terms: np.ndarray, weights: Weights, index: np.ndarray | None = None) -> int:
    """Row of the minimum-cost candidate.

    Weights are normalised by their largest entry first, so any positive
    rescaling of the weight vector selects the same row; ties go to the lower
    grip excess, then the lower candidate index.
    """
    if terms.shape[0] == 0:
        raise ValueError("no candidates to select from")
    w = weights.as_array()
    norm = Weights(*(w / w.max()))
    total = weighted_total(terms, norm)
    index = np.arange(terms.shape[0]) if index is None else index
    return int(np.lexsort((index, terms[:, 3], total))[0])


@dataclass(eq=False)
class PlanResult:
    best: CandidateTrajectory
    cost: CostBreakdown | None
    n_feasible: int
    n_candidates: int
    n_lookups: int
    cycle_time: float
    emergency: bool = False
    reasons: dict = field(default_factory=dict)

    def diagnostics(self) -> dict:
        return {
            "cycle_time_s": self.cycle_time,
            "n_candidates": self.n_candidates,
            "n_feasible": self.n_feasible,
            "n_lookups": self.n_lookups,
            "emergency": self.emergency,
            "best_index": self.best.index,
            "best_cost_breakdown": None if self.cost is None else self.cost.to_dict(),
        }


@dataclass(eq=False)
class CycleEvaluation:
    """Everything computed in one cycle, kept for tests and diagnostics."""

    batch: CandidateBatch
    feasible: np.ndarray
    reason: np.ndarray
    rows: np.ndarray
    terms: np.ndarray
    n_lookups: int


def evaluate_cycle(state: PlannerState, raceline, grid: GripMapGrid | None, model: GggvModel,
                   track: TrackGeometry, opponents: Sequence[OpponentState],
                   cfg: PlannerConfig, grip_cost: bool = True) -> CycleEvaluation:
    batch = sample_candidates(state, track, cfg)
    feasible, reason = hard_feasibility(batch, track, model, cfg.kappa_max)
    rows = np.flatnonzero(feasible)
    lookups, excess = attach_utilization(batch, rows, model, grid if grip_cost else None, grip_cost)
    terms = cost_terms(batch, rows, raceline, opponents, track, model, cfg, excess if grip_cost else None)
    return CycleEvaluation(batch, feasible, reason, rows, terms, lookups)


def plan_cycle(state: PlannerState, raceline, grid: GripMapGrid | None, model: GggvModel,
               track: TrackGeometry, opponents: Sequence[OpponentState] = (),
               cfg: PlannerConfig = PlannerConfig(), grip_cost: bool = True) -> PlanResult:
    """Sample, filter, score and select.

    ``grid=None`` plans with theta = 1 everywhere.  ``grip_cost=False`` skips
    the lookups and the excess penalty (the benchmark's baseline
    configuration); utilization is still reported at theta = 1.
    """
    if raceline is None:
        raise ConfigError("planner needs a raceline")
    start = time.perf_counter()
    ev = evaluate_cycle(state, raceline, grid, model, track, opponents, cfg, grip_cost)
    reasons = {REASONS[c]: int(np.count_nonzero(ev.reason == c)) for c in range(len(REASONS))}
    if ev.rows.size == 0:
        fallback = braking_fallback(state, track, model, grid if grip_cost else None, cfg)
        elapsed = time.perf_counter() - start
        return PlanResult(fallback, None, 0, len(ev.batch), ev.n_lookups, elapsed, True, reasons)
    k = select(ev.terms, cfg.weights, ev.rows)
    best = ev.batch.candidate(int(ev.rows[k]))
    cost = _breakdown(ev.terms[k], cfg.weights)
    elapsed = time.perf_counter() - start
    return PlanResult(best, cost, int(ev.rows.size), len(ev.batch), ev.n_lookups, elapsed, False, reasons)


def braking_fallback(state: PlannerState, track: TrackGeometry, model: GggvModel,
                     grid: GripMapGrid | None, cfg: PlannerConfig) -> CandidateTrajectory:
    """Full braking at the local limit while easing the lateral rate to zero."""
    theta = 1.0 if grid is None else lookup_theta(grid, state.s, state.n)
    a_z = float(track.a_z_at(state.s)) if track.closed or 0 <= state.s <= track.s_max else 9.81
    decel = float(model.base_limits(state.s_dot, a_z).ax_min) * theta
    T = max(min(max(cfg.horizons), state.s_dot / decel), 1e-3)
    lon = np.array([[state.s, state.s_dot, -0.5 * decel, 0.0, 0.0]])
    lat = quintic_coefficients(state.n, state.n_dot, state.n_ddot,
                               np.array([state.n + 0.5 * state.n_dot * T]), np.array([T]))
    speed_end = np.array([max(state.s_dot - decel * T, 0.0)])
    # keep the last sample strictly moving so curvature stays defined
    Tq = np.array([T * (1.0 - 1e-6)])
    batch = discretize(track, lat, lon, Tq, speed_end, np.array([state.n]), cfg.n_points)
    return batch.candidate(0)
