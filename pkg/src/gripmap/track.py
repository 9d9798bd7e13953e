"""Track centerline in the Frenet frame.

The centerline is re-sampled uniformly in arc length and represented by a
cubic spline through the re-sampled points, so ``frenet_to_cartesian`` and
``cartesian_to_frenet`` are exact inverses of each other (up to the Newton
tolerance).  ``n`` is positive to the left of the direction of travel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import (
    DegenerateFrameError,
    InvalidCoordinateError,
    OutOfCorridorError,
    TrackParseError,
)

DEFAULT_AZ = 9.81


class FrenetPoint(NamedTuple):
    s: float | np.ndarray
    n: float | np.ndarray


class CartesianPose(NamedTuple):
    x: float | np.ndarray
    y: float | np.ndarray
    heading: float | np.ndarray


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _moving_average(a, window, closed):
    if window <= 1:
        return a.copy()
    half = window // 2
    if closed:
        padded = np.concatenate([a[-half:], a, a[:half]])
    else:
        padded = np.concatenate([np.full(half, a[0]), a, np.full(half, a[-1])])
    kernel = np.ones(2 * half + 1) / (2 * half + 1)
    return np.convolve(padded, kernel, mode="valid")


def _central_curvature(x, y, h, closed):
    """Signed curvature from central differences on uniformly spaced samples."""
    if closed:
        xp, xm = np.roll(x, -1), np.roll(x, 1)
        yp, ym = np.roll(y, -1), np.roll(y, 1)
    else:
        xp = np.concatenate([x[1:], [2 * x[-1] - x[-2]]])
        xm = np.concatenate([[2 * x[0] - x[1]], x[:-1]])
        yp = np.concatenate([y[1:], [2 * y[-1] - y[-2]]])
        ym = np.concatenate([[2 * y[0] - y[1]], y[:-1]])
    dx = (xp - xm) / (2 * h)
    dy = (yp - ym) / (2 * h)
    ddx = (xp - 2 * x + xm) / h**2
    ddy = (yp - 2 * y + ym) / h**2
    kappa = (dx * ddy - dy * ddx) / np.power(dx * dx + dy * dy, 1.5)
    if not closed:
        # linear extrapolation above makes the end second differences zero
        kappa[0], kappa[-1] = kappa[1], kappa[-2]
    return kappa


@dataclass(frozen=True, eq=False)
class TrackGeometry:
    """Uniformly re-sampled reference line with lateral bounds.

    Per-sample arrays all have the same length.  For closed tracks the last
    sample sits one spacing before ``s_max`` and the loop closes back to
    ``s[0] = 0``; open tracks include the end point ``s[-1] = s_max``.
    """

    x: np.ndarray
    y: np.ndarray
    s: np.ndarray
    kappa: np.ndarray
    n_min: np.ndarray
    n_max: np.ndarray
    a_z: np.ndarray
    s_max: float
    closed: bool
    corridor_max: float | None = None
    _spline: CubicSpline = field(repr=False, default=None)
    _dkappa: np.ndarray = field(repr=False, default=None)
    _tree: cKDTree = field(repr=False, default=None)

    @classmethod
    def from_centerline(
        cls,
        x,
        y,
        n_min,
        n_max,
        a_z=None,
        closed: bool | None = None,
        step: float = 1.0,
        smooth_window: int = 3,
        corridor_max: float | None = None,
    ) -> "TrackGeometry":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n_min = np.broadcast_to(np.asarray(n_min, dtype=float), x.shape).copy()
        n_max = np.broadcast_to(np.asarray(n_max, dtype=float), x.shape).copy()
        a_z = np.full(x.shape, DEFAULT_AZ) if a_z is None else np.broadcast_to(
            np.asarray(a_z, dtype=float), x.shape
        ).copy()
        if x.ndim != 1 or x.shape != y.shape:
            raise TrackParseError("x and y must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise TrackParseError("non-finite centerline coordinate")
        if np.any(n_min >= 0) or np.any(n_max <= 0):
            k = int(np.argmax((n_min >= 0) | (n_max <= 0)))
            raise TrackParseError(
                f"bound violation at sample {k}: need n_min < 0 < n_max, "
                f"got n_min={n_min[k]}, n_max={n_max[k]}"
            )

        if len(x) >= 2 and math.hypot(x[-1] - x[0], y[-1] - y[0]) < 1e-9:
            # explicitly repeated first point marks a loop
            x, y, n_min, n_max, a_z = x[:-1], y[:-1], n_min[:-1], n_max[:-1], a_z[:-1]
            closed = True if closed is None else closed
        if len(x) < 4:
            raise TrackParseError(f"need at least 4 centerline points, got {len(x)}")

        seg = np.hypot(np.diff(x), np.diff(y))
        if np.any(seg <= 0):
            raise TrackParseError(f"duplicate consecutive point at sample {int(np.argmin(seg)) + 1}")
        gap = math.hypot(x[0] - x[-1], y[0] - y[-1])
        if closed is None:
            closed = gap <= 2.0 * float(np.median(seg))

        if closed:
            u = np.concatenate([[0.0], np.cumsum(seg), [np.sum(seg) + gap]])
            pts = np.column_stack([np.append(x, x[0]), np.append(y, y[0])])
            raw = CubicSpline(u, pts, bc_type="periodic")
        else:
            u = np.concatenate([[0.0], np.cumsum(seg)])
            raw = CubicSpline(u, np.column_stack([x, y]))
        s_max = float(u[-1])

        count = max(4, int(round(s_max / step)))
        h = s_max / count
        if closed:
            s = np.arange(count) * h
            period = dict(period=s_max)
            chan_u = u[:-1]
        else:
            s = np.arange(count + 1) * h
            s[-1] = s_max
            period = {}
            chan_u = u
        xy = raw(s)
        nmn = np.interp(s, chan_u, n_min, **period)
        nmx = np.interp(s, chan_u, n_max, **period)
        az = np.interp(s, chan_u, a_z, **period)

        if closed:
            spline = CubicSpline(
                np.append(s, s_max), np.vstack([xy, xy[:1]]), bc_type="periodic"
            )
        else:
            spline = CubicSpline(s, xy)

        sx = _moving_average(xy[:, 0], smooth_window, closed)
        sy = _moving_average(xy[:, 1], smooth_window, closed)
        kappa = _central_curvature(sx, sy, h, closed)
        if not np.all(np.isfinite(kappa)):
            raise TrackParseError("curvature is not finite; centerline folds back on itself")
        worst = np.maximum(kappa * nmx, kappa * nmn)
        if np.any(worst >= 1.0):
            k = int(np.argmax(worst))
            raise DegenerateFrameError(
                f"|kappa*n| >= 1 inside the corridor at s={s[k]:.3f} "
                f"(kappa={kappa[k]:.4g}, bounds [{nmn[k]:.3f}, {nmx[k]:.3f}])"
            )
        if closed:
            dkappa = (np.roll(kappa, -1) - np.roll(kappa, 1)) / (2 * h)
        else:
            dkappa = np.gradient(kappa, h)

        return cls(
            x=_readonly(xy[:, 0]),
            y=_readonly(xy[:, 1]),
            s=_readonly(s),
            kappa=_readonly(kappa),
            n_min=_readonly(nmn),
            n_max=_readonly(nmx),
            a_z=_readonly(az),
            s_max=s_max,
            closed=bool(closed),
            corridor_max=corridor_max,
            _spline=spline,
            _dkappa=_readonly(dkappa),
            _tree=cKDTree(xy),
        )

    # -- per-s channels -------------------------------------------------

    @property
    def spacing(self) -> float:
        return self.s_max / (len(self.s) if self.closed else len(self.s) - 1)

    @property
    def half_width(self) -> float:
        return float(max(np.max(self.n_max), np.max(-self.n_min)))

    def wrap_s(self, s):
        if self.closed:
            return np.mod(s, self.s_max)
        return s

    def _channel(self, values, s):
        s = np.asarray(s, dtype=float)
        if self.closed:
            out = np.interp(s, self.s, values, period=self.s_max)
        else:
            out = np.interp(s, self.s, values)
        return out if out.ndim else float(out)

    def kappa_at(self, s):
        return self._channel(self.kappa, s)

    def dkappa_at(self, s):
        return self._channel(self._dkappa, s)

    def bounds_at(self, s):
        return self._channel(self.n_min, s), self._channel(self.n_max, s)

    def a_z_at(self, s):
        return self._channel(self.a_z, s)

    def channels_at(self, s):
        """(kappa, dkappa, n_min, n_max, a_z) at ``s`` with one index computation.

        Uniform sample spacing lets the bracket index be computed directly;
        this is the hot path of the online planner.
        """
        s = np.asarray(s, dtype=float)
        h = self.spacing
        count = len(self.s)
        if self.closed:
            pos = np.mod(s, self.s_max) / h
            i0 = np.minimum(pos.astype(np.intp), count - 1)
            i1 = i0 + 1
            i1[i1 == count] = 0
        else:
            pos = np.clip(s, 0.0, self.s_max) / h
            i0 = np.minimum(pos.astype(np.intp), count - 2)
            i1 = i0 + 1
        w = pos - i0
        table = self._table
        lo, hi = table[i0], table[i1]
        vals = lo + (hi - lo) * w[..., None]
        return tuple(vals[..., c] for c in range(5))

    @property
    def _table(self):
        t = self.__dict__.get("_table_cache")
        if t is None:
            t = np.column_stack([self.kappa, self._dkappa, self.n_min, self.n_max, self.a_z])
            object.__setattr__(self, "_table_cache", t)
        return t

    def heading_at(self, s):
        d = self._spline(self._param(s), 1)
        out = np.arctan2(d[..., 1], d[..., 0])
        return out if out.ndim else float(out)

    def _param(self, s):
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)):
            raise InvalidCoordinateError("non-finite arc length")
        if self.closed:
            return np.mod(s, self.s_max)
        tol = 1e-9 * max(1.0, self.s_max)
        if np.any(s < -tol) or np.any(s > self.s_max + tol):
            raise InvalidCoordinateError(f"s outside [0, {self.s_max}] on an open track")
        return np.clip(s, 0.0, self.s_max)


# -- conversions ---------------------------------------------------------


def frenet_to_cartesian(track: TrackGeometry, s, n) -> CartesianPose:
    """Point offset ``n`` along the left normal of the reference at ``s``."""
    u = track._param(s)
    n = np.asarray(n, dtype=float)
    if not np.all(np.isfinite(n)):
        raise InvalidCoordinateError("non-finite lateral offset")
    kn = track.kappa_at(u) * n
    if np.any(np.abs(kn) >= 1.0):
        raise DegenerateFrameError("degenerate Frenet frame: |kappa*n| >= 1")
    p = track._spline(u)
    d = track._spline(u, 1)
    norm = np.hypot(d[..., 0], d[..., 1])
    tx, ty = d[..., 0] / norm, d[..., 1] / norm
    x = p[..., 0] - n * ty
    y = p[..., 1] + n * tx
    heading = np.arctan2(ty, tx)
    if np.ndim(x) == 0:
        return CartesianPose(float(x), float(y), float(heading))
    return CartesianPose(x, y, heading)


def cartesian_to_frenet(
    track: TrackGeometry, x, y, corridor_max: float | None = None, tol: float = 1e-9,
    max_iter: int = 20,
) -> FrenetPoint:
    """Project Cartesian points onto the reference line.

    Nearest re-sampled point first, then Newton on the orthogonality residual
    ``(r(u) - p) . r'(u) = 0``.
    """
    px = np.asarray(x, dtype=float)
    py = np.asarray(y, dtype=float)
    scalar = px.ndim == 0
    px, py = np.atleast_1d(px), np.atleast_1d(py)
    if not (np.all(np.isfinite(px)) and np.all(np.isfinite(py))):
        raise InvalidCoordinateError("non-finite Cartesian coordinate")
    if corridor_max is None:
        corridor_max = track.corridor_max
    if corridor_max is None:
        corridor_max = 2.0 * track.half_width

    _, idx = track._tree.query(np.column_stack([px, py]))
    u = track.s[idx].copy()
    spl = track._spline
    for _ in range(max_iter):
        uu = track._param(u) if track.closed else np.clip(u, 0.0, track.s_max)
        r, d1, d2 = spl(uu), spl(uu, 1), spl(uu, 2)
        ex, ey = r[:, 0] - px, r[:, 1] - py
        f = ex * d1[:, 0] + ey * d1[:, 1]
        fp = d1[:, 0] ** 2 + d1[:, 1] ** 2 + ex * d2[:, 0] + ey * d2[:, 1]
        step = f / fp
        u = uu - step
        if np.all(np.abs(step) < tol):
            break
    u = track._param(u) if track.closed else np.clip(u, 0.0, track.s_max)
    r, d1 = spl(u), spl(u, 1)
    norm = np.hypot(d1[:, 0], d1[:, 1])
    tx, ty = d1[:, 0] / norm, d1[:, 1] / norm
    ex, ey = px - r[:, 0], py - r[:, 1]
    n = -ex * ty + ey * tx
    along = ex * tx + ey * ty
    bad = (np.abs(n) > corridor_max) | (np.abs(along) > 1e-6 + tol)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise OutOfCorridorError(
            f"point ({px[k]:.3f}, {py[k]:.3f}) is outside the corridor "
            f"(|n| <= {corridor_max:.3f}); nearest s = {u[k]:.3f}",
            nearest_s=float(u[k]),
        )
    if track.closed:
        u = np.where(u >= track.s_max, u - track.s_max, u)
    if scalar:
        return FrenetPoint(float(u[0]), float(n[0]))
    return FrenetPoint(u, n)


# -- file I/O ---------------------------------------------------------------


def load_track(
    source, step: float = 1.0, smooth_window: int = 3, closed: bool | None = None
) -> TrackGeometry:
    """Parse a track CSV (``x,y,n_min,n_max[,a_z]``).

    ``#`` lines are comments; ``# closed: true|false`` overrides loop
    detection.
    """
    path = Path(source)
    rows = []
    header = None
    with open(path, newline="") as f:
        for lineno, line in enumerate(f, start=1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip().lower().replace(" ", "")
                if body.startswith("closed:") or body.startswith("closed="):
                    flag = body[7:]
                    if flag not in ("true", "false"):
                        raise TrackParseError(f"{path}:{lineno}: bad closed directive {flag!r}")
                    if closed is None:
                        closed = flag == "true"
                continue
            cells = next(csv.reader([text]))
            if header is None:
                header = [c.strip() for c in cells]
                missing = {"x", "y", "n_min", "n_max"} - set(header)
                if missing:
                    raise TrackParseError(f"{path}:{lineno}: header missing columns {sorted(missing)}")
                unknown = set(header) - {"x", "y", "n_min", "n_max", "a_z"}
                if unknown:
                    raise TrackParseError(f"{path}:{lineno}: unknown columns {sorted(unknown)}")
                continue
            if len(cells) != len(header):
                raise TrackParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(cells)}"
                )
            try:
                values = [float(c) for c in cells]
            except ValueError as exc:
                raise TrackParseError(f"{path}:{lineno}: {exc}") from None
            row = dict(zip(header, values))
            if row["n_min"] >= 0 or row["n_max"] <= 0:
                raise TrackParseError(
                    f"{path}:{lineno}: bound violation (need n_min < 0 < n_max)"
                )
            rows.append(row)
    if header is None:
        raise TrackParseError(f"{path}: empty track file")
    if len(rows) < 4:
        raise TrackParseError(f"{path}: need at least 4 points, got {len(rows)}")
    cols = {k: np.array([r[k] for r in rows]) for k in header}
    return TrackGeometry.from_centerline(
        cols["x"], cols["y"], cols["n_min"], cols["n_max"], cols.get("a_z"),
        closed=closed, step=step, smooth_window=smooth_window,
    )


def write_track_csv(path, x, y, n_min, n_max, a_z=None, closed: bool | None = None):
    x = np.asarray(x, dtype=float)
    cols = [x, np.asarray(y, float), np.broadcast_to(n_min, x.shape), np.broadcast_to(n_max, x.shape)]
    names = ["x", "y", "n_min", "n_max"]
    if a_z is not None:
        cols.append(np.broadcast_to(a_z, x.shape))
        names.append("a_z")
    lines = []
    if closed is not None:
        lines.append(f"# closed: {'true' if closed else 'false'}")
    lines.append(",".join(names))
    for row in zip(*cols):
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
