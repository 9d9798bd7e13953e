"""Point-mass acceleration envelope over speed and vertical acceleration.

Limits are tabulated on a (v, a_z) grid and interpolated bilinearly, clamped
at the table edges.  The combined envelope is a p-norm of the per-axis
ratios; a grip scaling factor multiplies every limit alike.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .grid import GripMapGrid, lookup_theta


class Limits(NamedTuple):
    ax_max: float | np.ndarray
    ax_min: float | np.ndarray  # braking, stored positive
    ay_max: float | np.ndarray

    def scaled(self, theta) -> "Limits":
        return Limits(self.ax_max * theta, self.ax_min * theta, self.ay_max * theta)


def utilization_from_limits(ax, ay, limits: Limits, p: float):
    """p-norm envelope ratio; 1.0 is exactly on the boundary."""
    ax_lim = np.where(np.asarray(ax) >= 0, limits.ax_max, limits.ax_min)
    rx = np.abs(ax) / ax_lim
    ry = np.abs(ay) / limits.ay_max
    if p == 2:
        out = np.hypot(rx, ry)
    elif math.isinf(p):
        out = np.maximum(rx, ry)
    elif p == 1:
        out = rx + ry
    else:
        out = (rx**p + ry**p) ** (1.0 / p)
    return out if np.ndim(out) else float(out)


def _bracket(x, grid):
    size = len(grid)
    if size == 1:
        zero = np.zeros(np.shape(x), dtype=np.intp)
        return zero, zero, np.zeros(np.shape(x))
    f = np.interp(x, grid, np.arange(size, dtype=float))
    i0 = np.minimum(f.astype(np.intp), size - 2)
    return i0, i0 + 1, f - i0


@dataclass(frozen=True, eq=False)
class GggvModel:
    v_grid: np.ndarray
    az_grid: np.ndarray
    ax_max_base: np.ndarray
    ax_min_base: np.ndarray
    ay_max_base: np.ndarray
    shape_exponent: float = 2.0
    v_max: float = 80.0
    kappa_max: float = 0.2

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v_grid, dtype=float))
        az = np.atleast_1d(np.asarray(self.az_grid, dtype=float))
        shape = (len(v), len(az))
        tables = []
        for name in ("ax_max_base", "ax_min_base", "ay_max_base"):
            t = np.asarray(getattr(self, name), dtype=float)
            try:
                t = np.broadcast_to(t, shape).copy()
            except ValueError:
                raise ValidationError(f"{name} must have shape {shape}, got {np.shape(t)}") from None
            if not np.all(np.isfinite(t)) or np.any(t <= 0):
                raise ValidationError(f"{name} must be finite and positive")
            if len(az) > 1 and np.any(np.diff(t, axis=1) < 0):
                raise ValidationError(f"{name} must be non-decreasing in a_z")
            t.setflags(write=False)
            tables.append(t)
        if np.any(np.diff(v) <= 0) or np.any(np.diff(az) <= 0):
            raise ValidationError("v_grid and az_grid must be strictly ascending")
        if not self.shape_exponent >= 1:
            raise ValidationError(f"shape_exponent must be >= 1, got {self.shape_exponent}")
        if not (self.v_max > 0 and self.kappa_max > 0):
            raise ValidationError("v_max and kappa_max must be positive")
        v.setflags(write=False)
        az.setflags(write=False)
        object.__setattr__(self, "v_grid", v)
        object.__setattr__(self, "az_grid", az)
        object.__setattr__(self, "ax_max_base", tables[0])
        object.__setattr__(self, "ax_min_base", tables[1])
        object.__setattr__(self, "ay_max_base", tables[2])
        const = all(np.ptp(t) == 0 for t in tables)
        object.__setattr__(self, "_const", Limits(*(float(t.flat[0]) for t in tables)) if const else None)

    @classmethod
    def constant(cls, ax_max=10.0, ay_max=10.0, ax_min=None, v_max=80.0, shape_exponent=2.0,
                 kappa_max=0.2) -> "GggvModel":
        ax_min = ax_max if ax_min is None else ax_min
        return cls([0.0], [9.81], [[ax_max]], [[ax_min]], [[ay_max]],
                   shape_exponent=shape_exponent, v_max=v_max, kappa_max=kappa_max)

    @property
    def is_constant(self) -> bool:
        return self._const is not None

    # -- queries ------------------------------------------------------------

    def base_limits(self, v, a_z=9.81) -> Limits:
        """Baseline limits at (v, a_z); arrays broadcast."""
        if np.any(np.asarray(v) < 0):
            raise ValidationError("negative speed")
        if self._const is not None:
            return self._const
        v = np.asarray(v, dtype=float)
        a_z = np.asarray(a_z, dtype=float)
        v, a_z = np.broadcast_arrays(v, a_z)
        i0, i1, wv = _bracket(v, self.v_grid)
        j0, j1, wa = _bracket(a_z, self.az_grid)

        def interp(t):
            out = (
                (1 - wv) * (1 - wa) * t[i0, j0]
                + (1 - wv) * wa * t[i0, j1]
                + wv * (1 - wa) * t[i1, j0]
                + wv * wa * t[i1, j1]
            )
            return out if out.ndim else float(out)

        return Limits(interp(self.ax_max_base), interp(self.ax_min_base), interp(self.ay_max_base))

    def effective_limits(self, grid: GripMapGrid, s, n, v, a_z=9.81) -> Limits:
        return self.base_limits(v, a_z).scaled(lookup_theta(grid, s, n))

    def utilization(self, grid: GripMapGrid, s, n, v, a_z, ax, ay):
        return utilization_from_limits(ax, ay, self.effective_limits(grid, s, n, v, a_z),
                                       self.shape_exponent)

    def feasible(self, grid: GripMapGrid, s, n, v, a_z, ax, ay):
        ok = (np.asarray(self.utilization(grid, s, n, v, a_z, ax, ay)) <= 1.0) & (
            np.asarray(v) <= self.v_max
        )
        return ok if ok.ndim else bool(ok)

    def ax_remainder(self, limits: Limits, ay, braking: bool = False):
        """Longitudinal acceleration left over once ``ay`` is spent (>= 0)."""
        p = self.shape_exponent
        lim = limits.ax_min if braking else limits.ax_max
        ry = np.minimum(np.abs(ay) / limits.ay_max, 1.0)
        if math.isinf(p):
            frac = np.where(ry < 1.0, 1.0, 0.0)
        else:
            frac = (1.0 - ry**p) ** (1.0 / p)
        return lim * frac

    def cornering_speed(self, kappa, theta=1.0, a_z=9.81, iterations: int = 60):
        """Largest v <= v_max with v^2 |kappa| <= theta * ay_max_base(v, a_z)."""
        kappa = np.abs(np.asarray(kappa, dtype=float))
        theta = np.asarray(theta, dtype=float)
        kappa, theta, a_z = np.broadcast_arrays(kappa, theta, np.asarray(a_z, dtype=float))
        with np.errstate(divide="ignore"):
            if self._const is not None:
                v = np.sqrt(theta * self._const.ay_max / kappa)
                out = np.minimum(v, self.v_max)
                return out if out.ndim else float(out)
        vmax = np.full(kappa.shape, self.v_max)
        ok_top = vmax**2 * kappa <= theta * self.base_limits(vmax, a_z).ay_max
        lo = np.zeros(kappa.shape)
        hi = vmax.copy()
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            ok = mid**2 * kappa <= theta * self.base_limits(mid, a_z).ay_max
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        out = np.where(ok_top, vmax, lo)
        return out if out.ndim else float(out)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "v_grid": self.v_grid.tolist(),
            "az_grid": self.az_grid.tolist(),
            "ax_max": self.ax_max_base.tolist(),
            "ax_min": self.ax_min_base.tolist(),
            "ay_max": self.ay_max_base.tolist(),
            "shape_exponent": self.shape_exponent,
            "v_max": self.v_max,
            "kappa_max": self.kappa_max,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GggvModel":
        required = {"v_grid", "az_grid", "ax_max", "ay_max", "v_max"}
        missing = required - set(doc)
        if missing:
            raise ValidationError(f"g-g-g-v file missing keys {sorted(missing)}")
        return cls(
            doc["v_grid"], doc["az_grid"], doc["ax_max"], doc.get("ax_min", doc["ax_max"]),
            doc["ay_max"], shape_exponent=float(doc.get("shape_exponent", 2.0)),
            v_max=float(doc["v_max"]), kappa_max=float(doc.get("kappa_max", 0.2)),
        )


def load_gggv(path) -> GggvModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return GggvModel.from_dict(doc)


def default_model() -> GggvModel:
    return GggvModel.constant(10.0, 10.0, v_max=80.0, shape_exponent=2.0)
