"""Dense Frenet-frame grid of grip scaling factors.

Cells are addressed by direct index arithmetic: ``i = floor(s / ds)`` and
``j = floor((n + n_offset) / dn)``, both clipped to the matrix.  Closed tracks
wrap ``s`` modulo ``s_max`` first.  The floor result is corrected by at most
one cell so that the answer agrees exactly with the float cell boundaries
``i * ds`` and ``(j - n_dim) * dn``; float division alone can land one cell
off right at a boundary.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np

from .errors import ChecksumError, FormatError, GridError, InvalidCoordinateError

THETA_CAP = 1.2
THETA_FLOOR = 0.5

MAGIC = b"GMAP"
VERSION = 1
_HEADER = struct.Struct("<4sHIIdd")
_CRC = struct.Struct("<I")
HEADER_SIZE = _HEADER.size


@dataclass(frozen=True, eq=False)
class GripMapGrid:
    """``s_dim x 2*n_dim`` matrix of scaling factors over ``[0, s_max) x [-w_max, w_max)``.

    ``theta`` is C-contiguous float64, row ``i`` = longitudinal cell.
    Instances are immutable; the update helpers return new grids.
    """

    s_max: float
    w_max: float
    theta: np.ndarray
    closed: bool = True
    theta_cap: float = THETA_CAP

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64, order="C", copy=True)
        if theta.ndim != 2 or theta.shape[0] < 1 or theta.shape[1] < 2 or theta.shape[1] % 2:
            raise GridError(f"theta must be s_dim x 2*n_dim, got shape {theta.shape}")
        if not (self.s_max > 0 and math.isfinite(self.s_max)):
            raise GridError(f"s_max must be positive, got {self.s_max}")
        if not (self.w_max > 0 and math.isfinite(self.w_max)):
            raise GridError(f"w_max must be positive, got {self.w_max}")
        _check_theta(theta, self.theta_cap)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        # reciprocal table lets hot loops multiply instead of divide
        inv = 1.0 / theta
        inv.setflags(write=False)
        object.__setattr__(self, "inv_theta", inv)

    @property
    def s_dim(self) -> int:
        return self.theta.shape[0]

    @property
    def n_dim(self) -> int:
        return self.theta.shape[1] // 2

    @property
    def N(self) -> int:
        return self.theta.shape[1]

    @property
    def delta_s(self) -> float:
        return self.s_max / self.s_dim

    @property
    def delta_n(self) -> float:
        return self.w_max / self.n_dim

    @property
    def n_offset(self) -> float:
        return self.n_dim * self.delta_n

    def s_boundaries(self) -> np.ndarray:
        """Lower cell edges along s (length ``s_dim``)."""
        return np.arange(self.s_dim) * self.delta_s

    def n_boundaries(self) -> np.ndarray:
        """Lower cell edges along n: ``-n_dim*dn, ..., -dn, 0, dn, ..., (n_dim-1)*dn``."""
        return (np.arange(self.N) - self.n_dim) * self.delta_n

    def cell_center(self, i, j):
        return (np.asarray(i) + 0.5) * self.delta_s, (np.asarray(j) - self.n_dim + 0.5) * self.delta_n

    def nbytes(self) -> int:
        return self.theta.nbytes

    def __eq__(self, other):
        if not isinstance(other, GripMapGrid):
            return NotImplemented
        return (
            self.s_max == other.s_max
            and self.w_max == other.w_max
            and self.closed == other.closed
            and self.theta_cap == other.theta_cap
            and self.theta.shape == other.theta.shape
            and self.theta.tobytes() == other.theta.tobytes()
        )

    __hash__ = None


class CellIndex(NamedTuple):
    i: int | np.ndarray
    j: int | np.ndarray


def _check_theta(theta, cap):
    bad = ~np.isfinite(theta) | (theta <= 0) | (theta > cap)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise GridError(f"theta[{i}, {j}] = {theta[i, j]!r} outside (0, {cap}]")


def build_gripmap(
    track_or_s_max, s_dim: int, n_dim: int, w_max: float, init_theta: float = 1.0,
    closed: bool | None = None, theta_cap: float = THETA_CAP,
) -> GripMapGrid:
    """Uniform grid over a track (or a bare ``s_max``)."""
    if hasattr(track_or_s_max, "s_max"):
        s_max = float(track_or_s_max.s_max)
        if closed is None:
            closed = track_or_s_max.closed
    else:
        s_max = float(track_or_s_max)
    if closed is None:
        closed = True
    if int(s_dim) != s_dim or s_dim < 1 or int(n_dim) != n_dim or n_dim < 1:
        raise GridError(f"s_dim and n_dim must be positive integers, got {s_dim}, {n_dim}")
    if not w_max > 0:
        raise GridError(f"w_max must be positive, got {w_max}")
    if not 0 < init_theta <= theta_cap:
        raise GridError(f"init_theta must be in (0, {theta_cap}], got {init_theta}")
    theta = np.full((int(s_dim), 2 * int(n_dim)), float(init_theta))
    return GripMapGrid(s_max, float(w_max), theta, closed=bool(closed), theta_cap=theta_cap)


# -- indexing -----------------------------------------------------------------


def _index_scalar(grid: GripMapGrid, s: float, n: float):
    if not (math.isfinite(s) and math.isfinite(n)):
        raise InvalidCoordinateError(f"non-finite coordinate (s={s}, n={n})")
    ds, dn = grid.delta_s, grid.delta_n
    M, N, nd = grid.s_dim, grid.N, grid.n_dim
    if grid.closed:
        s = s % grid.s_max
    # clamp before converting: the quotient may overflow to inf for huge inputs
    i = int(min(max(s / ds, 0.0), M - 1))
    if i > 0 and s < i * ds:
        i -= 1
    elif i < M - 1 and s >= (i + 1) * ds:
        i += 1
    j = int(min(max((n + grid.n_offset) / dn, 0.0), N - 1))
    if j > 0 and n < (j - nd) * dn:
        j -= 1
    elif j < N - 1 and n >= (j + 1 - nd) * dn:
        j += 1
    return i, j


@numba.njit(cache=True, nogil=True)
def _cells_into(s, n, ss, nn, out_i, out_j, s_max, ds, dn, M, N, nd, n_offset, closed):
    """Cells of 1-D ``s``/``n`` into ``out_i``/``out_j``; same answer as _index_scalar.

    A scalar pass wraps closed-track ``s`` and parks non-finite points at
    the origin (returning False if there were any).  The second pass is
    branch-free so it vectorizes: a clamped first guess (truncation equals
    floor) may be one cell off near an edge and is settled against the
    exact float boundaries.
    """
    finite = True
    for k in range(s.size):
        sk, nk = s[k], n[k]
        if not (math.isfinite(sk) and math.isfinite(nk)):
            finite = False
            sk, nk = 0.0, 0.0
        elif closed and (sk < 0.0 or sk >= s_max):
            sk = sk % s_max
        ss[k] = sk
        nn[k] = nk
    inv_ds, inv_dn = 1.0 / ds, 1.0 / dn
    top_i, top_j = M - 1.0, N - 1.0
    for k in range(s.size):
        sk, nk = ss[k], nn[k]
        i = int(min(max(sk * inv_ds, 0.0), top_i))
        i = i - ((sk < i * ds) & (i > 0)) + ((sk >= (i + 1) * ds) & (i < M - 1))
        j = int(min(max((nk + n_offset) * inv_dn, 0.0), top_j))
        j = j - ((nk < (j - nd) * dn) & (j > 0)) + ((nk >= (j + 1 - nd) * dn) & (j < N - 1))
        out_i[k] = i
        out_j[k] = j
    return finite


@numba.njit(cache=True, nogil=True)
def _index_kernel(s, n, s_max, ds, dn, M, N, nd, n_offset, closed, out_i, out_j):
    ss, nn = np.empty(s.size), np.empty(s.size)
    return _cells_into(s, n, ss, nn, out_i, out_j, s_max, ds, dn, M, N, nd, n_offset, closed)


@numba.njit(cache=True, nogil=True)
def _lookup_kernel(s, n, theta, s_max, ds, dn, M, N, nd, n_offset, closed, out):
    ss, nn = np.empty(s.size), np.empty(s.size)
    ii = np.empty(s.size, dtype=np.intp)
    jj = np.empty(s.size, dtype=np.intp)
    ok = _cells_into(s, n, ss, nn, ii, jj, s_max, ds, dn, M, N, nd, n_offset, closed)
    for k in range(s.size):
        out[k] = theta[ii[k], jj[k]]
    return ok


def _geometry(grid: GripMapGrid):
    return (float(grid.s_max), grid.delta_s, grid.delta_n, grid.s_dim, grid.N, grid.n_dim,
            grid.n_offset, bool(grid.closed))


def _flat_pair(s, n):
    s, n = np.broadcast_arrays(np.asarray(s, dtype=np.float64), np.asarray(n, dtype=np.float64))
    return np.ascontiguousarray(s).ravel(), np.ascontiguousarray(n).ravel(), s.shape


def _index_array(grid: GripMapGrid, s, n):
    fs, fn, shape = _flat_pair(s, n)
    i = np.empty(fs.size, dtype=np.intp)
    j = np.empty(fs.size, dtype=np.intp)
    if not _index_kernel(fs, fn, *_geometry(grid), i, j):
        raise InvalidCoordinateError("non-finite coordinate in batch")
    return i.reshape(shape), j.reshape(shape)


def index_of(grid: GripMapGrid, s, n) -> CellIndex:
    """Cell containing ``(s, n)``; accepts scalars or arrays."""
    if np.ndim(s) == 0 and np.ndim(n) == 0:
        return CellIndex(*_index_scalar(grid, float(s), float(n)))
    return CellIndex(*_index_array(grid, s, n))


def lookup_theta(grid: GripMapGrid, s, n):
    """Scaling factor of the cell containing ``(s, n)``."""
    if np.ndim(s) == 0 and np.ndim(n) == 0:
        i, j = _index_scalar(grid, float(s), float(n))
        return float(grid.theta[i, j])
    fs, fn, shape = _flat_pair(s, n)
    out = np.empty(fs.size)
    if not _lookup_kernel(fs, fn, grid.theta, *_geometry(grid), out):
        raise InvalidCoordinateError("non-finite coordinate in batch")
    return out.reshape(shape)


# -- editing --------------------------------------------------------------------


def _replace_theta(grid: GripMapGrid, theta) -> GripMapGrid:
    return GripMapGrid(grid.s_max, grid.w_max, theta, closed=grid.closed, theta_cap=grid.theta_cap)


def _check_value(grid, value):
    if not (math.isfinite(value) and 0 < value <= grid.theta_cap):
        raise GridError(f"theta value {value!r} outside (0, {grid.theta_cap}]")


def set_theta(grid: GripMapGrid, i: int, j: int, value: float) -> GripMapGrid:
    if not (0 <= i < grid.s_dim and 0 <= j < grid.N):
        raise GridError(f"cell ({i}, {j}) outside {grid.s_dim} x {grid.N} grid")
    _check_value(grid, value)
    theta = grid.theta.copy()
    theta[i, j] = value
    return _replace_theta(grid, theta)


def region_cells(grid: GripMapGrid, s_range, n_range):
    """Boolean ``(s_dim, N)`` mask of cells overlapping the half-open region.

    On closed grids an ``s_range`` with ``s_hi < s_lo`` (or ``s_hi > s_max``)
    wraps through the start line.
    """
    s_lo, s_hi = map(float, s_range)
    n_lo, n_hi = map(float, n_range)
    if not all(math.isfinite(v) for v in (s_lo, s_hi, n_lo, n_hi)):
        raise GridError("non-finite region bounds")
    lo_s = grid.s_boundaries()
    hi_s = lo_s + grid.delta_s

    def overlaps(a, b):
        return (lo_s < b) & (hi_s > a)

    if grid.closed and (s_hi < s_lo or s_hi > grid.s_max or s_lo < 0):
        span = s_hi - s_lo if s_hi >= s_lo else s_hi + grid.s_max - s_lo
        if span >= grid.s_max:
            rows = np.ones(grid.s_dim, dtype=bool)
        else:
            a = s_lo % grid.s_max
            b = a + span
            rows = overlaps(a, min(b, grid.s_max))
            if b > grid.s_max:
                rows |= overlaps(0.0, b - grid.s_max)
    else:
        if s_hi < s_lo:
            raise GridError(f"empty s range {s_range} on an open grid")
        rows = overlaps(s_lo, s_hi)
    lo_n = grid.n_boundaries()
    cols = (lo_n < n_hi) & (lo_n + grid.delta_n > n_lo)
    return rows[:, None] & cols[None, :]


def set_region(grid: GripMapGrid, s_range, n_range, value: float) -> GripMapGrid:
    _check_value(grid, value)
    mask = region_cells(grid, s_range, n_range)
    theta = grid.theta.copy()
    theta[mask] = value
    return _replace_theta(grid, theta)


# -- telemetry-driven refinement -------------------------------------------------


class ThetaUpdate(NamedTuple):
    i: int
    j: int
    old_theta: float
    new_theta: float
    reason: str


@dataclass
class TelemetryLog:
    s: np.ndarray
    n: np.ndarray
    utilization: np.ndarray
    anomaly: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.n = np.asarray(self.n, dtype=float)
        self.utilization = np.asarray(self.utilization, dtype=float)
        self.anomaly = np.asarray(self.anomaly, dtype=bool)
        sizes = {len(self.s), len(self.n), len(self.utilization), len(self.anomaly)}
        if len(sizes) != 1:
            raise GridError("telemetry columns differ in length")

    def __len__(self):
        return len(self.s)


def suggest_theta_updates(
    grid: GripMapGrid, telemetry: TelemetryLog, target_util: float = 0.95,
    step: float = 0.05, min_samples: int = 20, theta_floor: float = THETA_FLOOR,
) -> list[ThetaUpdate]:
    """Propose per-cell changes from logged utilization and anomaly flags.

    Anomalies in a cell lower it by ``step`` (not below ``theta_floor``);
    otherwise a cell whose peak utilization stayed under ``target_util`` is
    raised by ``step`` (not above the cap).  Cells with fewer than
    ``min_samples`` samples are left alone.  Only changes are returned.
    """
    if not 0 < step < 0.1:
        raise GridError(f"step must be in (0, 0.1), got {step}")
    if len(telemetry) == 0:
        return []
    i, j = _index_array(grid, telemetry.s, telemetry.n)
    flat = i * grid.N + j
    cells = grid.s_dim * grid.N
    counts = np.bincount(flat, minlength=cells)
    peak = np.full(cells, -np.inf)
    np.maximum.at(peak, flat, telemetry.utilization)
    flagged = np.bincount(flat, weights=telemetry.anomaly.astype(float), minlength=cells) > 0

    out = []
    for c in np.flatnonzero(counts >= min_samples):
        ci, cj = divmod(int(c), grid.N)
        old = float(grid.theta[ci, cj])
        if flagged[c]:
            new = max(old - step, theta_floor)
            reason = "anomaly"
        elif peak[c] < target_util:
            new = min(old + step, grid.theta_cap)
            reason = f"underutilized (peak {peak[c]:.3f} < {target_util})"
        else:
            continue
        if new != old:
            out.append(ThetaUpdate(ci, cj, old, new, reason))
    return out


def apply_updates(grid: GripMapGrid, updates) -> GripMapGrid:
    theta = grid.theta.copy()
    for u in updates:
        _check_value(grid, u.new_theta)
        theta[u.i, u.j] = u.new_theta
    return _replace_theta(grid, theta)


# -- persistence -----------------------------------------------------------------


def save_gripmap(grid: GripMapGrid) -> bytes:
    """Little-endian binary: header, theta row-major, CRC32 of everything before it."""
    body = _HEADER.pack(MAGIC, VERSION, grid.s_dim, grid.n_dim, grid.s_max, grid.w_max)
    body += grid.theta.astype("<f8", copy=False).tobytes(order="C")
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def load_gripmap(data: bytes, closed: bool = True, theta_cap: float = THETA_CAP) -> GripMapGrid:
    """Inverse of :func:`save_gripmap`.

    The binary layout carries no open/closed flag, so the caller states it.
    """
    data = bytes(data)
    if len(data) < HEADER_SIZE + _CRC.size:
        raise ChecksumError(f"truncated payload: {len(data)} bytes, checksum failure")
    magic, version, s_dim, n_dim, s_max, w_max = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    expected = HEADER_SIZE + 8 * s_dim * 2 * n_dim + _CRC.size
    if len(data) != expected:
        raise ChecksumError(
            f"payload length {len(data)} != expected {expected}: truncated or padded, checksum failure"
        )
    (crc,) = _CRC.unpack_from(data, expected - _CRC.size)
    if zlib.crc32(data[: expected - _CRC.size]) & 0xFFFFFFFF != crc:
        raise ChecksumError("CRC32 mismatch: checksum failure")
    if s_dim < 1 or n_dim < 1:
        raise FormatError(f"invalid dimensions {s_dim} x {n_dim}")
    theta = np.frombuffer(data, dtype="<f8", count=s_dim * 2 * n_dim, offset=HEADER_SIZE)
    theta = theta.astype(np.float64).reshape(s_dim, 2 * n_dim)
    return GripMapGrid(s_max, w_max, theta, closed=closed, theta_cap=theta_cap)


def write_gripmap(grid: GripMapGrid, path) -> None:
    from .io import atomic_write_bytes

    atomic_write_bytes(path, save_gripmap(grid))


def read_gripmap(path, closed: bool = True) -> GripMapGrid:
    with open(path, "rb") as f:
        return load_gripmap(f.read(), closed=closed)


def grid_stats(grid: GripMapGrid) -> dict:
    t = grid.theta
    return {"min": float(t.min()), "max": float(t.max()), "mean": float(t.mean())}


def to_json(grid: GripMapGrid) -> str:
    doc = {
        "s_dim": grid.s_dim,
        "n_dim": grid.n_dim,
        "N": grid.N,
        "s_max": grid.s_max,
        "w_max": grid.w_max,
        "delta_s": grid.delta_s,
        "delta_n": grid.delta_n,
        "n_offset": grid.n_offset,
        "closed": grid.closed,
        "stats": grid_stats(grid),
        "theta": grid.theta.tolist(),
    }
    return json.dumps(doc, indent=1)
