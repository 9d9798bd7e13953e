"""Independent reference implementations used as test oracles.

Nothing here calls into the package's indexing, DP or profile code; each
oracle recomputes its answer from first principles, slowly and plainly.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# -- grid indexing ------------------------------------------------------------------


def scan_index(s_max, s_dim, n_dim, w_max, closed, s, n):
    """Cell indices by scanning every half-open boundary interval.

    Interval ``i`` along s is ``[i*ds, (i+1)*ds)`` and interval ``j`` along n
    is ``[(j-n_dim)*dn, (j+1-n_dim)*dn)``.  A value inside no interval falls
    to the nearer end.  Closed grids first wrap s with the floating modulo.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    n = np.atleast_1d(np.asarray(n, dtype=float))
    ds = s_max / s_dim
    dn = w_max / n_dim
    N = 2 * n_dim
    if closed:
        s = np.array([math.fmod(v, s_max) for v in s])
        s = np.where(s < 0, s + s_max, s)
    s_lo = np.array([k * ds for k in range(s_dim)])
    s_hi = np.array([(k + 1) * ds for k in range(s_dim)])
    n_lo = np.array([(k - n_dim) * dn for k in range(N)])
    n_hi = np.array([(k + 1 - n_dim) * dn for k in range(N)])
    i = _scan(s, s_lo, s_hi)
    j = _scan(n, n_lo, n_hi)
    return i, j


def _scan(x, lo, hi, chunk=4096):
    out = np.empty(x.size, dtype=np.int64)
    for a in range(0, x.size, chunk):
        xs = x[a:a + chunk, None]
        inside = (lo[None, :] <= xs) & (xs < hi[None, :])
        hit = inside.any(axis=1)
        idx = np.argmax(inside, axis=1)
        below = xs[:, 0] < lo[0]
        out[a:a + chunk] = np.where(hit, idx, np.where(below, 0, lo.size - 1))
    return out


def grid_scan_index(grid, s, n):
    return scan_index(grid.s_max, grid.s_dim, grid.n_dim, grid.w_max, grid.closed, s, n)


def region_oracle(grid, s_range, n_range):
    """Cells overlapping a region, by testing every cell on the unrolled lap.

    On closed grids the range is moved to start inside the first lap and
    checked against cell copies on the three laps around it, so a range
    running through the start line hits cells at both ends.
    """
    s_lo, s_hi = s_range
    if grid.closed:
        if s_hi < s_lo:
            s_hi += grid.s_max
        shift = math.floor(s_lo / grid.s_max) * grid.s_max
        s_lo, s_hi = s_lo - shift, s_hi - shift
    n_lo, n_hi = n_range
    ds, dn = grid.s_max / grid.s_dim, grid.w_max / grid.n_dim
    mask = np.zeros((grid.s_dim, 2 * grid.n_dim), dtype=bool)
    laps = (-1, 0, 1) if grid.closed else (0,)
    for i in range(grid.s_dim):
        rows = any(
            (i * ds + lap * grid.s_max < s_hi) and ((i + 1) * ds + lap * grid.s_max > s_lo)
            for lap in laps
        )
        if not rows:
            continue
        for j in range(2 * grid.n_dim):
            lo = (j - grid.n_dim) * dn
            if lo < n_hi and lo + dn > n_lo:
                mask[i, j] = True
    return mask


# -- lattice dynamic program -------------------------------------------------------


def enumerate_paths(stage, closed):
    """Minimum total over every candidate sequence, and all sequences attaining it.

    Stage ``k`` couples knots ``k-1, k, k+1``.  Open lattices sum stages
    ``1..K-2``; closed ones sum ``1..K-1`` then ``0`` (indices mod K).  The
    summation order is fixed so totals are reproducible to the bit.
    """
    K, C = stage.shape[0], stage.shape[1]
    order = list(range(1, K)) + [0] if closed else list(range(1, K - 1))
    paths = np.array(list(itertools.product(range(C), repeat=K)), dtype=np.int64)
    total = np.zeros(len(paths))
    for k in order:
        total = total + stage[k][paths[:, (k - 1) % K], paths[:, k], paths[:, (k + 1) % K]]
    best = float(np.min(total))
    return best, paths[total == best]


def stage_cost_oracle(lat, ay_max, v_max):
    """Stage tensor from plain geometry for a constant-limit vehicle.

    Time is half of both adjoining chords at the speed where the circle
    through the three points uses all lateral grip, plus the smoothing
    weight times the squared turning angle.  Chords pointing more than a
    right angle away from the reference heading are forbidden.
    """
    K, C = lat.offsets.shape
    out = np.empty((K, C, C, C))
    for k in range(K):
        km, kp = (k - 1) % K, (k + 1) % K
        for a, b, c in itertools.product(range(C), repeat=3):
            pa = (lat.x[km, a], lat.y[km, a])
            pb = (lat.x[k, b], lat.y[k, b])
            pc = (lat.x[kp, c], lat.y[kp, c])
            u = (pb[0] - pa[0], pb[1] - pa[1])
            w = (pc[0] - pb[0], pc[1] - pb[1])
            if _off_heading(u, lat.ref_heading[km]) or _off_heading(w, lat.ref_heading[k]):
                out[k, a, b, c] = math.inf
                continue
            la, lb = math.hypot(*u), math.hypot(*w)
            lc = math.hypot(pc[0] - pa[0], pc[1] - pa[1])
            cross = u[0] * w[1] - u[1] * w[0]
            curv = abs(2.0 * cross / (la * lb * lc)) if la * lb * lc > 0 else 0.0
            i, j = scan_index(lat.grid.s_max, lat.grid.s_dim, lat.grid.n_dim, lat.grid.w_max,
                              lat.grid.closed, lat.s[k], lat.offsets[k, b])
            theta = lat.grid.theta[i[0], j[0]]
            v = v_max if curv == 0 else min(math.sqrt(theta * ay_max / curv), v_max)
            if lat.v_ref is not None:
                v = min(v, lat.v_ref[k])
            turn = math.atan2(cross, u[0] * w[0] + u[1] * w[1])
            out[k, a, b, c] = 0.5 * (la + lb) / v + lat.config.smooth_weight * turn * turn
    return out


def _off_heading(vec, ref):
    d = math.atan2(vec[1], vec[0]) - ref
    d = math.atan2(math.sin(d), math.cos(d))
    return abs(d) > math.pi / 2


# -- speed profile constraints -----------------------------------------------------


def profile_violations(x, y, kappa, theta, v, ax_max, ax_min, ay_max, v_max, p, closed, tol=1e-9):
    """Per-layer flags: cornering cap, outgoing acceleration and outgoing braking.

    The segment from layer k to k+1 must fit in the longitudinal share left
    by layer k's lateral acceleration (p-norm envelope, theta-scaled).
    Returns three boolean arrays of length K.
    """
    K = len(v)
    corner = v * v * np.abs(kappa) > theta * ay_max * (1 + tol) + tol
    corner |= v > v_max * (1 + tol)
    accel = np.zeros(K, dtype=bool)
    brake = np.zeros(K, dtype=bool)
    segs = range(K) if closed else range(K - 1)
    for k in segs:
        k1 = (k + 1) % K
        ds = math.hypot(x[k1] - x[k], y[k1] - y[k])
        a = (v[k1] ** 2 - v[k] ** 2) / (2 * ds)
        r = min(v[k] ** 2 * abs(kappa[k]) / (theta[k] * ay_max), 1.0)
        share = (1.0 - r**p) ** (1.0 / p)
        if a > 0 and a > theta[k] * ax_max * share * (1 + tol) + tol:
            accel[k] = True
        if a < 0 and -a > theta[k] * ax_min * share * (1 + tol) + tol:
            brake[k] = True
    return corner, accel, brake


# -- polynomials --------------------------------------------------------------------


def poly_eval(coef_ascending, t, derivative=0):
    """Value or derivative of an ascending-coefficient polynomial."""
    c = np.polynomial.polynomial.Polynomial(coef_ascending)
    return float(c.deriv(derivative)(t)) if derivative else float(c(t))
