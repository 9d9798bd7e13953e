"""Synthetic tracks used by the bundled data and experiments.

Centerlines are built from pieces whose curvature varies linearly with arc
length (straights, arcs and clothoid transitions), so curvature is
continuous and the curvature rate stays bounded.
"""

from __future__ import annotations

import math
from importlib.resources import files
from pathlib import Path

import numpy as np


def _fine_walk(pieces, count: int, substeps: int):
    total = sum(p[0] for p in pieces)
    fine = count * substeps
    s = np.linspace(0.0, total, 2 * fine + 1)
    bounds = np.cumsum([0.0] + [p[0] for p in pieces])
    heading = np.empty_like(s)
    h0 = 0.0
    for i, (length, k0, k1) in enumerate(pieces):
        sel = (s >= bounds[i]) & (s <= bounds[i + 1])
        u = s[sel] - bounds[i]
        heading[sel] = h0 + k0 * u + 0.5 * (k1 - k0) / length * u * u
        h0 += 0.5 * (k0 + k1) * length
    h = total / (2 * fine)
    cx, cy = np.cos(heading), np.sin(heading)
    # Simpson over each pair of fine intervals
    dx = h / 3.0 * (cx[:-2:2] + 4 * cx[1:-1:2] + cx[2::2])
    dy = h / 3.0 * (cy[:-2:2] + 4 * cy[1:-1:2] + cy[2::2])
    x = np.concatenate([[0.0], np.cumsum(dx)])
    y = np.concatenate([[0.0], np.cumsum(dy)])
    return x, y


def integrate_pieces(pieces, step: float = 1.0, substeps: int = 20):
    """Walk ``(length, kappa_start, kappa_end)`` pieces from the origin heading +x.

    Heading is integrated exactly (it is piecewise quadratic); position uses
    Simpson's rule on a fine sub-grid.  Returns ``(x, y)`` at spacing close to
    ``step``; the end point is dropped so a closed loop does not repeat it.
    """
    count = max(int(round(sum(p[0] for p in pieces) / step)), 1)
    x, y = _fine_walk(pieces, count, substeps)
    return x[:-1:substeps], y[:-1:substeps]


def end_point(pieces, substeps: int = 2000):
    x, y = _fine_walk(pieces, 1, substeps)
    return float(x[-1]), float(y[-1])


def _turn(angle: float, radius: float, transition: float):
    """Pieces turning left by ``angle`` with entry/exit spirals of length ``transition``."""
    k = 1.0 / radius
    arc = angle / k - transition
    if arc < 0:
        raise ValueError("transition too long for this turn")
    pieces = [(transition, 0.0, k)] if transition > 0 else []
    if arc > 0:
        pieces.append((arc, k, k))
    if transition > 0:
        pieces.append((transition, k, 0.0))
    return pieces


def oval(radius: float = 300.0, straight: float = 600.0, transition: float = 150.0, step: float = 1.0):
    """Counter-clockwise oval: two straights and two 180 degree turns with spirals."""
    turn = _turn(math.pi, radius, transition)
    return integrate_pieces([(straight, 0.0, 0.0)] + turn + [(straight, 0.0, 0.0)] + turn, step)


def rounded_rectangle(bottom: float = 300.0, right: float = 150.0, radii=(25.0, 60.0, 40.0, 100.0),
                      transition: float = 20.0, step: float = 1.0):
    """Counter-clockwise loop of four 90 degree corners with different radii.

    The bottom and right straights are given; the top and left ones are
    sized so the loop closes.
    """
    turns = [_turn(math.pi / 2, r, transition) for r in radii]
    # each corner moves the car (fwd, left) relative to its entry heading
    (a1, b1), (a2, b2), (a3, b3), (a4, b4) = (end_point(t) for t in turns)
    top = bottom + a1 - b2 - a3 + b4
    left = right + b1 + a2 - b3 - a4
    if min(top, left) <= 0:
        raise ValueError("corner radii too large for the straights")
    pieces = []
    for length, turn in zip((bottom, right, top, left), turns):
        pieces += [(length, 0.0, 0.0)] + turn
    return integrate_pieces(pieces, step)


# -- bundled circuit ----------------------------------------------------------------

CIRCUIT_BOUNDS = (-6.0, 6.0)
# first corner with its braking zone and exit; grip there is the bottleneck
CIRCUIT_LOW_GRIP_S = (260.0, 370.0)
CIRCUIT_MAP_DIMS = (130, 6)
CIRCUIT_MAP_WIDTH = 7.0


def bundled(*parts) -> Path:
    """Path of a file shipped in the package data directory."""
    return Path(str(files("gripmap").joinpath("data", *parts)))


def circuit_map(track, other_theta: float = 1.0, corner_theta: float = 0.75):
    """Varying-grip map for the bundled circuit: one slow corner, the rest at ``other_theta``."""
    from .grid import build_gripmap, set_region

    grid = build_gripmap(track, CIRCUIT_MAP_DIMS[0], CIRCUIT_MAP_DIMS[1], CIRCUIT_MAP_WIDTH,
                         init_theta=other_theta)
    return set_region(grid, CIRCUIT_LOW_GRIP_S, (-CIRCUIT_MAP_WIDTH, CIRCUIT_MAP_WIDTH), corner_theta)
