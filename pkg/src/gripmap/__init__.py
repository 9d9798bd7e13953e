"""Spatially resolved grip constraints for racing trajectory planning."""

__version__ = "0.1.0"

from .errors import GripMapError, InfeasibleError, ValidationError  # noqa: E402
from .gggv import GggvModel  # noqa: E402
from .grid import (  # noqa: E402
    GripMapGrid,
    build_gripmap,
    index_of,
    load_gripmap,
    lookup_theta,
    save_gripmap,
    set_region,
    set_theta,
    suggest_theta_updates,
)
from .track import TrackGeometry, cartesian_to_frenet, frenet_to_cartesian, load_track  # noqa: E402
