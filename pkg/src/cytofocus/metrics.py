"""Focusing-quality objectives computed from traced trajectories.

Three scalar objectives summarize how well a design lines cells up for
sensing:

* ``dy_max_um`` -- worst distance from the channel symmetry axis among
  cells as they pass the sensing plane (smaller = tighter focusing).
* ``dx_min_um`` -- smallest axial gap between a crossing cell and any other
  cell present in the channel at that instant (larger = better single-file
  separation).  Undefined (None) when fewer than two cells cross.
* ``t_s`` -- median transit time from release to the sensing plane.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NoCrossings
from .geometry import ChannelGeometry
from .tracer import Trajectory

__all__ = [
    "FocusingMetrics",
    "compute_dy_max",
    "compute_dx_min",
    "compute_T",
    "compute_metrics",
    "write_metrics_csv",
]


@dataclass(frozen=True)
class FocusingMetrics:
    """The three focusing objectives; ``dx_min_um`` may be None."""

    dy_max_um: float
    dx_min_um: float | None
    t_s: float

    def __post_init__(self):
        if self.dy_max_um < 0.0:
            raise InputError(f"dy_max_um must be >= 0, got {self.dy_max_um!r}")
        if self.dx_min_um is not None and not (self.dx_min_um > 0.0):
            raise InputError(f"dx_min_um must be positive when present, got {self.dx_min_um!r}")
        if not (self.t_s > 0.0):
            raise InputError(f"t_s must be positive, got {self.t_s!r}")


def _crossers(trajectories: list[Trajectory]) -> list[Trajectory]:
    return [tr for tr in trajectories if tr.crossed]


def compute_dy_max(trajectories: list[Trajectory], geom: ChannelGeometry) -> float:
    """Largest |y - Y/2| among particles at their sensing-plane crossing."""
    crossers = _crossers(trajectories)
    if not crossers:
        raise NoCrossings("no particle reached the sensing plane")
    centre = geom.centerline_um
    return float(max(abs(tr.y_at_cross_um - centre) for tr in crossers))


def compute_dx_min(trajectories: list[Trajectory]) -> float | None:
    """Smallest axial gap to any other in-channel particle at a crossing.

    For each crossing particle, every other particle's axial position is
    interpolated at the crossing instant; particles not yet released or
    already out of the channel at that instant do not count.  Returns None
    when fewer than two particles cross.
    """
    crossers = _crossers(trajectories)
    if len(crossers) < 2:
        return None
    gaps = []
    for tr in crossers:
        t_c = tr.t_cross_s
        x_c = float(np.interp(t_c, tr.t_s, tr.x_um))
        for other in trajectories:
            if other is tr:
                continue
            pos = other.position_at(t_c)
            if pos is None:
                continue
            gaps.append(abs(pos[0] - x_c))
    if not gaps:
        return None
    return float(min(gaps))


def compute_T(trajectories: list[Trajectory]) -> float:
    """Median transit time, release to sensing plane, over crossing particles."""
    crossers = _crossers(trajectories)
    if not crossers:
        raise NoCrossings("no particle reached the sensing plane")
    transits = [tr.t_cross_s - tr.particle.release_time_s for tr in crossers]
    return float(np.median(transits))


def compute_metrics(trajectories: list[Trajectory], geom: ChannelGeometry) -> FocusingMetrics:
    """All three objectives in one pass."""
    return FocusingMetrics(
        dy_max_um=compute_dy_max(trajectories, geom),
        dx_min_um=compute_dx_min(trajectories),
        t_s=compute_T(trajectories),
    )


def write_metrics_csv(fh, rows: list[tuple[str, FocusingMetrics]]) -> None:
    """Write rows of (run_id, metrics); absent dx_min becomes an empty cell."""
    fh.write("run_id,dy_max_um,dx_min_um,T_s\n")
    for run_id, m in rows:
        dx = "" if m.dx_min_um is None else repr(m.dx_min_um)
        fh.write(f"{run_id},{m.dy_max_um!r},{dx},{m.t_s!r}\n")
