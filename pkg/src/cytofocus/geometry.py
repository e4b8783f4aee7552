"""Sheath-flow channel geometry and its staircase rasterization.

The device is a straight main channel (width Y, length X) joined at x = X1 by
two side channels, one from above and one from below, each inclined at an
angle ``alpha`` to the main axis.  Cells enter through the main inlet at
x = 0; sheath fluid enters through the side channels and pinches the sample
stream toward the centerline.  A sensing electrode pair sits at x = x_e
downstream of the junction.

All lengths are micrometres.  ``rasterize`` produces a uniform cell-centered
mask on a bounding box that pads the main channel vertically by the extent of
the side channels; curved/angled walls become staircases, so the FLUID region
matches the exact outline to within one cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    InputError,
    NonpositiveDimension,
    OrderingViolation,
    ResolutionTooCoarse,
)

# Cell mask codes.  WALL is zero so a freshly zeroed array is "all solid".
WALL = 0
FLUID = 1
INLET_MAIN = 2
INLET_SIDE_TOP = 3
INLET_SIDE_BOTTOM = 4
OUTLET = 5

INLET_CODES = (INLET_MAIN, INLET_SIDE_TOP, INLET_SIDE_BOTTOM)
#: codes a particle or sample point may legitimately sit in
OPEN_CODES = (FLUID, INLET_MAIN, INLET_SIDE_TOP, INLET_SIDE_BOTTOM, OUTLET)

# 4-connectivity for flood fill
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class ChannelGeometry:
    """Parametric description of the focusing channel.  Lengths in um."""

    main_width_um: float        # Y, height of the main channel
    main_length_um: float       # X, inlet-to-outlet length
    junction_position_um: float  # X1, where the side channels meet the main one
    electrode_position_um: float  # x_e, sensing plane
    sheath_angle_deg: float = 30.0
    side_width_um: float = 0.0   # W_s, resolved by build_geometry
    side_length_um: float = 0.0  # distance from junction to the side inlets

    @property
    def focusing_length_um(self) -> float:
        """Junction-to-electrode distance (X2 = x_e - X1)."""
        return self.electrode_position_um - self.junction_position_um

    @property
    def centerline_um(self) -> float:
        return 0.5 * self.main_width_um


def build_geometry(
    main_width_um: float,
    main_length_um: float,
    junction_position_um: float,
    electrode_position_um: float | None = None,
    sheath_angle_deg: float = 30.0,
    side_width_um: float | None = None,
    side_length_um: float | None = None,
) -> ChannelGeometry:
    """Validate parameters and fill defaults.

    Defaults: the electrode plane sits 500 um upstream of the outlet, the side
    channels are as wide as the main channel, and the side inlets sit three
    side-channel widths away from the junction along the channel axis.

    Raises NonpositiveDimension for non-positive sizes, OrderingViolation when
    0 < X1 < x_e < X does not hold, and InputError for a bad sheath angle.
    """
    for name, value in (
        ("main_width_um", main_width_um),
        ("main_length_um", main_length_um),
        ("junction_position_um", junction_position_um),
    ):
        if not (value > 0.0) or not math.isfinite(value):
            raise NonpositiveDimension(f"{name} must be positive, got {value!r}")

    if electrode_position_um is None:
        electrode_position_um = main_length_um - 500.0
    if side_width_um is None:
        side_width_um = main_width_um
    if side_length_um is None:
        side_length_um = 3.0 * side_width_um

    if not (side_width_um > 0.0 and math.isfinite(side_width_um)):
        raise NonpositiveDimension(f"side_width_um must be positive, got {side_width_um!r}")
    if not (side_length_um > 0.0 and math.isfinite(side_length_um)):
        raise NonpositiveDimension(f"side_length_um must be positive, got {side_length_um!r}")
    if not (0.0 < sheath_angle_deg < 90.0):
        raise InputError(
            f"sheath_angle_deg must lie strictly between 0 and 90, got {sheath_angle_deg!r}"
        )
    if not (0.0 < junction_position_um < electrode_position_um < main_length_um):
        raise OrderingViolation(
            "require 0 < junction_position_um < electrode_position_um < main_length_um, "
            f"got X1={junction_position_um}, x_e={electrode_position_um}, X={main_length_um}"
        )

    return ChannelGeometry(
        main_width_um=float(main_width_um),
        main_length_um=float(main_length_um),
        junction_position_um=float(junction_position_um),
        electrode_position_um=float(electrode_position_um),
        sheath_angle_deg=float(sheath_angle_deg),
        side_width_um=float(side_width_um),
        side_length_um=float(side_length_um),
    )


@dataclass
class Grid:
    """Uniform cell-centered rasterization of a ChannelGeometry.

    ``mask[ix, iy]`` holds one of the cell codes above; index 0 of each axis
    is the lower-left corner of the bounding box, whose origin (x0, y0) is
    chosen so the main channel occupies x in [0, nx_fluid*h] and
    y in [0, ny_main*h].  Treat instances as immutable after construction.
    """

    geom: ChannelGeometry
    h: float
    x0: float
    y0: float
    nx: int
    ny: int
    mask: np.ndarray
    ny_main: int          # rows spanned by the main channel
    j_main_lo: int        # first main-channel row index
    ix_electrode: int     # grid column containing the electrode plane
    x_fluid_hi: float     # x coordinate of the outlet plane (rasterized)

    def __post_init__(self):
        assert self.mask.shape == (self.nx, self.ny)
        assert self.nx * self.h >= self.geom.main_length_um
        assert self.ny * self.h >= self.geom.main_width_um

    # --- coordinate helpers -------------------------------------------------

    def x_centers(self) -> np.ndarray:
        return self.x0 + (np.arange(self.nx) + 0.5) * self.h

    def y_centers(self) -> np.ndarray:
        return self.y0 + (np.arange(self.ny) + 0.5) * self.h

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        ix = int(math.floor((x - self.x0) / self.h))
        iy = int(math.floor((y - self.y0) / self.h))
        return ix, iy

    # --- region queries -----------------------------------------------------

    def fluid_mask(self) -> np.ndarray:
        return self.mask == FLUID

    def open_mask(self) -> np.ndarray:
        """Cells a particle may occupy: fluid plus inlet and outlet bands."""
        return self.mask != WALL

    def region_at(self, x: float, y: float) -> int:
        """Mask code at a point; points on cell edges prefer any open cell.

        A point exactly on the staircase boundary between a wall and a fluid
        cell counts as inside the flow region, so sampling on a wall face is
        legal and no-slip values can be returned there.
        """
        fx = (x - self.x0) / self.h
        fy = (y - self.y0) / self.h
        eps = 1e-9 * max(1.0, abs(fx), abs(fy))
        best = WALL
        for cx in {int(math.floor(fx - eps)), int(math.floor(fx + eps))}:
            for cy in {int(math.floor(fy - eps)), int(math.floor(fy + eps))}:
                if 0 <= cx < self.nx and 0 <= cy < self.ny:
                    code = int(self.mask[cx, cy])
                    if code != WALL:
                        return code
                    best = code
        return best

    def inside_open(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized region check: True where the point sits in an open cell,
        with half-edge tolerance like :meth:`region_at`."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        fx = (xs - self.x0) / self.h
        fy = (ys - self.y0) / self.h
        ok = np.zeros(fx.shape, dtype=bool)
        eps = 1e-9
        open_codes = self.open_mask()
        for dx in (-eps, eps):
            for dy in (-eps, eps):
                cx = np.clip(np.floor(fx + dx).astype(int), 0, self.nx - 1)
                cy = np.clip(np.floor(fy + dy).astype(int), 0, self.ny - 1)
                inside = (fx + dx >= 0) & (fx + dx < self.nx) & (fy + dy >= 0) & (fy + dy < self.ny)
                ok |= inside & open_codes[cx, cy]
        return ok

    def fluid_cell_count(self) -> int:
        return int(np.count_nonzero(self.mask == FLUID))


def _side_channel_frames(geom: ChannelGeometry, y_top: float):
    """Axis/normal unit vectors of the top side channel, anchored at the
    junction point (X1, y_top).  t runs from the junction outward along the
    channel axis, s is the signed cross-channel offset."""
    a = math.radians(geom.sheath_angle_deg)
    axis = np.array([-math.cos(a), math.sin(a)])   # away from the junction
    normal = np.array([math.sin(a), math.cos(a)])
    anchor = np.array([geom.junction_position_um, y_top])
    return anchor, axis, normal


def rasterize(geom: ChannelGeometry, h: float) -> Grid:
    """Rasterize the channel outline onto a uniform grid of spacing h (um).

    Requires h <= Y/8 so the main channel is at least eight cells tall
    (ResolutionTooCoarse otherwise, also raised if the staircase pinches any
    region off from the outlet).  The bottom side channel is generated by
    mirroring the top one about the main-channel centerline, which keeps the
    mask exactly mirror-symmetric.
    """
    if not (h > 0.0 and math.isfinite(h)):
        raise ResolutionTooCoarse(f"grid spacing must be positive, got {h!r}")
    if h > geom.main_width_um / 8.0 + 1e-12:
        raise ResolutionTooCoarse(
            f"grid spacing {h} um exceeds main_width_um/8 = {geom.main_width_um / 8.0} um"
        )

    ny_main = int(math.ceil(geom.main_width_um / h - 1e-9))
    nx_fluid = int(math.ceil(geom.main_length_um / h - 1e-9))
    y_top = ny_main * h
    band = 2.0 * h  # thickness of the side-inlet cap

    # vertical extent of the top side channel above the main channel
    anchor, axis, normal = _side_channel_frames(geom, y_top)
    corners = [
        anchor + t * axis + s * normal
        for t in (0.0, geom.side_length_um + band)
        for s in (-0.5 * geom.side_width_um, 0.5 * geom.side_width_um)
    ]
    extent = max(0.0, max(c[1] for c in corners) - y_top)
    margin = int(math.ceil(extent / h)) + 1

    nx = nx_fluid + 2  # one inlet column on the left, one outlet column on the right
    ny = ny_main + 2 * margin
    x0 = -h
    y0 = -margin * h

    xc = x0 + (np.arange(nx) + 0.5) * h
    yc = y0 + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xc, yc, indexing="ij")

    mask = np.full((nx, ny), WALL, dtype=np.int8)

    main = np.zeros((nx, ny), dtype=bool)
    main[1 : nx - 1, margin : margin + ny_main] = True

    # top side channel in (t, s) coordinates
    relx = X - anchor[0]
    rely = Y - anchor[1]
    t = relx * axis[0] + rely * axis[1]
    s = relx * normal[0] + rely * normal[1]
    across = np.abs(s) <= 0.5 * geom.side_width_um
    top_fluid = across & (t >= -geom.side_width_um) & (t < geom.side_length_um)
    top_inlet = across & (t >= geom.side_length_um) & (t < geom.side_length_um + band)
    bottom_fluid = np.flip(top_fluid, axis=1)
    bottom_inlet = np.flip(top_inlet, axis=1)

    mask[main | top_fluid | bottom_fluid] = FLUID
    mask[top_inlet & (mask == WALL)] = INLET_SIDE_TOP
    mask[bottom_inlet & (mask == WALL)] = INLET_SIDE_BOTTOM
    mask[0, margin : margin + ny_main] = INLET_MAIN
    mask[nx - 1, margin : margin + ny_main] = OUTLET

    # the side channels must not run off the box or touch the inlet/outlet columns
    side_any = top_fluid | bottom_fluid | top_inlet | bottom_inlet
    if side_any[0, :].any() or side_any[nx - 1, :].any():
        raise InputError(
            "side channels extend past the main-channel ends; "
            "shorten side_length_um or move junction_position_um"
        )
    if not (mask == INLET_SIDE_TOP).any() or not (mask == INLET_SIDE_BOTTOM).any():
        raise ResolutionTooCoarse(
            f"side-channel inlets vanished at grid spacing {h} um; refine the grid"
        )

    # every open cell must reach the outlet through open cells
    open_cells = mask != WALL
    labels, nlab = ndimage.label(open_cells, structure=_CROSS)
    outlet_label = labels[nx - 1, margin + ny_main // 2]
    if nlab > 1 and (labels[open_cells] != outlet_label).any():
        raise ResolutionTooCoarse(
            f"flow region disconnected at grid spacing {h} um; refine the grid"
        )

    ix_e = int(math.floor((geom.electrode_position_um - x0) / h))
    center_row = margin + ny_main // 2
    if not (1 <= ix_e <= nx - 2) or mask[ix_e, center_row] != FLUID:
        raise OrderingViolation(
            f"electrode plane x_e={geom.electrode_position_um} um does not fall "
            "strictly inside the rasterized fluid region"
        )

    return Grid(
        geom=geom,
        h=float(h),
        x0=x0,
        y0=y0,
        nx=nx,
        ny=ny,
        mask=mask,
        ny_main=ny_main,
        j_main_lo=margin,
        ix_electrode=ix_e,
        x_fluid_hi=nx_fluid * h,
    )


def rasterize_straight(geom: ChannelGeometry, h: float) -> Grid:
    """Rasterize only the main channel (side channels replaced by wall).

    Useful for validating the flow solver against the exact plane-channel
    profile without junction disturbances.
    """
    if not (h > 0.0 and math.isfinite(h)):
        raise ResolutionTooCoarse(f"grid spacing must be positive, got {h!r}")
    if h > geom.main_width_um / 8.0 + 1e-12:
        raise ResolutionTooCoarse(
            f"grid spacing {h} um exceeds main_width_um/8 = {geom.main_width_um / 8.0} um"
        )
    ny_main = int(math.ceil(geom.main_width_um / h - 1e-9))
    nx_fluid = int(math.ceil(geom.main_length_um / h - 1e-9))
    nx = nx_fluid + 2
    ny = ny_main
    mask = np.full((nx, ny), WALL, dtype=np.int8)
    mask[1 : nx - 1, :] = FLUID
    mask[0, :] = INLET_MAIN
    mask[nx - 1, :] = OUTLET
    ix_e = int(math.floor((geom.electrode_position_um + h) / h))
    return Grid(
        geom=geom,
        h=float(h),
        x0=-h,
        y0=0.0,
        nx=nx,
        ny=ny,
        mask=mask,
        ny_main=ny_main,
        j_main_lo=0,
        ix_electrode=ix_e,
        x_fluid_hi=nx_fluid * h,
    )
