"""Steady creeping-flow solver on the rasterized channel.

The channel Reynolds numbers here are well below 0.1, so the momentum balance
is the steady Stokes system
    mu * laplace(u) = grad p,   div u = 0,
discretized with finite differences on a staggered (MAC) grid: pressure at
cell centers, x-velocity u on vertical faces, y-velocity v on horizontal
faces.  The coupled saddle-point system is assembled sparse and solved
directly, so the only residual left is round-off.

Units: lengths um, velocities um/s, viscosity Pa*s.  With those choices the
pressure unknowns come out in Pa (mu * velocity / length has units Pa*s *
(um/s) / um = Pa).

Boundary conditions:
  * inlets: uniform plug velocity prescribed on the staircase inlet faces,
    rescaled so the discrete influx equals the nominal flux exactly
    (V1*Y for the main inlet, V2*W_s for each side inlet);
  * walls: zero normal velocity on solid faces, no-slip enforced on
    tangential components through reflected ghost values;
  * outlet: zero pressure beyond the last fluid cell with zero-gradient
    velocity, so the outflow profile is set by the interior solution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry as geo
from .errors import InputError, PointOutsideFluid, SolverDiverged

# face states used during assembly; unknowns are the two largest values so
# "state >= _INTERIOR" selects exactly the faces that get momentum rows
_DEAD = 0       # no adjacent fluid cell
_FIXED = 1      # prescribed value (wall or inlet face)
_INTERIOR = 2   # both cells fluid: unknown with a momentum equation
_OUTFACE = 3    # fluid|outlet: unknown, zero-gradient + zero outside pressure


@dataclass(frozen=True)
class FluidProperties:
    """Carrier-fluid properties (blood-plasma-like defaults)."""

    density_kg_m3: float = 1060.0
    viscosity_pa_s: float = 3.5e-3

    def __post_init__(self):
        if not (self.density_kg_m3 > 0.0 and math.isfinite(self.density_kg_m3)):
            raise InputError(f"density_kg_m3 must be positive, got {self.density_kg_m3!r}")
        if not (self.viscosity_pa_s > 0.0 and math.isfinite(self.viscosity_pa_s)):
            raise InputError(f"viscosity_pa_s must be positive, got {self.viscosity_pa_s!r}")

    @property
    def kinematic_viscosity_m2_s(self) -> float:
        return self.viscosity_pa_s / self.density_kg_m3


@dataclass(frozen=True)
class FlowBoundaryConditions:
    """Plug speeds at the inlets, um/s."""

    v1_um_per_s: float
    v2_um_per_s: float

    def __post_init__(self):
        if not (self.v1_um_per_s > 0.0 and math.isfinite(self.v1_um_per_s)):
            raise InputError(f"v1_um_per_s must be positive, got {self.v1_um_per_s!r}")
        if not (self.v2_um_per_s >= 0.0 and math.isfinite(self.v2_um_per_s)):
            raise InputError(f"v2_um_per_s must be non-negative, got {self.v2_um_per_s!r}")


def reynolds(fluid: FluidProperties, length_um: float, speed_um_per_s: float) -> float:
    """Channel Reynolds number rho*U*L/mu for a length in um and speed in um/s.

    Emits a warning when the result exceeds 1, where the Stokes model starts
    to lose validity; the solve itself still proceeds.
    """
    re = (
        fluid.density_kg_m3
        * (speed_um_per_s * 1e-6)
        * (length_um * 1e-6)
        / fluid.viscosity_pa_s
    )
    if re > 1.0:
        warnings.warn(
            f"Reynolds number {re:.3g} exceeds 1; creeping-flow results are approximate",
            stacklevel=2,
        )
    return re


@dataclass
class FlowField:
    """Solved velocity/pressure field on a Grid.

    u has shape (nx+1, ny) on vertical faces, v has shape (nx, ny+1) on
    horizontal faces, p has shape (nx, ny) at cell centers (zero outside the
    fluid).  Treat as immutable.
    """

    grid: geo.Grid
    fluid: FluidProperties
    bc: FlowBoundaryConditions
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    inlet_scales: dict = field(default_factory=dict)

    def max_speed(self) -> float:
        return float(max(np.abs(self.u).max(), np.abs(self.v).max()))

    def column_flux(self, ix: int) -> float:
        """Volumetric flux (um^2/s per unit depth) through face column ix."""
        return float(self.u[ix, :].sum() * self.grid.h)

    def inflow_flux(self) -> float:
        g = self.grid
        total = 0.0
        mask = g.mask
        for code in geo.INLET_CODES:
            left = mask == code
            # u faces with this inlet on either side of a fluid cell
            lf = left[: g.nx - 1, :] & (mask[1:, :] == geo.FLUID)
            rf = left[1:, :] & (mask[: g.nx - 1, :] == geo.FLUID)
            total += self.u[1 : g.nx, :][lf].sum() * g.h
            total -= self.u[1 : g.nx, :][rf].sum() * g.h
            dn = left[:, : g.ny - 1] & (mask[:, 1:] == geo.FLUID)
            up = left[:, 1:] & (mask[:, : g.ny - 1] == geo.FLUID)
            total += self.v[:, 1 : g.ny][dn].sum() * g.h
            total -= self.v[:, 1 : g.ny][up].sum() * g.h
        return float(total)

    def outflow_flux(self) -> float:
        g = self.grid
        out_rows = g.mask[g.nx - 1, :] == geo.OUTLET
        return float(self.u[g.nx - 1, out_rows].sum() * g.h)

    def divergence(self) -> np.ndarray:
        """Discrete divergence (1/s) at every fluid cell, zero elsewhere."""
        g = self.grid
        div = np.zeros((g.nx, g.ny))
        f = g.fluid_mask()
        div[f] = (
            self.u[1:, :][f] - self.u[:-1, :][f] + self.v[:, 1:][f] - self.v[:, :-1][f]
        ) / g.h
        return div

    def sample_many(self, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Clamped bilinear interpolation of (u, v) at arbitrary points.

        No fluid-region check: callers near staircase boundaries get the
        nearest stored face values, which are zero on solid faces.
        """
        g = self.grid
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)

        fi = (xs - g.x0) / g.h
        fj = (ys - g.y0) / g.h - 0.5
        i0 = np.clip(np.floor(fi).astype(int), 0, g.nx - 1)
        j0 = np.clip(np.floor(fj).astype(int), 0, g.ny - 2)
        tx = np.clip(fi - i0, 0.0, 1.0)
        ty = np.clip(fj - j0, 0.0, 1.0)
        uval = (
            self.u[i0, j0] * (1 - tx) * (1 - ty)
            + self.u[i0 + 1, j0] * tx * (1 - ty)
            + self.u[i0, j0 + 1] * (1 - tx) * ty
            + self.u[i0 + 1, j0 + 1] * tx * ty
        )

        fi = (xs - g.x0) / g.h - 0.5
        fj = (ys - g.y0) / g.h
        i0 = np.clip(np.floor(fi).astype(int), 0, g.nx - 2)
        j0 = np.clip(np.floor(fj).astype(int), 0, g.ny - 1)
        tx = np.clip(fi - i0, 0.0, 1.0)
        ty = np.clip(fj - j0, 0.0, 1.0)
        vval = (
            self.v[i0, j0] * (1 - tx) * (1 - ty)
            + self.v[i0 + 1, j0] * tx * (1 - ty)
            + self.v[i0, j0 + 1] * (1 - tx) * ty
            + self.v[i0 + 1, j0 + 1] * tx * ty
        )
        return uval, vval

    def shear_rate(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """du/dx-velocity / dy (1/s) by central difference of the sampled u."""
        d = 0.5 * self.grid.h
        u_hi, _ = self.sample_many(xs, np.asarray(ys) + d)
        u_lo, _ = self.sample_many(xs, np.asarray(ys) - d)
        return (u_hi - u_lo) / (2.0 * d)


def sample_velocity(field: FlowField, point) -> np.ndarray:
    """Velocity (um/s) at a point inside the flow region.

    Raises PointOutsideFluid when the point does not sit in a fluid, inlet,
    or outlet cell (points exactly on a wall face count as inside and return
    the no-slip value stored on that face).
    """
    x, y = float(point[0]), float(point[1])
    if field.grid.region_at(x, y) == geo.WALL:
        raise PointOutsideFluid(f"point ({x}, {y}) um is not inside the flow region")
    u, v = field.sample_many(np.array([x]), np.array([y]))
    return np.array([u[0], v[0]])


def write_field_csv(fh, field: FlowField) -> None:
    """Dump cell-centered velocity and pressure, one row per fluid cell.

    Rows follow the row-major order of the cell grid (x index outer, y index
    inner); face velocities are averaged to the cell center.
    """
    g = field.grid
    uc = 0.5 * (field.u[:-1, :] + field.u[1:, :])
    vc = 0.5 * (field.v[:, :-1] + field.v[:, 1:])
    fh.write("x_um,y_um,u_um_per_s,v_um_per_s,p_pa\n")
    for i, j in np.argwhere(g.fluid_mask()):
        fh.write(
            f"{float(g.x0 + (i + 0.5) * g.h)!r},{float(g.y0 + (j + 0.5) * g.h)!r},"
            f"{float(uc[i, j])!r},{float(vc[i, j])!r},{float(field.p[i, j])!r}\n"
        )


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


def _face_states(grid: geo.Grid, bc: FlowBoundaryConditions):
    """Classify every staggered face and prescribe inlet/wall values.

    Returns (ustate, ufix, vstate, vfix, scales) where the fix arrays hold
    prescribed face velocities already rescaled for exact nominal influx.
    """
    nx, ny = grid.nx, grid.ny
    mask = grid.mask
    Mp = np.full((nx + 2, ny + 2), geo.WALL, dtype=np.int8)
    Mp[1 : nx + 1, 1 : ny + 1] = mask

    a = math.radians(grid.geom.sheath_angle_deg)
    inlet_ux = {
        geo.INLET_MAIN: bc.v1_um_per_s,
        geo.INLET_SIDE_TOP: bc.v2_um_per_s * math.cos(a),
        geo.INLET_SIDE_BOTTOM: bc.v2_um_per_s * math.cos(a),
    }
    inlet_vy = {
        geo.INLET_MAIN: 0.0,
        geo.INLET_SIDE_TOP: -bc.v2_um_per_s * math.sin(a),
        geo.INLET_SIDE_BOTTOM: bc.v2_um_per_s * math.sin(a),
    }

    # u faces: (nx+1, ny); face i sits between cells (i-1, iy) and (i, iy)
    uL = Mp[0 : nx + 1, 1 : ny + 1]
    uR = Mp[1 : nx + 2, 1 : ny + 1]
    ustate = np.full((nx + 1, ny), _DEAD, dtype=np.int8)
    ufix = np.zeros((nx + 1, ny))
    ustate[(uL == geo.FLUID) & (uR == geo.FLUID)] = _INTERIOR
    ustate[
        ((uL == geo.FLUID) & (uR == geo.OUTLET)) | ((uL == geo.OUTLET) & (uR == geo.FLUID))
    ] = _OUTFACE
    ustate[
        ((uL == geo.FLUID) & (uR == geo.WALL)) | ((uL == geo.WALL) & (uR == geo.FLUID))
    ] = _FIXED
    for code, val in inlet_ux.items():
        sel_l = (uL == code) & (uR == geo.FLUID)
        sel_r = (uR == code) & (uL == geo.FLUID)
        ustate[sel_l | sel_r] = _FIXED
        ufix[sel_l | sel_r] = val

    # v faces: (nx, ny+1); face j sits between cells (ix, j-1) and (ix, j)
    vD = Mp[1 : nx + 1, 0 : ny + 1]
    vU = Mp[1 : nx + 1, 1 : ny + 2]
    vstate = np.full((nx, ny + 1), _DEAD, dtype=np.int8)
    vfix = np.zeros((nx, ny + 1))
    vstate[(vD == geo.FLUID) & (vU == geo.FLUID)] = _INTERIOR
    vstate[
        ((vD == geo.FLUID) & (vU == geo.OUTLET)) | ((vD == geo.OUTLET) & (vU == geo.FLUID))
    ] = _OUTFACE
    vstate[
        ((vD == geo.FLUID) & (vU == geo.WALL)) | ((vD == geo.WALL) & (vU == geo.FLUID))
    ] = _FIXED
    for code, val in inlet_vy.items():
        sel_d = (vD == code) & (vU == geo.FLUID)
        sel_u = (vU == code) & (vD == geo.FLUID)
        vstate[sel_d | sel_u] = _FIXED
        vfix[sel_d | sel_u] = val

    # rescale each inlet family so the discrete influx matches the nominal
    # flux exactly; the staircase area of an angled inlet is O(h) off otherwise
    geom = grid.geom
    targets = {
        geo.INLET_MAIN: bc.v1_um_per_s * geom.main_width_um,
        geo.INLET_SIDE_TOP: bc.v2_um_per_s * geom.side_width_um,
        geo.INLET_SIDE_BOTTOM: bc.v2_um_per_s * geom.side_width_um,
    }
    scales = {}
    for code, target in targets.items():
        u_l = (uL == code) & (uR == geo.FLUID)
        u_r = (uR == code) & (uL == geo.FLUID)
        v_d = (vD == code) & (vU == geo.FLUID)
        v_u = (vU == code) & (vD == geo.FLUID)
        raw = (
            ufix[u_l].sum() - ufix[u_r].sum() + vfix[v_d].sum() - vfix[v_u].sum()
        ) * grid.h
        if raw != 0.0:
            s = target / raw
            fam_u = u_l | u_r
            fam_v = v_d | v_u
            ufix[fam_u] *= s
            vfix[fam_v] *= s
            scales[code] = s
        else:
            scales[code] = 1.0
    return ustate, ufix, vstate, vfix, Mp, scales


def solve_flow(
    grid: geo.Grid,
    fluid: FluidProperties,
    bc: FlowBoundaryConditions,
    tolerance: float = 1e-8,
    max_iterations: int = 100_000,
) -> FlowField:
    """Solve the steady Stokes system on the grid.

    The sparse saddle-point system is solved with a direct factorization;
    ``tolerance`` bounds the accepted relative residual of that solve and
    ``max_iterations`` is kept for interface compatibility with iterative
    backends.  Raises SolverDiverged when the solve produces NaNs or misses
    the residual bound.
    """
    nx, ny = grid.nx, grid.ny
    h = grid.h
    mu = fluid.viscosity_pa_s
    ustate, ufix, vstate, vfix, Mp, scales = _face_states(grid, bc)

    iu = np.full(ustate.shape, -1, dtype=np.int64)
    unknown_u = ustate >= _INTERIOR
    n_u = int(np.count_nonzero(unknown_u))
    iu[unknown_u] = np.arange(n_u)

    iv = np.full(vstate.shape, -1, dtype=np.int64)
    unknown_v = vstate >= _INTERIOR
    n_v = int(np.count_nonzero(unknown_v))
    iv[unknown_v] = n_u + np.arange(n_v)

    fluid_cells = grid.fluid_mask()
    ip = np.full((nx, ny), -1, dtype=np.int64)
    n_p = int(np.count_nonzero(fluid_cells))
    ip[fluid_cells] = n_u + n_v + np.arange(n_p)

    n = n_u + n_v + n_p
    b = np.zeros(n)
    rows_l: list[np.ndarray] = []
    cols_l: list[np.ndarray] = []
    vals_l: list[np.ndarray] = []

    def put(r, c, v):
        rows_l.append(np.asarray(r, dtype=np.int64))
        cols_l.append(np.asarray(c, dtype=np.int64))
        vals_l.append(np.broadcast_to(np.asarray(v, dtype=float), np.shape(r)).copy())

    inlet_any = np.isin(Mp, geo.INLET_CODES)

    def momentum(state, fix, idx, other_fix, I, J, comp):
        """Momentum rows for one velocity component, scaled by h^2/mu.

        comp is "u" or "v"; (I, J) index the unknown faces of that component.
        """
        rows = idx[I, J]
        diag = np.full(I.shape, -4.0)

        if comp == "u":
            directions = (
                # (dface_i, dface_j, pair cell Mp indices for the dead case)
                (1, 0, lambda: (Mp[I + 1, J + 1], Mp[I + 2, J + 1])),
                (-1, 0, lambda: (Mp[I - 1, J + 1], Mp[I, J + 1])),
                (0, 1, lambda: (Mp[I, J + 2], Mp[I + 1, J + 2])),
                (0, -1, lambda: (Mp[I, J], Mp[I + 1, J])),
            )
        else:
            directions = (
                (1, 0, lambda: (Mp[I + 2, J], Mp[I + 2, J + 1])),
                (-1, 0, lambda: (Mp[I, J], Mp[I, J + 1])),
                (0, 1, lambda: (Mp[I + 1, J + 1], Mp[I + 1, J + 2])),
                (0, -1, lambda: (Mp[I + 1, J - 1], Mp[I + 1, J])),
            )

        for di, dj, pair in directions:
            NI, NJ = I + di, J + dj
            inb = (NI >= 0) & (NI < state.shape[0]) & (NJ >= 0) & (NJ < state.shape[1])
            nstate = np.full(I.shape, _DEAD, dtype=np.int8)
            nstate[inb] = state[NI[inb], NJ[inb]]

            sel = inb & (nstate >= _INTERIOR)
            if sel.any():
                put(rows[sel], idx[NI[sel], NJ[sel]], 1.0)
            sel = inb & (nstate == _FIXED)
            if sel.any():
                np.subtract.at(b, rows[sel], fix[NI[sel], NJ[sel]])

            dead = ~inb | (nstate == _DEAD)
            if dead.any():
                c1, c2 = pair()
                c1 = c1[dead]
                c2 = c2[dead]
                drows = rows[dead]
                has_out = (c1 == geo.OUTLET) | (c2 == geo.OUTLET)
                has_wall = (c1 == geo.WALL) | (c2 == geo.WALL)
                # zero-gradient extension past the outlet
                if has_out.any():
                    np.add.at(diag, np.nonzero(dead)[0][has_out], 1.0)
                # no-slip wall: reflected ghost
                wall_sel = ~has_out & has_wall
                if wall_sel.any():
                    np.add.at(diag, np.nonzero(dead)[0][wall_sel], -1.0)
                # inlet band: moving-boundary ghost with the plug's tangential value
                in_sel = ~has_out & ~has_wall
                if in_sel.any():
                    code = np.where(np.isin(c1, geo.INLET_CODES), c1, c2)[in_sel]
                    bump = np.array([other_fix[int(cc)] for cc in code])
                    np.add.at(diag, np.nonzero(dead)[0][in_sel], -1.0)
                    np.subtract.at(b, drows[in_sel], 2.0 * bump)

        put(rows, rows, diag)

        # pressure gradient, -(h/mu) * (p_plus - p_minus)
        if comp == "u":
            cm = (I - 1, J)
            cp = (I, J)
        else:
            cm = (I, J - 1)
            cp = (I, J)
        for (ci, cj), sign in ((cp, -1.0), (cm, 1.0)):
            is_fluid = fluid_cells[ci, cj]
            if is_fluid.any():
                put(rows[is_fluid], ip[ci[is_fluid], cj[is_fluid]], sign * h / mu)
            # non-fluid cell here can only be the outlet (pressure pinned to 0)

    Iu, Ju = np.nonzero(unknown_u)
    # prescribed tangential values for inlet-band ghosts, keyed by inlet code
    a = math.radians(grid.geom.sheath_angle_deg)
    ux_ghost = {code: 0.0 for code in range(6)}
    vy_ghost = {code: 0.0 for code in range(6)}
    ux_ghost[geo.INLET_MAIN] = bc.v1_um_per_s * scales[geo.INLET_MAIN]
    ux_ghost[geo.INLET_SIDE_TOP] = bc.v2_um_per_s * math.cos(a) * scales[geo.INLET_SIDE_TOP]
    ux_ghost[geo.INLET_SIDE_BOTTOM] = (
        bc.v2_um_per_s * math.cos(a) * scales[geo.INLET_SIDE_BOTTOM]
    )
    vy_ghost[geo.INLET_SIDE_TOP] = -bc.v2_um_per_s * math.sin(a) * scales[geo.INLET_SIDE_TOP]
    vy_ghost[geo.INLET_SIDE_BOTTOM] = (
        bc.v2_um_per_s * math.sin(a) * scales[geo.INLET_SIDE_BOTTOM]
    )

    momentum(ustate, ufix, iu, ux_ghost, Iu, Ju, "u")
    Iv, Jv = np.nonzero(unknown_v)
    momentum(vstate, vfix, iv, vy_ghost, Iv, Jv, "v")

    # continuity at every fluid cell: u_E - u_W + v_N - v_S = 0
    Ic, Jc = np.nonzero(fluid_cells)
    prow = ip[Ic, Jc]
    for state, fix, idx, FI, FJ, sign in (
        (ustate, ufix, iu, Ic + 1, Jc, 1.0),
        (ustate, ufix, iu, Ic, Jc, -1.0),
        (vstate, vfix, iv, Ic, Jc + 1, 1.0),
        (vstate, vfix, iv, Ic, Jc, -1.0),
    ):
        st = state[FI, FJ]
        sel = st >= _INTERIOR
        if sel.any():
            put(prow[sel], idx[FI[sel], FJ[sel]], sign)
        sel = st == _FIXED
        if sel.any():
            np.subtract.at(b, prow[sel], sign * fix[FI[sel], FJ[sel]])

    A = sp.coo_matrix(
        (np.concatenate(vals_l), (np.concatenate(rows_l), np.concatenate(cols_l))),
        shape=(n, n),
    ).tocsr()

    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(A, b)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SolverDiverged(f"sparse factorization failed: {exc}") from exc

    if not np.all(np.isfinite(x)):
        raise SolverDiverged("flow solve produced non-finite values")
    resid = A @ x - b
    scale = max(float(np.abs(b).max()), 1e-30)
    rel = float(np.abs(resid).max()) / scale
    if rel > max(tolerance, 1e-12) * 10.0:
        raise SolverDiverged(
            f"flow solve residual {rel:.3e} exceeds tolerance {tolerance:.3e}"
        )

    u = ufix.copy()
    u[unknown_u] = x[iu[unknown_u]]
    v = vfix.copy()
    v[unknown_v] = x[iv[unknown_v]]
    p = np.zeros((nx, ny))
    p[fluid_cells] = x[ip[fluid_cells]]

    return FlowField(grid=grid, fluid=fluid, bc=bc, u=u, v=v, p=p, inlet_scales=scales)
