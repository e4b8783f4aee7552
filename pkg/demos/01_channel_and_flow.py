"""Build the focusing channel and solve the sheath/sample flow.

A sample stream enters the main channel from the left; two sheath streams
join it at an angled junction and squeeze it toward the centerline.  This
script solves the steady flow for the reference design, prints the numbers
worth knowing, and (when matplotlib is installed) saves a speed map.

Run:  python3 demos/01_channel_and_flow.py
"""

import os
import time

import numpy as np

from cytofocus import flow, geometry

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")


def main():
    geom = geometry.build_geometry(
        main_width_um=50.0,
        main_length_um=10_000.0,
        junction_position_um=5_000.0,
        sheath_angle_deg=30.0,
    )
    print(f"channel: {geom.main_length_um:g} x {geom.main_width_um:g} um, "
          f"junction at x={geom.junction_position_um:g} um, "
          f"electrodes at x={geom.electrode_position_um:g} um")
    print(f"focusing length (junction to electrodes): {geom.focusing_length_um:g} um")

    grid = geometry.rasterize(geom, geom.main_width_um / 16.0)
    print(f"grid: {grid.nx} x {grid.ny} cells at h={grid.h:g} um "
          f"({grid.fluid_cell_count()} in the fluid)")

    fluid = flow.FluidProperties()
    bc = flow.FlowBoundaryConditions(v1_um_per_s=500.0, v2_um_per_s=5_000.0)
    start = time.perf_counter()
    field = flow.solve_flow(grid, fluid, bc)
    print(f"steady flow solved in {time.perf_counter() - start:.2f} s")

    re = flow.reynolds(fluid, geom.main_width_um, field.max_speed())
    print(f"max speed {field.max_speed():.0f} um/s, Reynolds number {re:.2e}")
    print(f"mass balance: inflow {field.inflow_flux():.1f}, "
          f"outflow {field.outflow_flux():.1f} um^2/s")
    flux = field.column_flux(grid.ix_electrode)
    expected = bc.v1_um_per_s * geom.main_width_um + 2 * bc.v2_um_per_s * geom.side_width_um
    print(f"flux past the electrodes {flux:.1f} um^2/s (prescribed {expected:.1f})")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the figure")
        return

    uc = 0.5 * (field.u[:-1, :] + field.u[1:, :])
    vc = 0.5 * (field.v[:, :-1] + field.v[:, 1:])
    speed = np.hypot(uc, vc)
    speed[~grid.fluid_mask()] = np.nan

    os.makedirs(OUT, exist_ok=True)
    fig, ax = plt.subplots(figsize=(11, 3))
    extent = (grid.x0, grid.x0 + grid.nx * grid.h, grid.y0, grid.y0 + grid.ny * grid.h)
    im = ax.imshow(speed.T, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="speed (um/s)")
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    ax.set_title("sheath-focusing channel, flow speed")
    path = os.path.join(OUT, "01_flow_speed.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    print(f"figure saved to {path}")


if __name__ == "__main__":
    main()
