"""Shared fixtures: one small junction solve reused across test modules."""

import pytest

from cytofocus import flow, geometry


@pytest.fixture(scope="session")
def small_geom():
    """A short focusing channel sized for fast solves."""
    return geometry.build_geometry(
        main_width_um=50.0, main_length_um=2_000.0, junction_position_um=800.0
    )


@pytest.fixture(scope="session")
def small_grid(small_geom):
    return geometry.rasterize(small_geom, 6.25)


@pytest.fixture(scope="session")
def small_field(small_grid):
    bc = flow.FlowBoundaryConditions(v1_um_per_s=500.0, v2_um_per_s=5_000.0)
    return flow.solve_flow(small_grid, flow.FluidProperties(), bc)
