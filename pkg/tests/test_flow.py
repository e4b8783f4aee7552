"""Stokes solver invariants: mass balance, linearity, symmetry, sampling."""

import io

import numpy as np
import pytest

from cytofocus import flow, geometry
from cytofocus.errors import PointOutsideFluid


def test_mass_balance_is_exact(small_field):
    inflow = small_field.inflow_flux()
    outflow = small_field.outflow_flux()
    assert inflow > 0.0
    assert abs(inflow - outflow) <= 1e-9 * inflow


def test_post_junction_flux_is_v1_plus_two_v2(small_field):
    # inlet speeds are normalized so each family carries its prescribed flux
    g = small_field.grid
    geom = g.geom
    expected = (
        small_field.bc.v1_um_per_s * geom.main_width_um
        + 2.0 * small_field.bc.v2_um_per_s * geom.side_width_um
    )
    ix = g.ix_electrode
    assert abs(small_field.column_flux(ix) - expected) <= 1e-9 * expected


def test_divergence_free(small_field):
    scale = small_field.max_speed() / small_field.grid.h
    assert np.abs(small_field.divergence()).max() <= 1e-8 * scale


def test_stokes_linearity(small_grid):
    fluid = flow.FluidProperties()
    f1 = flow.solve_flow(
        small_grid, fluid, flow.FlowBoundaryConditions(500.0, 5_000.0)
    )
    f10 = flow.solve_flow(
        small_grid, fluid, flow.FlowBoundaryConditions(5_000.0, 50_000.0)
    )
    scale = np.abs(f10.u).max()
    assert np.abs(f10.u - 10.0 * f1.u).max() <= 1e-3 * scale
    assert np.abs(f10.v - 10.0 * f1.v).max() <= 1e-3 * scale


def test_mirror_symmetry(small_field):
    # geometry is symmetric about the centerline: u mirrors, v flips sign
    u, v = small_field.u, small_field.v
    scale = small_field.max_speed()
    assert np.abs(u - u[:, ::-1]).max() <= 1e-8 * scale
    assert np.abs(v + v[:, ::-1]).max() <= 1e-8 * scale


def test_sample_velocity_matches_stored_face(small_field):
    g = small_field.grid
    i = g.nx // 2
    j = g.j_main_lo + g.ny_main // 2
    x = g.x0 + i * g.h
    y = g.y0 + (j + 0.5) * g.h
    vel = flow.sample_velocity(small_field, (x, y))
    assert vel[0] == pytest.approx(small_field.u[i, j], rel=1e-12)


def test_sample_velocity_outside_raises(small_field):
    with pytest.raises(PointOutsideFluid):
        flow.sample_velocity(small_field, (100.0, 500.0))


def test_reynolds_number_values():
    fluid = flow.FluidProperties()
    # rho * U * L / mu with micrometer inputs
    assert flow.reynolds(fluid, 50.0, 5_000.0) == pytest.approx(
        1060.0 * 5e-3 * 50e-6 / 3.5e-3, rel=1e-12
    )
    assert flow.reynolds(fluid, 150.0, 100.0) == pytest.approx(
        4.542857142857143e-3, rel=1e-12
    )


def test_reynolds_warns_above_unity():
    fluid = flow.FluidProperties()
    with pytest.warns(UserWarning):
        flow.reynolds(fluid, 500.0, 50_000_000.0)


def test_inlet_scales_are_near_unity(small_field):
    scales = small_field.inlet_scales
    assert set(scales) == {
        geometry.INLET_MAIN,
        geometry.INLET_SIDE_TOP,
        geometry.INLET_SIDE_BOTTOM,
    }
    for value in scales.values():
        assert 0.8 < value < 1.5


def test_poiseuille_profile_coarse(small_geom):
    # fully developed profile: peak-to-mean 1.5 (tolerance loosened for Y/16;
    # the acceptance gate runs the Y/32 oracle)
    grid = geometry.rasterize_straight(small_geom, 3.125)
    field = flow.solve_flow(
        grid, flow.FluidProperties(), flow.FlowBoundaryConditions(500.0, 0.0)
    )
    ix = grid.nx // 2
    u_mid = field.u[ix, :]
    ratio = u_mid.max() / u_mid.mean()
    assert ratio == pytest.approx(1.5, rel=0.02)


def test_field_dump_roundtrip(small_field):
    buf = io.StringIO()
    flow.write_field_csv(buf, small_field)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x_um,y_um,u_um_per_s,v_um_per_s,p_pa"
    assert len(lines) - 1 == small_field.grid.fluid_cell_count()
    # full round-trip float precision
    x, y, u, v, p = (float(s) for s in lines[1].split(","))
    vel = small_field.sample_many(np.array([x]), np.array([y]))
    assert np.isfinite([u, v, p]).all()
    assert vel[0][0] == pytest.approx(u, abs=1e-6 * small_field.max_speed())
