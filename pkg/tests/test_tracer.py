"""Cell populations, forces, and trajectory integration."""

import io
import math

import numpy as np
import pytest

from cytofocus import flow, tracer
from cytofocus.errors import (
    EmptySpeciesList,
    InputError,
    ReleaseOutsideFluid,
    StepUnstable,
)


class UniformField:
    """Flow stub: constant horizontal velocity, no shear, no walls."""

    def __init__(self, u_um_per_s):
        self.u0 = u_um_per_s

    def sample_many(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        return np.full_like(xs, self.u0), np.zeros_like(xs)

    def shear_rate(self, xs, ys):
        return np.zeros_like(np.asarray(xs, dtype=float))


# ---------------------------------------------------------------------------
# forces
# ---------------------------------------------------------------------------


def test_drag_oracle():
    # 3 pi mu d u with d = 10 um and slip = 100 um/s
    force = tracer.drag_force(10.0, 100.0, 3.5e-3)
    assert force == pytest.approx(3.298672286269283e-11, rel=1e-12)


def test_drag_scales_linearly_and_vectorizes():
    f1 = tracer.drag_force(10.0, np.array([50.0, 100.0]), 3.5e-3)
    assert f1.shape == (2,)
    assert f1[1] == pytest.approx(2.0 * f1[0], rel=1e-12)
    assert tracer.drag_force(10.0, -100.0, 3.5e-3) == pytest.approx(
        -tracer.drag_force(10.0, 100.0, 3.5e-3), rel=1e-12
    )


def test_saffman_lift_zero_cases():
    fluid = flow.FluidProperties()
    assert tracer.saffman_lift(10.0, 100.0, 0.0, fluid) == 0.0
    assert tracer.saffman_lift(10.0, 0.0, 50.0, fluid) == 0.0


def test_saffman_lift_signs():
    # lagging particle (positive slip) in positive shear is pushed toward
    # faster fluid (positive y); each sign flip flips the force
    fluid = flow.FluidProperties()
    up = tracer.saffman_lift(10.0, 100.0, 50.0, fluid)
    assert up > 0.0
    assert tracer.saffman_lift(10.0, -100.0, 50.0, fluid) == pytest.approx(-up)
    assert tracer.saffman_lift(10.0, 100.0, -50.0, fluid) == pytest.approx(-up)
    assert tracer.saffman_lift(10.0, -100.0, -50.0, fluid) == pytest.approx(up)


def test_saffman_lift_magnitude():
    # 1.615 mu d^2 u sqrt(gamma / nu) in SI
    fluid = flow.FluidProperties()
    d, slip, shear = 10.0, 100.0, 50.0
    expected = (
        1.615
        * fluid.viscosity_pa_s
        * (d * 1e-6) ** 2
        * (slip * 1e-6)
        * math.sqrt(shear / fluid.kinematic_viscosity_m2_s)
    )
    assert tracer.saffman_lift(d, slip, shear, fluid) == pytest.approx(
        expected, rel=1e-12
    )


def test_relaxation_time_oracle():
    # rho d^2 / (18 mu)
    tau = tracer.relaxation_time(10.0, 1050.0, 3.5e-3)
    assert tau == pytest.approx(1050.0 * 1e-10 / (18.0 * 3.5e-3), rel=1e-12)


def test_particle_mass():
    sp = tracer.LYMPHOCYTE
    p = tracer.Particle(
        species=sp, index=0, diameter_um=10.0, density_kg_m3=1050.0,
        x_um=0.0, y_um=25.0, u_um_per_s=0.0, v_um_per_s=0.0,
    )
    assert p.mass_kg == pytest.approx(1050.0 * math.pi / 6.0 * 1e-15, rel=1e-12)


# ---------------------------------------------------------------------------
# population sampling
# ---------------------------------------------------------------------------


def test_species_counts_follow_fractions_exactly():
    particles = tracer.sample_population(tracer.WBC_SPECIES, 100, seed=1, width_um=50.0)
    counts = {}
    for p in particles:
        counts[p.species.name] = counts.get(p.species.name, 0) + 1
    assert counts == {"lymphocyte": 33, "monocyte": 5, "neutrophil": 62}


def test_diameters_truncated_at_three_sigma():
    particles = tracer.sample_population(
        (tracer.LYMPHOCYTE,), 500, seed=2, width_um=50.0
    )
    d = np.array([p.diameter_um for p in particles])
    lo = tracer.LYMPHOCYTE.diameter_mean_um - 3.0 * tracer.LYMPHOCYTE.diameter_sd_um
    hi = tracer.LYMPHOCYTE.diameter_mean_um + 3.0 * tracer.LYMPHOCYTE.diameter_sd_um
    assert d.min() >= lo and d.max() <= hi
    assert abs(d.mean() - tracer.LYMPHOCYTE.diameter_mean_um) < 0.15


def test_densities_within_species_range():
    particles = tracer.sample_population(
        (tracer.NEUTROPHIL,), 200, seed=3, width_um=50.0
    )
    rho = np.array([p.density_kg_m3 for p in particles])
    assert rho.min() >= tracer.NEUTROPHIL.density_lo_g_ml * 1000.0
    assert rho.max() <= tracer.NEUTROPHIL.density_hi_g_ml * 1000.0


def test_release_positions_keep_wall_standoff():
    particles = tracer.sample_population(tracer.WBC_SPECIES, 200, seed=4, width_um=50.0)
    for p in particles:
        assert p.diameter_um / 2.0 <= p.y_um <= 50.0 - p.diameter_um / 2.0


def test_same_seed_reproduces_population():
    a = tracer.sample_population(tracer.WBC_SPECIES, 50, seed=9, width_um=50.0)
    b = tracer.sample_population(tracer.WBC_SPECIES, 50, seed=9, width_um=50.0)
    assert [(p.species.name, p.diameter_um, p.y_um) for p in a] == [
        (p.species.name, p.diameter_um, p.y_um) for p in b
    ]
    c = tracer.sample_population(tracer.WBC_SPECIES, 50, seed=10, width_um=50.0)
    assert [p.y_um for p in a] != [p.y_um for p in c]


def test_batch_releases_at_time_zero():
    particles = tracer.sample_population(tracer.WBC_SPECIES, 20, seed=5, width_um=50.0)
    assert all(p.release_time_s == 0.0 for p in particles)


def test_poisson_release_times_increase():
    particles = tracer.sample_population(
        tracer.WBC_SPECIES, 50, seed=6, width_um=50.0,
        release_mode="poisson", mean_interval_s=0.2,
    )
    times = [p.release_time_s for p in particles]
    assert all(b > a for a, b in zip(times, times[1:]))
    assert times[0] > 0.0


def test_ladder_heights_are_deterministic_and_even():
    particles = tracer.sample_population(
        tracer.WBC_SPECIES, 6, seed=7, width_um=50.0, release_mode="ladder"
    )
    ys = [p.y_um for p in particles]
    lo = max(p.diameter_um for p in particles) / 2.0
    hi = 25.0 - 50.0 / 12.0
    assert ys[0] == pytest.approx(lo)
    assert ys[-1] == pytest.approx(hi)
    gaps = np.diff(ys)
    assert np.allclose(gaps, gaps[0])
    assert all(p.release_time_s == 0.0 for p in particles)


@pytest.mark.parametrize(
    "kwargs,err",
    [
        (dict(n=0), InputError),
        (dict(n=-3), InputError),
        (dict(width_um=0.0), InputError),
        (dict(release_mode="burst"), InputError),
        (dict(release_mode="poisson", mean_interval_s=0.0), InputError),
    ],
)
def test_sampling_rejects_bad_arguments(kwargs, err):
    args = dict(n=10, seed=0, width_um=50.0)
    args.update(kwargs)
    with pytest.raises(err):
        tracer.sample_population(tracer.WBC_SPECIES, **args)


def test_empty_species_list_rejected():
    with pytest.raises(EmptySpeciesList):
        tracer.sample_population((), 10, seed=0, width_um=50.0)


def test_species_validation():
    with pytest.raises(InputError):
        tracer.CellSpecies(
            name="bad", density_lo_g_ml=1.09, density_hi_g_ml=1.05,
            diameter_mean_um=10.0, diameter_sd_um=0.5, fraction=0.5,
            conductivity_s_per_m=0.6, permittivity_rel=60.0,
        )
    with pytest.raises(InputError):
        tracer.CellSpecies(
            name="bad", density_lo_g_ml=1.05, density_hi_g_ml=1.09,
            diameter_mean_um=-1.0, diameter_sd_um=0.5, fraction=0.5,
            conductivity_s_per_m=0.6, permittivity_rel=60.0,
        )


# ---------------------------------------------------------------------------
# streamline advection
# ---------------------------------------------------------------------------


def test_advection_reaches_outlet_inside_walls(small_field):
    particles = tracer.sample_population(
        tracer.WBC_SPECIES, 6, seed=0, width_um=50.0, release_mode="ladder"
    )
    trajectories = tracer.advect_population(particles, small_field, t_max_s=60.0)
    assert len(trajectories) == 6
    for tr in trajectories:
        assert tr.termination == "outlet"
        assert tr.crossed
        d2 = tr.particle.diameter_um / 2.0
        assert np.all(tr.y_um >= d2 - 1e-9)
        assert np.all(tr.y_um <= 50.0 - d2 + 1e-9)
        assert np.all(np.diff(tr.x_um) > 0.0)


def test_crossing_is_interpolated(small_field):
    x_e = small_field.grid.geom.electrode_position_um
    particles = tracer.sample_population(
        tracer.WBC_SPECIES, 4, seed=1, width_um=50.0, release_mode="ladder"
    )
    trajectories = tracer.advect_population(particles, small_field, t_max_s=60.0)
    for tr in trajectories:
        pos = tr.position_at(tr.t_cross_s)
        assert pos is not None
        assert pos[0] == pytest.approx(x_e, abs=1e-6)
        assert pos[1] == pytest.approx(tr.y_at_cross_um, abs=1e-6)


def test_position_window(small_field):
    particles = tracer.sample_population(
        tracer.WBC_SPECIES, 2, seed=2, width_um=50.0, release_mode="ladder"
    )
    tr = tracer.advect_population(particles, small_field, t_max_s=60.0)[0]
    assert tr.position_at(tr.t_s[0] - 1.0) is None
    assert tr.position_at(tr.t_s[-1] + 1.0) is None
    mid = 0.5 * (tr.t_s[0] + tr.t_s[-1])
    assert tr.position_at(mid) is not None


def test_release_outside_fluid_rejected(small_field):
    sp = tracer.LYMPHOCYTE
    p = tracer.Particle(
        species=sp, index=0, diameter_um=6.0, density_kg_m3=1070.0,
        x_um=100.0, y_um=400.0, u_um_per_s=0.0, v_um_per_s=0.0,
    )
    with pytest.raises(ReleaseOutsideFluid):
        tracer.advect_population([p], small_field, t_max_s=10.0)


# ---------------------------------------------------------------------------
# inertial integration
# ---------------------------------------------------------------------------


def _resting_particle(d_um=10.0, rho=1050.0):
    return tracer.Particle(
        species=tracer.LYMPHOCYTE, index=0, diameter_um=d_um, density_kg_m3=rho,
        x_um=0.0, y_um=25.0, u_um_per_s=0.0, v_um_per_s=0.0,
    )


def test_integrate_rejects_unresolved_step():
    fluid = flow.FluidProperties()
    p = _resting_particle()
    tau = tracer.relaxation_time(10.0, 1050.0, fluid.viscosity_pa_s)
    with pytest.raises(StepUnstable):
        tracer.integrate(p, UniformField(1000.0), fluid, dt_s=tau / 5.0, t_max_s=10 * tau)


def test_velocity_relaxation_matches_exponential():
    fluid = flow.FluidProperties()
    p = _resting_particle()
    tau = tracer.relaxation_time(10.0, 1050.0, fluid.viscosity_pa_s)
    u0 = 1000.0
    traj = tracer.integrate(
        p, UniformField(u0), fluid, dt_s=tau / 50.0, t_max_s=3.0 * tau, lift=False
    )
    u_num = traj.u_um_per_s[150]
    u_exact = u0 * (1.0 - math.exp(-3.0))
    assert abs(u_num - u_exact) / u_exact < 0.01


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------


def test_trajectory_csv_roundtrip(small_field):
    particles = tracer.sample_population(
        tracer.WBC_SPECIES, 2, seed=3, width_um=50.0, release_mode="ladder"
    )
    trajectories = tracer.advect_population(particles, small_field, t_max_s=60.0)
    buf = io.StringIO()
    tracer.write_trajectories_csv(buf, trajectories)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "particle_id,species,t_s,x_um,y_um"
    pid, name, t, x, y = lines[1].split(",")
    assert float(t) == trajectories[0].t_s[0]
    assert float(x) == trajectories[0].x_um[0]

    buf = io.StringIO()
    tracer.write_crossings_csv(buf, trajectories)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "particle_id,species,d_um,t_cross_s,y_at_cross_um"
    assert len(lines) == 1 + sum(tr.crossed for tr in trajectories)
    row = lines[1].split(",")
    assert float(row[3]) == trajectories[0].t_cross_s
