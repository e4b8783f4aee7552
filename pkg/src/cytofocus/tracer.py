"""Cell populations and their motion through a solved flow field.

Cells are rigid spheres characterized by a diameter and density drawn from
species-level distributions.  Two transport models are available:

* :func:`advect_population` treats cells as massless tracers that follow
  streamlines.  At the micrometre scales handled here the momentum
  relaxation time ``tau = rho_p d^2 / (18 mu)`` is a few microseconds while
  transits last seconds, so this is the practical default.
* :func:`integrate` resolves finite-inertia motion under Stokes drag plus
  Saffman shear lift with a fixed-step fourth-order scheme.  It is intended
  for short force-resolved studies; stability requires ``dt <= tau / 10``.

Populations are sampled reproducibly: every particle draws from its own
random substream keyed by (master seed, particle index), so results do not
depend on sampling or execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import (
    EmptySpeciesList,
    InputError,
    ReleaseOutsideFluid,
    StepUnstable,
)

__all__ = [
    "CellSpecies",
    "Particle",
    "Trajectory",
    "WBC_SPECIES",
    "LYMPHOCYTE",
    "MONOCYTE",
    "NEUTROPHIL",
    "MCF7",
    "drag_force",
    "saffman_lift",
    "relaxation_time",
    "sample_population",
    "integrate",
    "advect_population",
    "write_trajectories_csv",
    "write_crossings_csv",
]


@dataclass(frozen=True)
class CellSpecies:
    """A cell type: geometric and electrical properties plus its mix fraction.

    Parameters
    ----------
    name : str
    density_lo_g_ml, density_hi_g_ml : float
        Mass density range in g/ml; individual cells draw uniformly from it.
    diameter_mean_um, diameter_sd_um : float
        Normal diameter distribution, truncated at three standard deviations.
    fraction : float
        Share of this species in a mixed population, in [0, 1].
    conductivity_s_per_m : float
        Bulk electrical conductivity of the cell interior.
    permittivity_rel : float
        Relative permittivity of the cell interior (>= 1).
    """

    name: str
    density_lo_g_ml: float
    density_hi_g_ml: float
    diameter_mean_um: float
    diameter_sd_um: float
    fraction: float
    conductivity_s_per_m: float
    permittivity_rel: float

    def __post_init__(self):
        if not self.name:
            raise InputError("species name must be non-empty")
        if not (self.diameter_mean_um > 0.0):
            raise InputError(
                f"{self.name}: diameter_mean_um must be positive, got {self.diameter_mean_um!r}"
            )
        if self.diameter_sd_um < 0.0:
            raise InputError(
                f"{self.name}: diameter_sd_um must be >= 0, got {self.diameter_sd_um!r}"
            )
        if not (0.0 < self.density_lo_g_ml <= self.density_hi_g_ml):
            raise InputError(
                f"{self.name}: density range must satisfy 0 < lo <= hi, "
                f"got [{self.density_lo_g_ml!r}, {self.density_hi_g_ml!r}]"
            )
        if not (0.0 <= self.fraction <= 1.0):
            raise InputError(
                f"{self.name}: fraction must lie in [0, 1], got {self.fraction!r}"
            )
        if self.conductivity_s_per_m < 0.0:
            raise InputError(
                f"{self.name}: conductivity_s_per_m must be >= 0, got {self.conductivity_s_per_m!r}"
            )
        if self.permittivity_rel < 1.0:
            raise InputError(
                f"{self.name}: permittivity_rel must be >= 1, got {self.permittivity_rel!r}"
            )


# White blood cell mix. Sizes, densities and proportions are literature
# values for the three major types.  Electrical properties of WBCs are
# assumed defaults (documented, configurable), not measurements.
_WBC_SIGMA_S_PER_M = 0.6
_WBC_EPS_REL = 60.0

LYMPHOCYTE = CellSpecies(
    name="lymphocyte",
    density_lo_g_ml=1.073,
    density_hi_g_ml=1.077,
    diameter_mean_um=6.58,
    diameter_sd_um=0.7,
    fraction=0.33,
    conductivity_s_per_m=_WBC_SIGMA_S_PER_M,
    permittivity_rel=_WBC_EPS_REL,
)

MONOCYTE = CellSpecies(
    name="monocyte",
    density_lo_g_ml=1.067,
    density_hi_g_ml=1.077,
    diameter_mean_um=9.26,
    diameter_sd_um=0.72,
    fraction=0.05,
    conductivity_s_per_m=_WBC_SIGMA_S_PER_M,
    permittivity_rel=_WBC_EPS_REL,
)

NEUTROPHIL = CellSpecies(
    name="neutrophil",
    density_lo_g_ml=1.085,
    density_hi_g_ml=1.090,
    diameter_mean_um=9.42,
    diameter_sd_um=0.46,
    fraction=0.62,
    conductivity_s_per_m=_WBC_SIGMA_S_PER_M,
    permittivity_rel=_WBC_EPS_REL,
)

WBC_SPECIES = (LYMPHOCYTE, MONOCYTE, NEUTROPHIL)

# MCF-7 breast cancer line: 18 um diameter, conductivity 4 S/m, relative
# permittivity 50.  The density range is an assumed default.
MCF7 = CellSpecies(
    name="MCF-7",
    density_lo_g_ml=1.050,
    density_hi_g_ml=1.070,
    diameter_mean_um=18.0,
    diameter_sd_um=0.0,
    fraction=0.0,
    conductivity_s_per_m=4.0,
    permittivity_rel=50.0,
)


@dataclass
class Particle:
    """One cell instance: sampled size/density plus kinematic state."""

    species: CellSpecies
    index: int
    diameter_um: float
    density_kg_m3: float
    x_um: float
    y_um: float
    u_um_per_s: float = 0.0
    v_um_per_s: float = 0.0
    release_time_s: float = 0.0

    def __post_init__(self):
        if not (self.diameter_um > 0.0):
            raise InputError(f"diameter_um must be positive, got {self.diameter_um!r}")
        if not (self.density_kg_m3 > 0.0):
            raise InputError(f"density_kg_m3 must be positive, got {self.density_kg_m3!r}")

    @property
    def mass_kg(self) -> float:
        return self.density_kg_m3 * (math.pi / 6.0) * (self.diameter_um * 1e-6) ** 3


@dataclass
class Trajectory:
    """Time history of one particle plus its electrode-plane crossing.

    ``t_cross_s``/``y_at_cross_um`` are None when the particle never reached
    the sensing plane.  ``termination`` records why stepping stopped:
    "outlet", "time_cap" or "stalled".
    """

    particle: Particle
    t_s: np.ndarray
    x_um: np.ndarray
    y_um: np.ndarray
    u_um_per_s: np.ndarray
    v_um_per_s: np.ndarray
    t_cross_s: float | None = None
    y_at_cross_um: float | None = None
    termination: str = "time_cap"

    def __post_init__(self):
        if len(self.t_s) and np.any(np.diff(self.t_s) <= 0.0):
            raise InputError("trajectory times must be strictly increasing")

    @property
    def crossed(self) -> bool:
        return self.t_cross_s is not None

    def position_at(self, t: float) -> tuple[float, float] | None:
        """Interpolated (x, y) at time ``t``, or None when the particle is
        not in the channel at ``t`` (not yet released, or already gone)."""
        ts = self.t_s
        if len(ts) == 0 or t < ts[0] or t > ts[-1]:
            return None
        return (
            float(np.interp(t, ts, self.x_um)),
            float(np.interp(t, ts, self.y_um)),
        )


def relaxation_time(diameter_um: float, density_kg_m3: float, viscosity_pa_s: float) -> float:
    """Momentum relaxation time tau = rho_p d^2 / (18 mu), in seconds."""
    d_m = diameter_um * 1e-6
    return density_kg_m3 * d_m * d_m / (18.0 * viscosity_pa_s)


def drag_force(diameter_um: float, slip_um_per_s, viscosity_pa_s: float) -> np.ndarray:
    """Stokes drag on a sphere, F = 3 pi mu d (u_f - u_p), in newtons.

    Parameters
    ----------
    diameter_um : float
    slip_um_per_s : array_like
        Fluid velocity minus particle velocity, componentwise, um/s.
    viscosity_pa_s : float

    Returns
    -------
    ndarray
        Force vector in N, same shape as ``slip_um_per_s``.
    """
    if not (diameter_um > 0.0):
        raise InputError(f"diameter_um must be positive, got {diameter_um!r}")
    if not (viscosity_pa_s > 0.0):
        raise InputError(f"viscosity_pa_s must be positive, got {viscosity_pa_s!r}")
    slip_m_per_s = np.asarray(slip_um_per_s, dtype=float) * 1e-6
    return 3.0 * math.pi * viscosity_pa_s * (diameter_um * 1e-6) * slip_m_per_s


def saffman_lift(diameter_um: float, slip_x_um_per_s: float, shear_per_s: float, fluid) -> float:
    """Saffman shear-gradient lift, transverse component in newtons.

    F_y = 1.615 mu d^2 slip_x sign(gdot) sqrt(|gdot| / nu) with gdot the
    local shear rate du/dy and nu the kinematic viscosity.  Positive slip in
    positive shear lifts the particle toward faster fluid.
    """
    if not (diameter_um > 0.0):
        raise InputError(f"diameter_um must be positive, got {diameter_um!r}")
    if shear_per_s == 0.0 or slip_x_um_per_s == 0.0:
        return 0.0
    mu = fluid.viscosity_pa_s
    nu = fluid.kinematic_viscosity_m2_s
    d_m = diameter_um * 1e-6
    slip_m = slip_x_um_per_s * 1e-6
    return (
        1.615
        * mu
        * d_m
        * d_m
        * slip_m
        * math.copysign(1.0, shear_per_s)
        * math.sqrt(abs(shear_per_s) / nu)
    )


def _apportion(fractions: np.ndarray, n: int) -> np.ndarray:
    """Largest-remainder apportionment of n by the given fractions."""
    ideal = fractions * n
    counts = np.floor(ideal).astype(int)
    short = n - int(counts.sum())
    if short > 0:
        remainders = ideal - counts
        # stable tie-break: larger remainder first, then earlier species
        order = np.lexsort((np.arange(len(fractions)), -remainders))
        counts[order[:short]] += 1
    return counts


def sample_population(
    species: list[CellSpecies] | tuple[CellSpecies, ...],
    n: int,
    seed: int,
    width_um: float,
    release_x_um: float = 0.0,
    release_mode: str = "batch",
    mean_interval_s: float = 0.2,
) -> list[Particle]:
    """Draw a reproducible mixed population of ``n`` particles.

    Species counts are the deterministic largest-remainder apportionment of
    ``n`` by the (normalized) fractions.  Diameters are normal, truncated at
    three standard deviations; densities uniform over the species range.
    Release heights are uniform across the inlet, held one radius clear of
    the walls so a sphere of that diameter physically fits.

    Three release modes:

    * "batch" -- all particles enter at t = 0 at uniform random heights.
    * "poisson" -- uniform random heights, independent exponential release
      intervals with the given mean, for arrival-spacing studies.
    * "ladder" -- deterministic heights, evenly spaced from the wall
      standoff up to the centerline (cells enter across one half of the
      inlet), all at t = 0.  Random protocols make the minimum
      inter-particle gap an order statistic whose run-to-run scatter is as
      large as its mean; the ladder makes spacing metrics a smooth,
      reproducible function of the design, so it is the default for design
      sweeps.

    Every particle draws from substream (seed, particle index), so the
    output is independent of iteration order and fully reproducible.
    """
    species = list(species)
    if len(species) == 0:
        raise EmptySpeciesList("species list is empty")
    if n <= 0:
        raise InputError(f"population size must be positive, got {n!r}")
    if not (width_um > 0.0):
        raise InputError(f"width_um must be positive, got {width_um!r}")
    if release_mode not in ("batch", "poisson", "ladder"):
        raise InputError(
            f"release_mode must be 'batch', 'poisson' or 'ladder', got {release_mode!r}"
        )
    if release_mode == "poisson" and not (mean_interval_s > 0.0):
        raise InputError(f"mean_interval_s must be positive, got {mean_interval_s!r}")

    fractions = np.array([s.fraction for s in species], dtype=float)
    total = fractions.sum()
    if total <= 0.0:
        raise InputError("species fractions sum to zero; nothing to sample")
    fractions = fractions / total
    counts = _apportion(fractions, n)

    particles: list[Particle] = []
    release_clock = 0.0
    index = 0
    for sp, count in zip(species, counts):
        for _ in range(count):
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
            d = sp.diameter_mean_um
            if sp.diameter_sd_um > 0.0:
                lo = sp.diameter_mean_um - 3.0 * sp.diameter_sd_um
                hi = sp.diameter_mean_um + 3.0 * sp.diameter_sd_um
                d = rng.normal(sp.diameter_mean_um, sp.diameter_sd_um)
                while not (lo <= d <= hi):
                    d = rng.normal(sp.diameter_mean_um, sp.diameter_sd_um)
                d = max(d, 1e-3)
            rho = rng.uniform(sp.density_lo_g_ml, sp.density_hi_g_ml) * 1000.0
            if d >= width_um:
                raise InputError(
                    f"{sp.name}: sampled diameter {d:.3g} um does not fit a "
                    f"{width_um:.3g} um channel"
                )
            y = rng.uniform(0.5 * d, width_um - 0.5 * d)
            if release_mode == "poisson":
                release_clock += rng.exponential(mean_interval_s)
                t_rel = release_clock
            else:
                t_rel = 0.0
            particles.append(
                Particle(
                    species=sp,
                    index=index,
                    diameter_um=float(d),
                    density_kg_m3=float(rho),
                    x_um=float(release_x_um),
                    y_um=float(y),
                    release_time_s=float(t_rel),
                )
            )
            index += 1

    if release_mode == "ladder":
        # evenly spaced heights from the common wall standoff up toward the
        # centerline; one shared standoff keeps the spacing exactly uniform.
        # The top rung stays one twelfth of the width below the centerline:
        # interpolated velocities are piecewise linear, so the profile is
        # flat within half a grid cell of its maximum, and rungs inside
        # that band would ride identical speeds and cross simultaneously
        # (h <= width/8 always, so width/12 clears the band).
        lo = 0.5 * max(p.diameter_um for p in particles)
        hi = 0.5 * width_um - width_um / 12.0
        if lo >= hi:
            raise InputError(
                f"largest sampled diameter {2 * lo:.3g} um leaves no ladder room "
                f"in a {width_um:.3g} um channel"
            )
        for k, p in enumerate(particles):
            p.y_um = lo + (hi - lo) * (k / (n - 1) if n > 1 else 1.0)
    return particles


def _clamp_to_channel(y: np.ndarray, v: np.ndarray, d: np.ndarray, width_um: float):
    """Keep sphere centers one radius clear of the straight channel walls.

    Returns clamped copies; the transverse velocity is zeroed where the
    clamp engaged (inelastic wall contact).
    """
    lo = 0.5 * d
    hi = width_um - 0.5 * d
    clipped = np.clip(y, lo, hi)
    hit = clipped != y
    v = np.where(hit, 0.0, v)
    return clipped, v


def _record_crossing(state, x_new, y_new, t_new, x_e):
    """Mark first passage of the sensing plane, interpolating in time."""
    crossing = (~state["crossed"]) & (state["x"] < x_e) & (x_new >= x_e)
    if np.any(crossing):
        frac = np.where(
            crossing,
            (x_e - state["x"]) / np.maximum(x_new - state["x"], 1e-300),
            0.0,
        )
        state["t_cross"] = np.where(
            crossing, state["t"] + frac * (t_new - state["t"]), state["t_cross"]
        )
        state["y_cross"] = np.where(
            crossing, state["y"] + frac * (y_new - state["y"]), state["y_cross"]
        )
        state["crossed"] |= crossing


def advect_population(
    particles: list[Particle],
    field,
    t_max_s: float = 600.0,
    cfl: float = 0.5,
    dt_max_s: float = 0.5,
    max_steps: int = 2_000_000,
) -> list[Trajectory]:
    """Advect particles as massless tracers along the solved flow.

    Each particle advances with its own adaptive step ``dt = cfl h / |u|``
    (capped at ``dt_max_s``), which keeps the step length a fixed fraction
    of a grid cell regardless of local speed.  Stepping uses the classical
    fourth-order scheme on the interpolated velocity field.  A particle
    stops at the outlet plane, at ``t_max_s``, or (defensively) when the
    step budget runs out.

    Particles must be released inside the open region of the main channel.
    """
    if not particles:
        return []
    if not (t_max_s > 0.0):
        raise InputError(f"t_max_s must be positive, got {t_max_s!r}")
    if not (0.0 < cfl <= 1.0):
        raise InputError(f"cfl must lie in (0, 1], got {cfl!r}")

    grid = field.grid
    geom = grid.geom
    n = len(particles)

    x = np.array([p.x_um for p in particles], dtype=float)
    y = np.array([p.y_um for p in particles], dtype=float)
    d = np.array([p.diameter_um for p in particles], dtype=float)
    t_rel = np.array([p.release_time_s for p in particles], dtype=float)
    inside = grid.inside_open(x, y)
    if not np.all(inside):
        bad = int(np.nonzero(~inside)[0][0])
        raise ReleaseOutsideFluid(
            f"particle {particles[bad].index} released at "
            f"({x[bad]:.3g}, {y[bad]:.3g}) um, outside the open region"
        )

    x_exit = grid.x_fluid_hi
    x_e = geom.electrode_position_um
    h = grid.h

    state = {
        "t": t_rel.copy(),
        "x": x,
        "y": y,
        "crossed": np.zeros(n, dtype=bool),
        "t_cross": np.full(n, np.nan),
        "y_cross": np.full(n, np.nan),
    }
    active = np.ones(n, dtype=bool)
    termination = np.array(["time_cap"] * n, dtype=object)

    # per-step records, gathered into per-particle arrays afterwards
    rec_idx: list[np.ndarray] = [np.arange(n)]
    u0, v0 = field.sample_many(x, y)
    rec_t = [t_rel.copy()]
    rec_x = [x.copy()]
    rec_y = [y.copy()]
    rec_u = [u0]
    rec_v = [v0]

    steps = 0
    while np.any(active) and steps < max_steps:
        steps += 1
        idx = np.nonzero(active)[0]
        xa, ya, ta = state["x"][idx], state["y"][idx], state["t"][idx]
        da = d[idx]

        k1u, k1v = field.sample_many(xa, ya)
        speed = np.hypot(k1u, k1v)
        dt = np.minimum(cfl * h / np.maximum(speed, 1e-12), dt_max_s)
        dt = np.minimum(dt, np.maximum(t_max_s - ta, 0.0) + 1e-15)

        k2u, k2v = field.sample_many(xa + 0.5 * dt * k1u, ya + 0.5 * dt * k1v)
        k3u, k3v = field.sample_many(xa + 0.5 * dt * k2u, ya + 0.5 * dt * k2v)
        k4u, k4v = field.sample_many(xa + dt * k3u, ya + dt * k3v)
        uu = (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
        vv = (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0

        x_new = xa + dt * uu
        y_new = ya + dt * vv
        y_new, _ = _clamp_to_channel(y_new, vv.copy(), da, geom.main_width_um)
        t_new = ta + dt

        sub = {k: state[k][idx] for k in state}
        _record_crossing(sub, x_new, y_new, t_new, x_e)
        for k in state:
            state[k][idx] = sub[k]

        state["x"][idx] = x_new
        state["y"][idx] = y_new
        state["t"][idx] = t_new

        un, vn = field.sample_many(x_new, y_new)
        rec_idx.append(idx)
        rec_t.append(t_new)
        rec_x.append(x_new.copy())
        rec_y.append(y_new.copy())
        rec_u.append(un)
        rec_v.append(vn)

        done_out = x_new >= x_exit - 1e-9
        done_time = t_new >= t_max_s - 1e-12
        termination[idx[done_out]] = "outlet"
        termination[idx[done_time & ~done_out]] = "time_cap"
        active[idx] = ~(done_out | done_time)

    if np.any(active):
        termination[active] = "stalled"

    # gather per-particle series
    all_idx = np.concatenate(rec_idx)
    all_t = np.concatenate(rec_t)
    all_x = np.concatenate(rec_x)
    all_y = np.concatenate(rec_y)
    all_u = np.concatenate(rec_u)
    all_v = np.concatenate(rec_v)
    order = np.argsort(all_idx, kind="stable")
    all_idx = all_idx[order]
    bounds = np.searchsorted(all_idx, np.arange(n + 1))

    trajectories = []
    for i, p in enumerate(particles):
        sl = order[bounds[i] : bounds[i + 1]]
        crossed = bool(state["crossed"][i])
        trajectories.append(
            Trajectory(
                particle=p,
                t_s=all_t[sl],
                x_um=all_x[sl],
                y_um=all_y[sl],
                u_um_per_s=all_u[sl],
                v_um_per_s=all_v[sl],
                t_cross_s=float(state["t_cross"][i]) if crossed else None,
                y_at_cross_um=float(state["y_cross"][i]) if crossed else None,
                termination=str(termination[i]),
            )
        )
    return trajectories


def integrate(
    particle: Particle,
    field,
    fluid,
    dt_s: float,
    t_max_s: float,
    lift: bool = True,
    width_um: float | None = None,
) -> Trajectory:
    """Integrate one inertial particle under drag and shear lift.

    Solves m dv/dt = F_drag + F_lift, dx/dt = v with the classical
    fourth-order scheme at fixed ``dt_s``.  The step must resolve the
    momentum relaxation time: ``dt_s <= tau / 10`` or STEP_UNSTABLE is
    raised.  ``field`` provides ``sample_many`` and ``shear_rate``; when it
    carries a grid the release position is checked against the open region
    and the run stops at the outlet plane.
    """
    if not (dt_s > 0.0):
        raise InputError(f"dt_s must be positive, got {dt_s!r}")
    if not (t_max_s > 0.0):
        raise InputError(f"t_max_s must be positive, got {t_max_s!r}")
    tau = relaxation_time(particle.diameter_um, particle.density_kg_m3, fluid.viscosity_pa_s)
    if dt_s > tau / 10.0 + 1e-30:
        raise StepUnstable(
            f"dt_s={dt_s:.3g} s exceeds tau/10={tau / 10.0:.3g} s for a "
            f"{particle.diameter_um:.3g} um particle; reduce the step"
        )

    grid = getattr(field, "grid", None)
    x_exit = grid.x_fluid_hi if grid is not None else math.inf
    x_e = grid.geom.electrode_position_um if grid is not None else math.inf
    if width_um is None and grid is not None:
        width_um = grid.geom.main_width_um
    if grid is not None and not bool(
        grid.inside_open(np.array([particle.x_um]), np.array([particle.y_um]))[0]
    ):
        raise ReleaseOutsideFluid(
            f"particle released at ({particle.x_um:.3g}, {particle.y_um:.3g}) um, "
            "outside the open region"
        )

    mass = particle.mass_kg
    d_um = particle.diameter_um
    d_arr = np.array([d_um])

    def accel(xy, vel):
        uf, vf = field.sample_many(np.array([xy[0]]), np.array([xy[1]]))
        slip = np.array([uf[0] - vel[0], vf[0] - vel[1]])
        f = drag_force(d_um, slip, fluid.viscosity_pa_s)
        if lift:
            gdot = field.shear_rate(np.array([xy[0]]), np.array([xy[1]]))[0]
            f = f + np.array([0.0, saffman_lift(d_um, slip[0], float(gdot), fluid)])
        # N / kg = m/s^2; convert to um/s^2
        return f / mass * 1e6

    n_steps = int(math.ceil(t_max_s / dt_s))
    t = particle.release_time_s
    pos = np.array([particle.x_um, particle.y_um], dtype=float)
    vel = np.array([particle.u_um_per_s, particle.v_um_per_s], dtype=float)

    ts = [t]
    xs = [pos[0]]
    ys = [pos[1]]
    us = [vel[0]]
    vs = [vel[1]]
    t_cross = None
    y_cross = None
    termination = "time_cap"

    for _ in range(n_steps):
        k1x, k1v = vel, accel(pos, vel)
        k2x, k2v = vel + 0.5 * dt_s * k1v, accel(pos + 0.5 * dt_s * k1x, vel + 0.5 * dt_s * k1v)
        k3x, k3v = vel + 0.5 * dt_s * k2v, accel(pos + 0.5 * dt_s * k2x, vel + 0.5 * dt_s * k2v)
        k4x, k4v = vel + dt_s * k3v, accel(pos + dt_s * k3x, vel + dt_s * k3v)
        new_pos = pos + dt_s / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        new_vel = vel + dt_s / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)

        if width_um is not None:
            yc, vc = _clamp_to_channel(
                np.array([new_pos[1]]), np.array([new_vel[1]]), d_arr, width_um
            )
            new_pos[1] = yc[0]
            new_vel[1] = vc[0]

        t_new = t + dt_s
        if t_cross is None and pos[0] < x_e <= new_pos[0]:
            frac = (x_e - pos[0]) / max(new_pos[0] - pos[0], 1e-300)
            t_cross = t + frac * dt_s
            y_cross = pos[1] + frac * (new_pos[1] - pos[1])

        pos, vel, t = new_pos, new_vel, t_new
        ts.append(t)
        xs.append(pos[0])
        ys.append(pos[1])
        us.append(vel[0])
        vs.append(vel[1])

        if pos[0] >= x_exit - 1e-9:
            termination = "outlet"
            break

    return Trajectory(
        particle=particle,
        t_s=np.array(ts),
        x_um=np.array(xs),
        y_um=np.array(ys),
        u_um_per_s=np.array(us),
        v_um_per_s=np.array(vs),
        t_cross_s=t_cross,
        y_at_cross_um=y_cross,
        termination=termination,
    )


def write_trajectories_csv(fh, trajectories: list[Trajectory], stride: int = 1) -> None:
    """Write the trajectory dump: particle_id, species, t_s, x_um, y_um."""
    fh.write("particle_id,species,t_s,x_um,y_um\n")
    for traj in trajectories:
        p = traj.particle
        for k in range(0, len(traj.t_s), max(stride, 1)):
            fh.write(
                f"{p.index},{p.species.name},{float(traj.t_s[k])!r},"
                f"{float(traj.x_um[k])!r},{float(traj.y_um[k])!r}\n"
            )


def write_crossings_csv(fh, trajectories: list[Trajectory]) -> None:
    """Write the crossing summary: one row per particle that reached the
    sensing plane."""
    fh.write("particle_id,species,d_um,t_cross_s,y_at_cross_um\n")
    for traj in trajectories:
        if not traj.crossed:
            continue
        p = traj.particle
        fh.write(
            f"{p.index},{p.species.name},{float(p.diameter_um)!r},"
            f"{float(traj.t_cross_s)!r},{float(traj.y_at_cross_um)!r}\n"
        )
