"""One-axis design sweeps over the focusing pipeline.

A sweep runs the full chain (geometry -> flow solve -> population trace ->
objectives) at each value of one scalar design parameter, collects the
three focusing objectives per value, checks them against expected monotone
trends, and can pick a preferred design point by weighted scoring.

Reference sweep results for the four classic axes (junction position X1,
inlet speeds V1 and V2, channel width Y) ship as CSV fixtures so the trend
checker can be exercised against known-good data without running the
simulator.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dataclass_field, replace
from importlib import resources

import numpy as np

from . import flow, geometry, metrics as metrics_mod, tracer
from .errors import AllRowsFailed, CytofocusError, InputError
from .metrics import FocusingMetrics

__all__ = [
    "BaseCase",
    "SweepSpec",
    "SweepRow",
    "SweepResult",
    "TrendExpectation",
    "TrendCheck",
    "TrendReport",
    "DEFAULT_EXPECTATIONS",
    "PARAMETER_FIELDS",
    "run_sweep",
    "check_trends",
    "select_design",
    "load_table_fixture",
    "load_species_fixture",
    "write_sweep_csv",
    "write_trend_report",
]

INCREASING = "INCREASING"
DECREASING = "DECREASING"
NON_INCREASING = "NON_INCREASING"
NON_DECREASING = "NON_DECREASING"
NONE = "NONE"
CONSTANT = "CONSTANT"  # observed only, never a valid expectation

_DIRECTIONS = (INCREASING, DECREASING, NON_INCREASING, NON_DECREASING, NONE)

# short axis names accepted in sweep specs, mapped to BaseCase fields
PARAMETER_FIELDS = {
    "X1": "junction_position_um",
    "V1": "v1_um_per_s",
    "V2": "v2_um_per_s",
    "Y": "main_width_um",
}

_METRIC_NAMES = ("dy_max_um", "dx_min_um", "t_s")


@dataclass(frozen=True)
class BaseCase:
    """Fixed pipeline inputs that a sweep perturbs one field of.

    ``side_width_um`` and ``electrode_position_um`` left as None follow the
    geometry defaults (side width tracks the main width; electrodes sit
    500 um before the outlet), which keeps them consistent when the swept
    parameter is the channel width itself.  ``resolution_um`` of None picks
    one sixteenth of the channel width.
    """

    main_width_um: float = 50.0
    main_length_um: float = 10_000.0
    junction_position_um: float = 5_000.0
    electrode_position_um: float | None = None
    sheath_angle_deg: float = 30.0
    side_width_um: float | None = None
    side_length_um: float | None = None
    v1_um_per_s: float = 500.0
    v2_um_per_s: float = 5_000.0
    fluid: flow.FluidProperties = dataclass_field(default_factory=flow.FluidProperties)
    species: tuple[tracer.CellSpecies, ...] = tracer.WBC_SPECIES
    resolution_um: float | None = None
    release_mode: str = "ladder"
    mean_interval_s: float = 0.2
    t_max_s: float = 600.0
    cfl: float = 0.5


@dataclass(frozen=True)
class SweepSpec:
    """One swept axis: which parameter, which values, how many particles."""

    base: BaseCase
    parameter: str
    values: tuple[float, ...]
    n_particles: int = 60
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        if self.parameter not in PARAMETER_FIELDS and not hasattr(self.base, self.parameter):
            raise InputError(
                f"unknown sweep parameter {self.parameter!r}; expected one of "
                f"{sorted(PARAMETER_FIELDS)} or a BaseCase field name"
            )
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise InputError("sweep needs at least one value")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise InputError(f"sweep values must be strictly increasing, got {vals}")
        object.__setattr__(self, "values", vals)
        if self.n_particles <= 0:
            raise InputError(f"n_particles must be positive, got {self.n_particles!r}")
        if self.replicates <= 0:
            raise InputError(f"replicates must be positive, got {self.replicates!r}")

    @property
    def field_name(self) -> str:
        return PARAMETER_FIELDS.get(self.parameter, self.parameter)


@dataclass(frozen=True)
class SweepRow:
    """Result at one swept value; metrics are replicate means."""

    param_name: str
    param_value: float
    metrics: FocusingMetrics | None
    rep_ranges: dict | None = None
    status: str = "ok"
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    param_name: str
    rows: tuple[SweepRow, ...]

    def __post_init__(self):
        values = [r.param_value for r in self.rows]
        if any(b <= a for a, b in zip(values, values[1:])):
            raise InputError("sweep rows must be ordered by strictly increasing value")

    def ok_rows(self) -> list[SweepRow]:
        return [r for r in self.rows if r.status == "ok"]


@dataclass(frozen=True)
class TrendExpectation:
    """Expected direction of each objective along the swept axis."""

    dy_max_um: str = NONE
    dx_min_um: str = NONE
    t_s: str = NONE

    def __post_init__(self):
        for name in _METRIC_NAMES:
            val = getattr(self, name)
            if val not in _DIRECTIONS:
                raise InputError(f"{name}: unknown direction {val!r}; expected {_DIRECTIONS}")
        if all(getattr(self, name) == NONE for name in _METRIC_NAMES):
            raise InputError("at least one metric must have a non-NONE direction")


# directions along each ascending axis, as narrated for the reference tables:
# X1 up -> longer sensing time, wider gaps; V1 up -> shorter time, wider gaps
# (its dy_max column is known non-monotone and left unchecked); V2 up ->
# tighter focusing, wider gaps, no slower; Y up -> looser focusing, wider gaps.
DEFAULT_EXPECTATIONS = {
    "X1": TrendExpectation(dx_min_um=INCREASING, t_s=INCREASING),
    "V1": TrendExpectation(dx_min_um=INCREASING, t_s=DECREASING),
    "V2": TrendExpectation(dy_max_um=DECREASING, dx_min_um=INCREASING, t_s=NON_INCREASING),
    "Y": TrendExpectation(dy_max_um=INCREASING, dx_min_um=INCREASING),
}


@dataclass(frozen=True)
class TrendCheck:
    metric: str
    expected: str
    observed: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class TrendReport:
    checks: tuple[TrendCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _point_seed(master_seed: int, point_index: int, replicate: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(point_index, replicate))
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def _run_point(spec: SweepSpec, point_index: int, value: float) -> SweepRow:
    base = replace(spec.base, **{spec.field_name: value})
    geom = geometry.build_geometry(
        main_width_um=base.main_width_um,
        main_length_um=base.main_length_um,
        junction_position_um=base.junction_position_um,
        electrode_position_um=base.electrode_position_um,
        sheath_angle_deg=base.sheath_angle_deg,
        side_width_um=base.side_width_um,
        side_length_um=base.side_length_um,
    )
    h = base.resolution_um if base.resolution_um is not None else base.main_width_um / 16.0
    grid = geometry.rasterize(geom, h)
    bc = flow.FlowBoundaryConditions(
        v1_um_per_s=base.v1_um_per_s, v2_um_per_s=base.v2_um_per_s
    )
    field = flow.solve_flow(grid, base.fluid, bc)

    per_rep: list[FocusingMetrics] = []
    for rep in range(spec.replicates):
        particles = tracer.sample_population(
            base.species,
            spec.n_particles,
            _point_seed(spec.seed, point_index, rep),
            width_um=base.main_width_um,
            release_mode=base.release_mode,
            mean_interval_s=base.mean_interval_s,
        )
        trajectories = tracer.advect_population(
            particles, field, t_max_s=base.t_max_s, cfl=base.cfl
        )
        per_rep.append(metrics_mod.compute_metrics(trajectories, geom))

    dy = float(np.mean([m.dy_max_um for m in per_rep]))
    ts = float(np.mean([m.t_s for m in per_rep]))
    dxs = [m.dx_min_um for m in per_rep if m.dx_min_um is not None]
    dx = float(np.mean(dxs)) if dxs else None
    rep_ranges = {
        "dy_max_um": (min(m.dy_max_um for m in per_rep), max(m.dy_max_um for m in per_rep)),
        "dx_min_um": (min(dxs), max(dxs)) if dxs else None,
        "t_s": (min(m.t_s for m in per_rep), max(m.t_s for m in per_rep)),
    }
    return SweepRow(
        param_name=spec.parameter,
        param_value=value,
        metrics=FocusingMetrics(dy_max_um=dy, dx_min_um=dx, t_s=ts),
        rep_ranges=rep_ranges,
    )


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Run the pipeline at every swept value.

    Points are independent jobs (optionally threaded); a point that fails
    validation or solving yields a FAILED row instead of aborting the whole
    sweep.  Results are deterministic for a fixed spec seed regardless of
    worker count, because every (point, replicate) derives its own random
    substream.
    """

    def job(args):
        k, value = args
        try:
            return _run_point(spec, k, value)
        except CytofocusError as exc:
            return SweepRow(
                param_name=spec.parameter,
                param_value=value,
                metrics=None,
                status="failed",
                error=f"{exc.code}: {exc}",
            )

    jobs = list(enumerate(spec.values))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(job, jobs))
    else:
        rows = [job(j) for j in jobs]
    return SweepResult(param_name=spec.parameter, rows=tuple(rows))


def _classify_direction(series: list[float]) -> str:
    diffs = np.diff(series)
    if len(diffs) == 0:
        return NONE
    if np.all(diffs == 0.0):
        return CONSTANT
    if np.all(diffs > 0.0):
        return INCREASING
    if np.all(diffs < 0.0):
        return DECREASING
    if np.all(diffs >= 0.0):
        return NON_DECREASING
    if np.all(diffs <= 0.0):
        return NON_INCREASING
    return NONE


# a constant series is both non-increasing and non-decreasing
_SATISFIES = {
    INCREASING: (INCREASING,),
    DECREASING: (DECREASING,),
    NON_DECREASING: (INCREASING, NON_DECREASING, CONSTANT),
    NON_INCREASING: (DECREASING, NON_INCREASING, CONSTANT),
}


def check_trends(result: SweepResult, expect: TrendExpectation) -> TrendReport:
    """Compare each objective's direction along the axis with expectations.

    Only rows with status "ok" participate.  A strict or weak direction
    needs at least two such rows; an absent dx_min anywhere fails that
    metric's check outright (the trend cannot be certified).
    """
    rows = result.ok_rows()
    checks = []
    for name in _METRIC_NAMES:
        expected = getattr(expect, name)
        if expected == NONE:
            continue
        if len(rows) < 2:
            checks.append(
                TrendCheck(name, expected, NONE, False, "fewer than two usable rows")
            )
            continue
        values = [getattr(r.metrics, name) for r in rows]
        if any(v is None for v in values):
            bad = rows[values.index(None)].param_value
            checks.append(
                TrendCheck(
                    name, expected, NONE, False, f"value absent at {result.param_name}={bad:g}"
                )
            )
            continue
        observed = _classify_direction(values)
        ok = observed in _SATISFIES[expected]
        detail = ""
        if not ok:
            comparisons = {
                INCREASING: lambda a, b: b > a,
                DECREASING: lambda a, b: b < a,
                NON_DECREASING: lambda a, b: b >= a,
                NON_INCREASING: lambda a, b: b <= a,
            }[expected]
            for a, b in zip(rows, rows[1:]):
                va, vb = getattr(a.metrics, name), getattr(b.metrics, name)
                if not comparisons(va, vb):
                    detail = (
                        f"{result.param_name}={a.param_value:g} -> {b.param_value:g} "
                        f"gives {name} {va:g} -> {vb:g}"
                    )
                    break
        checks.append(TrendCheck(name, expected, observed, ok, detail))
    return TrendReport(checks=tuple(checks))


_DEFAULT_WEIGHTS = {"dy_max_um": 1.0, "dx_min_um": 1.0, "t_s": 1.0}
_DEFAULT_SENSES = {"dy_max_um": "min", "dx_min_um": "max", "t_s": "min"}


def select_design(
    result: SweepResult,
    weights: dict[str, float] | None = None,
    senses: dict[str, str] | None = None,
) -> SweepRow:
    """Pick the row with the best weighted, normalized score.

    Each metric is min-max normalized over the usable rows, flipped so
    higher is always better according to its sense ("min" = smaller is
    better), weighted and summed.  A row whose dx_min is absent scores
    worst on that metric.  Ties break toward smaller transit time, then
    smaller parameter value.
    """
    weights = dict(_DEFAULT_WEIGHTS, **(weights or {}))
    senses = dict(_DEFAULT_SENSES, **(senses or {}))
    for name, w in weights.items():
        if name not in _METRIC_NAMES:
            raise InputError(f"unknown metric {name!r} in weights")
        if w < 0.0:
            raise InputError(f"weight for {name} must be >= 0, got {w!r}")
    if all(w == 0.0 for w in weights.values()):
        raise InputError("at least one weight must be positive")
    for name, s in senses.items():
        if s not in ("min", "max"):
            raise InputError(f"sense for {name} must be 'min' or 'max', got {s!r}")

    rows = result.ok_rows()
    if not rows:
        raise AllRowsFailed("every sweep row failed; nothing to select from")

    scores = np.zeros(len(rows))
    for name in _METRIC_NAMES:
        if weights[name] == 0.0:
            continue
        values = [getattr(r.metrics, name) for r in rows]
        present = [v for v in values if v is not None]
        if not present:
            continue
        lo, hi = min(present), max(present)
        span = hi - lo
        for i, v in enumerate(values):
            if v is None:
                z = 0.0  # absent scores worst
            elif span == 0.0:
                z = 1.0
            else:
                z = (v - lo) / span
                if senses[name] == "min":
                    z = 1.0 - z
            scores[i] += weights[name] * z

    best = max(
        range(len(rows)),
        key=lambda i: (scores[i], -rows[i].metrics.t_s, -rows[i].param_value),
    )
    return rows[best]


def write_sweep_csv(fh, result: SweepResult) -> None:
    fh.write("param_name,param_value,dy_max_um,dx_min_um,T_s,status\n")
    for r in result.rows:
        if r.metrics is None:
            fh.write(f"{r.param_name},{r.param_value!r},,,,{r.status}\n")
        else:
            dx = "" if r.metrics.dx_min_um is None else repr(r.metrics.dx_min_um)
            fh.write(
                f"{r.param_name},{r.param_value!r},{r.metrics.dy_max_um!r},"
                f"{dx},{r.metrics.t_s!r},{r.status}\n"
            )


def write_trend_report(fh, report: TrendReport) -> None:
    """One line per checked metric: metric, expected, observed, PASS/FAIL."""
    for c in report.checks:
        line = f"{c.metric},{c.expected},{c.observed},{'PASS' if c.passed else 'FAIL'}"
        if c.detail:
            line += f"  ({c.detail})"
        fh.write(line + "\n")


def load_table_fixture(name: str) -> SweepResult:
    """Load one of the shipped reference sweeps: table4/table5/table6/table7."""
    path = resources.files("cytofocus.fixtures").joinpath(f"{name}.csv")
    if not path.is_file():
        raise InputError(f"unknown fixture {name!r}")
    rows = []
    with path.open("r", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            dx = rec["dx_min_um"]
            rows.append(
                SweepRow(
                    param_name=rec["param_name"],
                    param_value=float(rec["param_value"]),
                    metrics=FocusingMetrics(
                        dy_max_um=float(rec["dy_max_um"]),
                        dx_min_um=float(dx) if dx else None,
                        t_s=float(rec["T_s"]),
                    ),
                )
            )
    rows.sort(key=lambda r: r.param_value)
    return SweepResult(param_name=rows[0].param_name, rows=tuple(rows))


def load_species_fixture() -> list[tracer.CellSpecies]:
    """Load the shipped white-blood-cell mix (sizes, densities, fractions).

    Electrical properties are not part of the fixture; the documented
    defaults from :mod:`cytofocus.tracer` are applied by name.
    """
    by_name = {s.name: s for s in tracer.WBC_SPECIES}
    path = resources.files("cytofocus.fixtures").joinpath("table2.csv")
    species = []
    with path.open("r", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            defaults = by_name.get(rec["name"])
            species.append(
                tracer.CellSpecies(
                    name=rec["name"],
                    density_lo_g_ml=float(rec["density_lo_g_ml"]),
                    density_hi_g_ml=float(rec["density_hi_g_ml"]),
                    diameter_mean_um=float(rec["diameter_mean_um"]),
                    diameter_sd_um=float(rec["diameter_sd_um"]),
                    fraction=float(rec["fraction"]),
                    conductivity_s_per_m=(
                        defaults.conductivity_s_per_m if defaults else tracer._WBC_SIGMA_S_PER_M
                    ),
                    permittivity_rel=(
                        defaults.permittivity_rel if defaults else tracer._WBC_EPS_REL
                    ),
                )
            )
    return species
