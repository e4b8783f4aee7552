"""Command-line front end for the focusing-cytometer simulator.

Subcommands cover each pipeline stage: ``flow`` solves the channel flow,
``trace`` releases and follows a cell population, ``sweep`` runs a design
sweep with a trend report, ``impedance`` renders per-species spectra,
``classify`` labels a mixed population, and ``report`` bundles the
plot-ready data for the canonical figures.

Every output file starts with a comment line recording the tool version,
the hash of the fully resolved configuration, and the master seed; floats
are written with round-trip precision and nothing time-dependent is
emitted, so identical inputs give byte-identical outputs.  Files are
written to a temporary name and renamed into place.  Exit status is 0 on
success, 1 for input/validation problems, 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import __version__, flow, geometry, impedance
from . import metrics as metrics_mod
from . import sweep as sweep_mod
from . import tracer
from .config import RunConfig, parse_config
from .errors import CytofocusError, EmptyResults, InputError, SolverError

__all__ = ["main", "entry", "emit_plotdata"]


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------


def _slug(name: str) -> str:
    out = re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower()
    return out or "unnamed"


def _header(cfg: RunConfig) -> str:
    seed = cfg.tracer_options["seed"]
    return f"# cytofocus {__version__} config_sha256={cfg.sha256} seed={seed}\n"


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(out_dir: str, name: str, cfg: RunConfig, body_fn) -> str:
    """Write one stamped output file through an in-memory buffer."""
    buf = io.StringIO()
    body_fn(buf)
    path = os.path.join(out_dir, name)
    _write_atomic(path, _header(cfg) + buf.getvalue())
    return path


def _write_echo(out_dir: str, cfg: RunConfig) -> str:
    """The resolved-config echo: plain JSON, itself a valid config file."""
    path = os.path.join(out_dir, "resolved_config.json")
    _write_atomic(path, json.dumps(cfg.resolved, indent=2, sort_keys=True) + "\n")
    return path


def emit_plotdata(results, kind: str, out_dir: str = ".", cfg: RunConfig | None = None,
                  prefix: str = "") -> list[str]:
    """Write plot-ready CSV files for one kind of result.

    kind "trajectories" takes a list of Trajectory and writes one file;
    kind "sweep" takes a SweepResult and writes one file; kind "spectrum"
    takes a list of (name, ImpedanceSpectrum) pairs and writes one file per
    name.  Returns the written paths.
    """
    header = _header(cfg) if cfg is not None else ""

    def put(name, body_fn):
        buf = io.StringIO()
        body_fn(buf)
        path = os.path.join(out_dir, prefix + name)
        _write_atomic(path, header + buf.getvalue())
        return path

    if kind == "trajectories":
        if not results:
            raise EmptyResults("no trajectories to emit")
        return [put("trajectories.csv",
                    lambda fh: tracer.write_trajectories_csv(fh, results))]
    if kind == "sweep":
        if not getattr(results, "rows", ()):
            raise EmptyResults("no sweep rows to emit")
        return [put("sweep.csv", lambda fh: sweep_mod.write_sweep_csv(fh, results))]
    if kind == "spectrum":
        if not results:
            raise EmptyResults("no spectra to emit")
        paths = []
        for name, spec in results:
            paths.append(put(f"spectrum_{_slug(name)}.csv",
                             lambda fh, s=spec: impedance.write_spectrum_csv(fh, s)))
        return paths
    raise InputError(f"unknown plot-data kind {kind!r}")


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------


def _solve_field(cfg: RunConfig) -> flow.FlowField:
    grid = geometry.rasterize(cfg.geometry, cfg.resolution_um)
    bc = flow.FlowBoundaryConditions(
        v1_um_per_s=cfg.v1_um_per_s, v2_um_per_s=cfg.v2_um_per_s
    )
    return flow.solve_flow(grid, cfg.fluid, bc)


def _sample(cfg: RunConfig) -> list[tracer.Particle]:
    tr = cfg.tracer_options
    return tracer.sample_population(
        cfg.species,
        tr["n_particles"],
        tr["seed"],
        width_um=cfg.geometry.main_width_um,
        release_mode=tr["release"]["mode"],
        mean_interval_s=tr["release"]["mean_interval_s"],
    )


def _trace(cfg: RunConfig) -> list[tracer.Trajectory]:
    field = _solve_field(cfg)
    particles = _sample(cfg)
    tr = cfg.tracer_options
    if tr["mode"] == "massless":
        return tracer.advect_population(
            particles, field, t_max_s=tr["t_max_s"], cfl=tr["cfl"]
        )
    return [
        tracer.integrate(
            p, field, cfg.fluid, tr["dt_s"], tr["t_max_s"],
            width_um=cfg.geometry.main_width_um,
        )
        for p in particles
    ]


def _medium(cfg: RunConfig) -> impedance.DielectricMaterial:
    m = cfg.impedance_options["medium"]
    return impedance.DielectricMaterial(
        conductivity_s_per_m=m["conductivity_s_per_m"],
        permittivity_rel=m["permittivity_rel"],
    )


def _empty_domain(cfg: RunConfig) -> impedance.DielectricDomain:
    im = cfg.impedance_options
    return impedance.DielectricDomain(
        length_um=im["length_um"],
        height_um=im["height_um"],
        electrode_width_um=im["electrode_width_um"],
        drive_voltage_v=im["drive_voltage_v"],
        depth_um=im["depth_um"],
        medium=_medium(cfg),
        inclusion=None,
    )


def _inclusion_for(cfg: RunConfig, diameter_um: float,
                   material: impedance.DielectricMaterial) -> impedance.Inclusion:
    pos = cfg.impedance_options["cell_position"]
    return impedance.Inclusion(
        center_x_um=pos["x_um"],
        center_y_um=pos["y_um"],
        diameter_um=diameter_um,
        material=material,
    )


def _species_spectra(cfg: RunConfig, species, frequencies
                     ) -> tuple[impedance.ImpedanceSpectrum, list]:
    """Empty-channel spectrum plus the normalized spectrum of each species
    (one representative cell at its mean diameter)."""
    im = cfg.impedance_options
    h = im["resolution_um"]
    domain = _empty_domain(cfg)
    empty = impedance.spectrum(domain, frequencies, h_um=h)
    named = []
    for sp in species:
        mat = impedance.DielectricMaterial(
            conductivity_s_per_m=sp.conductivity_s_per_m,
            permittivity_rel=sp.permittivity_rel,
        )
        dom = replace(domain, inclusion=_inclusion_for(cfg, sp.diameter_mean_um, mat))
        named.append((sp.name, impedance.normalized(
            impedance.spectrum(dom, frequencies, h_um=h), empty)))
    return empty, named


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_flow(cfg: RunConfig, out_dir: str, workers: int) -> list[str]:
    field = _solve_field(cfg)
    return [_emit(out_dir, "flow_field.csv", cfg,
                  lambda fh: flow.write_field_csv(fh, field))]


def _cmd_trace(cfg: RunConfig, out_dir: str, workers: int) -> list[str]:
    trajectories = _trace(cfg)
    paths = emit_plotdata(trajectories, "trajectories", out_dir, cfg)
    paths.append(_emit(out_dir, "crossings.csv", cfg,
                       lambda fh: tracer.write_crossings_csv(fh, trajectories)))
    m = metrics_mod.compute_metrics(trajectories, cfg.geometry)
    paths.append(_emit(out_dir, "metrics.csv", cfg,
                       lambda fh: metrics_mod.write_metrics_csv(fh, [("trace", m)])))
    return paths


def _sweep_spec(cfg: RunConfig) -> tuple[sweep_mod.SweepSpec, sweep_mod.TrendExpectation | None]:
    sw = cfg.sweep_options
    if sw is None:
        raise InputError("configuration has no sweep block")
    overrides = cfg.geometry_overrides
    base = sweep_mod.BaseCase(
        main_width_um=cfg.geometry.main_width_um,
        main_length_um=cfg.geometry.main_length_um,
        junction_position_um=cfg.geometry.junction_position_um,
        electrode_position_um=overrides.get("electrode_position_um"),
        sheath_angle_deg=cfg.geometry.sheath_angle_deg,
        side_width_um=overrides.get("side_width_um"),
        side_length_um=overrides.get("side_length_um"),
        v1_um_per_s=cfg.v1_um_per_s,
        v2_um_per_s=cfg.v2_um_per_s,
        fluid=cfg.fluid,
        species=tuple(cfg.species),
        resolution_um=cfg.resolution_um if cfg.resolution_explicit else None,
        release_mode=sw["release_mode"],
        mean_interval_s=cfg.tracer_options["release"]["mean_interval_s"],
        t_max_s=cfg.tracer_options["t_max_s"],
        cfl=cfg.tracer_options["cfl"],
    )
    spec = sweep_mod.SweepSpec(
        base=base,
        parameter=sw["parameter"],
        values=tuple(sw["values"]),
        n_particles=sw["n_particles"],
        seed=cfg.tracer_options["seed"],
        replicates=sw["replicates"],
    )
    if sw["expect"] is not None:
        expect = sweep_mod.TrendExpectation(**sw["expect"])
    else:
        expect = sweep_mod.DEFAULT_EXPECTATIONS.get(sw["parameter"])
    return spec, expect


def _cmd_sweep(cfg: RunConfig, out_dir: str, workers: int) -> list[str]:
    spec, expect = _sweep_spec(cfg)
    result = sweep_mod.run_sweep(spec, workers=workers)
    paths = emit_plotdata(result, "sweep", out_dir, cfg)
    if expect is not None:
        report = sweep_mod.check_trends(result, expect)
        paths.append(_emit(out_dir, "trend_report.txt", cfg,
                           lambda fh: sweep_mod.write_trend_report(fh, report)))
    return paths


def _cmd_impedance(cfg: RunConfig, out_dir: str, workers: int) -> list[str]:
    freqs = np.asarray(cfg.impedance_options["frequencies_hz"], dtype=float)
    empty, named = _species_spectra(cfg, cfg.species, freqs)
    paths = emit_plotdata([("empty", empty)], "spectrum", out_dir, cfg)
    paths += emit_plotdata(named, "spectrum", out_dir, cfg)
    return paths


def _cmd_classify(cfg: RunConfig, out_dir: str, workers: int) -> list[str]:
    im = cfg.impedance_options
    h = im["resolution_um"]
    band = (float(im["band_hz"][0]), float(im["band_hz"][1]))
    freqs = np.asarray(im["classify_frequencies_hz"], dtype=float)
    ctc_names = set(im["ctc_species"])

    particles = _sample(cfg)
    domain = _empty_domain(cfg)
    empty = impedance.spectrum(domain, freqs, h_um=h)
    samples = []
    cache: dict = {}
    for p in particles:
        key = (p.diameter_um, p.species.conductivity_s_per_m, p.species.permittivity_rel)
        spec = cache.get(key)
        if spec is None:
            mat = impedance.DielectricMaterial(
                conductivity_s_per_m=p.species.conductivity_s_per_m,
                permittivity_rel=p.species.permittivity_rel,
            )
            dom = replace(domain, inclusion=_inclusion_for(cfg, p.diameter_um, mat))
            spec = impedance.normalized(impedance.spectrum(dom, freqs, h_um=h), empty)
            cache[key] = spec
        samples.append(impedance.LabeledSample(
            sample_id=f"cell{p.index:03d}",
            species=p.species.name,
            spectrum=spec,
            truth="CTC" if p.species.name in ctc_names else "WBC",
        ))
    results = impedance.classify(samples, band)
    return [_emit(out_dir, "classification.csv", cfg,
                  lambda fh: impedance.write_classification_csv(fh, results))]


def _cmd_report(cfg: RunConfig, out_dir: str, workers: int) -> list[str]:
    """Figure-data bundle: focusing traces, per-species spectra, the
    CTC-vs-CTC comparison when two such species are configured, and the
    sweep trend report when a sweep block is present."""
    paths = []
    notes = []

    trajectories = _trace(cfg)
    paths += emit_plotdata(trajectories, "trajectories", out_dir, cfg, prefix="report_")
    m = metrics_mod.compute_metrics(trajectories, cfg.geometry)
    dx = "n/a" if m.dx_min_um is None else f"{m.dx_min_um:.6g} um"
    notes.append(
        f"focusing: dy_max {m.dy_max_um:.6g} um, dx_min {dx}, T {m.t_s:.6g} s"
    )

    freqs = np.asarray(cfg.impedance_options["frequencies_hz"], dtype=float)
    _, named = _species_spectra(cfg, cfg.species, freqs)
    paths += emit_plotdata(named, "spectrum", out_dir, cfg, prefix="report_")
    notes.append("spectra: " + ", ".join(name for name, _ in named))

    ctc_names = set(cfg.impedance_options["ctc_species"])
    ctcs = [(n, s) for n, s in named if n in ctc_names]
    if len(ctcs) >= 2:
        def comparison(fh, pairs=ctcs):
            fh.write("freq_hz," + ",".join(f"n_abs_{_slug(n)}" for n, _ in pairs) + "\n")
            for k, f in enumerate(freqs):
                cells = ",".join(repr(float(s.n_abs[k])) for _, s in pairs)
                fh.write(f"{float(f)!r},{cells}\n")
        paths.append(_emit(out_dir, "report_ctc_comparison.csv", cfg, comparison))
        notes.append("ctc comparison: " + " vs ".join(n for n, _ in ctcs))
    else:
        notes.append(
            "ctc comparison: skipped (needs two configured CTC species; "
            "add a second entry with its dielectric properties to enable it)"
        )

    if cfg.sweep_options is not None:
        spec, expect = _sweep_spec(cfg)
        result = sweep_mod.run_sweep(spec, workers=workers)
        paths += emit_plotdata(result, "sweep", out_dir, cfg, prefix="report_")
        if expect is not None:
            report = sweep_mod.check_trends(result, expect)
            paths.append(_emit(out_dir, "report_trends.txt", cfg,
                               lambda fh: sweep_mod.write_trend_report(fh, report)))
            notes.append(
                "trend check: " + ("PASS" if report.passed else "FAIL")
            )
    else:
        notes.append("sweep: skipped (no sweep block configured)")

    paths.append(_emit(out_dir, "report.txt", cfg,
                       lambda fh: fh.write("".join(line + "\n" for line in notes))))
    return paths


_COMMANDS = {
    "flow": (_cmd_flow, "solve the channel flow and dump the field"),
    "trace": (_cmd_trace, "release a population and record trajectories and metrics"),
    "sweep": (_cmd_sweep, "sweep one design parameter and check metric trends"),
    "impedance": (_cmd_impedance, "render per-species impedance spectra"),
    "classify": (_cmd_classify, "label a mixed population from its spectra"),
    "report": (_cmd_report, "bundle plot-ready data for traces, spectra and sweeps"),
}


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cytofocus",
        description="hydrodynamic-focusing impedance cytometer simulator",
    )
    parser.add_argument(
        "--version", action="version", version=f"cytofocus {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in _COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, metavar="PATH",
                        help="run configuration (JSON)")
        sp.add_argument("--out", default="./out", metavar="DIR",
                        help="output directory (default ./out)")
        sp.add_argument("--seed", type=int, default=None, metavar="N",
                        help="override the configured master seed")
        sp.add_argument("--resolution", type=float, default=None, metavar="H_UM",
                        help="override the grid spacing in micrometers")
        sp.add_argument("--workers", type=int, default=1, metavar="K",
                        help="parallel workers for sweep points (default 1)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.workers < 1:
        raise InputError(f"--workers must be >= 1, got {args.workers}")
    cfg = parse_config(
        args.config, seed_override=args.seed, resolution_override=args.resolution
    )
    os.makedirs(args.out, exist_ok=True)
    paths = _COMMANDS[args.command][0](cfg, args.out, args.workers)
    paths.append(_write_echo(args.out, cfg))
    for path in paths:
        print(f"wrote {path}")
    return 0


def entry(argv=None) -> int:
    """Console-script entry point mapping errors to exit codes."""
    try:
        return main(argv)
    except SystemExit as exc:  # argparse help (0) or usage error (2)
        code = exc.code if isinstance(exc.code, int) else 0
        return 1 if code == 2 else code
    except SolverError as exc:
        print(f"cytofocus: {exc}", file=sys.stderr)
        return 2
    except CytofocusError as exc:
        print(f"cytofocus: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entry())
