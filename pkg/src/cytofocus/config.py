"""Run configuration: a single JSON file drives every pipeline stage.

Every physical quantity carries an explicit unit suffix in its key name
(``*_um``, ``*_um_per_s``, ``*_pa_s``, ``*_hz``, ...) so that mixed-unit
mistakes surface as unknown keys instead of silent misreads.  Unknown keys
anywhere in the tree are rejected; omitted keys take the documented
defaults; the fully resolved configuration (every default materialized) is
echoed next to the outputs, and its hash stamps every output file.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import flow, geometry, impedance, sweep as sweep_mod, tracer
from .errors import ConfigSyntaxError, ConfigValidationError, InputError, UnknownKey

__all__ = ["RunConfig", "parse_config", "default_config", "resolved_hash"]


def _species_entry(sp: tracer.CellSpecies, fraction: float | None = None) -> dict:
    return {
        "name": sp.name,
        "density_lo_g_ml": sp.density_lo_g_ml,
        "density_hi_g_ml": sp.density_hi_g_ml,
        "diameter_mean_um": sp.diameter_mean_um,
        "diameter_sd_um": sp.diameter_sd_um,
        "fraction": sp.fraction if fraction is None else fraction,
        "conductivity_s_per_m": sp.conductivity_s_per_m,
        "permittivity_rel": sp.permittivity_rel,
    }


def default_config() -> dict:
    """The complete default configuration tree."""
    return {
        "geometry": {
            "main_width_um": 50.0,
            "main_length_um": 10_000.0,
            "junction_position_um": 5_000.0,
            "electrode_position_um": None,
            "sheath_angle_deg": 30.0,
            "side_width_um": None,
            "side_length_um": None,
            "resolution_um": None,
            "v1_um_per_s": 500.0,
            "v2_um_per_s": 5_000.0,
        },
        "fluid": {
            "density_kg_m3": 1060.0,
            "viscosity_pa_s": 3.5e-3,
        },
        "species": [
            _species_entry(tracer.LYMPHOCYTE),
            _species_entry(tracer.MONOCYTE),
            _species_entry(tracer.NEUTROPHIL),
            _species_entry(tracer.MCF7, fraction=0.25),
        ],
        "tracer": {
            "n_particles": 60,
            "seed": 0,
            "mode": "massless",
            "dt_s": None,
            "t_max_s": 600.0,
            "cfl": 0.5,
            "release": {
                "mode": "batch",
                "mean_interval_s": 0.2,
            },
        },
        "impedance": {
            "length_um": 500.0,
            "height_um": 50.0,
            "electrode_width_um": 15.0,
            "depth_um": 50.0,
            "drive_voltage_v": 1.0,
            "resolution_um": 0.625,
            "medium": {
                "conductivity_s_per_m": 0.7,
                "permittivity_rel": 80.0,
            },
            "cell_position": {
                "x_um": None,
                "y_um": None,
            },
            "frequencies_hz": None,
            "classify_frequencies_hz": None,
            "band_hz": [1e5, 1e7],
            "ctc_species": ["MCF-7", "MDA-MB-231"],
        },
        "sweep": None,
    }


_SWEEP_DEFAULTS = {
    "parameter": None,
    "values": None,
    "n_particles": 60,
    "replicates": 1,
    "release_mode": "ladder",
    "expect": None,
}

_EXPECT_DEFAULTS = {
    "dy_max_um": "NONE",
    "dx_min_um": "NONE",
    "t_s": "NONE",
}


def _check_keys(node, template, path: str) -> None:
    """Reject keys that the template tree does not know, recursively."""
    if isinstance(template, dict) and isinstance(node, dict):
        for key, value in node.items():
            if key not in template:
                where = f"{path}.{key}" if path else key
                raise UnknownKey(f"unknown configuration key {where!r}")
            sub_template = template[key]
            # dict templates are checked recursively; None templates mark
            # slots whose shape is validated elsewhere (sweep, species)
            if isinstance(sub_template, dict) and isinstance(value, dict):
                _check_keys(value, sub_template, f"{path}.{key}" if path else key)


def _merge(defaults: dict, override: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolved_hash(resolved: dict) -> str:
    """Stable hash of a fully resolved configuration tree."""
    canon = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class RunConfig:
    """Validated, fully materialized run configuration.

    ``resolved`` is the plain-data echo of everything below (defaults
    included); ``sha256`` is its stable hash, stamped on output files.
    """

    geometry: geometry.ChannelGeometry
    resolution_um: float
    # False when resolution_um came from the width/16 default; sweeps over
    # the channel width then rescale the grid per point instead of reusing it
    resolution_explicit: bool
    # geometry keys the user set explicitly (electrode position, side
    # channel dimensions); sweeps keep unset ones tracking the swept width
    geometry_overrides: dict
    v1_um_per_s: float
    v2_um_per_s: float
    fluid: flow.FluidProperties
    species: list[tracer.CellSpecies]
    tracer_options: dict
    impedance_options: dict
    sweep_options: dict | None
    resolved: dict
    sha256: str


def _validate_sweep_block(block: dict) -> dict:
    for key in block:
        if key == "expect":
            if block[key] is not None:
                for mkey in block[key]:
                    if mkey not in _EXPECT_DEFAULTS:
                        raise UnknownKey(f"unknown configuration key 'sweep.expect.{mkey}'")
            continue
        if key not in _SWEEP_DEFAULTS:
            raise UnknownKey(f"unknown configuration key 'sweep.{key}'")
    merged = dict(_SWEEP_DEFAULTS, **block)
    if merged["expect"] is not None:
        merged["expect"] = dict(_EXPECT_DEFAULTS, **merged["expect"])
    if merged["parameter"] is None:
        raise ConfigValidationError("sweep.parameter is required when a sweep block is given")
    if not merged["values"]:
        raise ConfigValidationError("sweep.values must be a non-empty list")
    return merged


def parse_config(path: str, seed_override: int | None = None,
                 resolution_override: float | None = None) -> RunConfig:
    """Load, validate and materialize a configuration file.

    Raises ConfigSyntaxError (with line and column) for malformed JSON,
    UnknownKey for any key the schema does not define, and
    ConfigValidationError / InputError naming the offending field for
    value constraints.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read configuration file {path!r}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(exc.msg, line=exc.lineno, column=exc.colno) from exc
    if not isinstance(raw, dict):
        raise ConfigValidationError("configuration root must be an object")

    defaults = default_config()
    _check_keys(raw, defaults, "")
    # species is a list of objects with its own schema
    if "species" in raw:
        if not isinstance(raw["species"], list) or not raw["species"]:
            raise ConfigValidationError("species must be a non-empty list")
        template = _species_entry(tracer.LYMPHOCYTE)
        for k, entry in enumerate(raw["species"]):
            if not isinstance(entry, dict):
                raise ConfigValidationError(f"species[{k}] must be an object")
            for key in entry:
                if key not in template:
                    raise UnknownKey(f"unknown configuration key 'species[{k}].{key}'")
            for key in ("name", "diameter_mean_um", "fraction"):
                if key not in entry:
                    raise ConfigValidationError(f"species[{k}].{key} is required")

    merged = _merge(defaults, raw)
    if "species" in raw:
        merged["species"] = copy.deepcopy(raw["species"])
        wbc_defaults = {
            "diameter_sd_um": 0.0,
            "density_lo_g_ml": 1.05,
            "density_hi_g_ml": 1.09,
            "conductivity_s_per_m": tracer._WBC_SIGMA_S_PER_M,
            "permittivity_rel": tracer._WBC_EPS_REL,
        }
        merged["species"] = [dict(wbc_defaults, **entry) for entry in merged["species"]]
    if raw.get("sweep") is not None:
        merged["sweep"] = _validate_sweep_block(raw["sweep"])

    if seed_override is not None:
        merged["tracer"]["seed"] = int(seed_override)
    if resolution_override is not None:
        merged["geometry"]["resolution_um"] = float(resolution_override)

    g = merged["geometry"]
    raw_geom = raw.get("geometry") if isinstance(raw.get("geometry"), dict) else {}
    resolution_explicit = (
        resolution_override is not None or raw_geom.get("resolution_um") is not None
    )
    geometry_overrides = {
        key: raw_geom[key]
        for key in ("electrode_position_um", "side_width_um", "side_length_um")
        if raw_geom.get(key) is not None
    }
    try:
        geom = geometry.build_geometry(
            main_width_um=g["main_width_um"],
            main_length_um=g["main_length_um"],
            junction_position_um=g["junction_position_um"],
            electrode_position_um=g["electrode_position_um"],
            sheath_angle_deg=g["sheath_angle_deg"],
            side_width_um=g["side_width_um"],
            side_length_um=g["side_length_um"],
        )
    except InputError as exc:
        raise ConfigValidationError(f"geometry: {exc}") from exc
    resolution = g["resolution_um"]
    if resolution is None:
        resolution = geom.main_width_um / 16.0
    if not (resolution > 0.0):
        raise ConfigValidationError(
            f"geometry.resolution_um must be positive, got {resolution!r}"
        )
    if not (g["v1_um_per_s"] > 0.0):
        raise ConfigValidationError(
            f"geometry.v1_um_per_s must be positive, got {g['v1_um_per_s']!r}"
        )
    if g["v2_um_per_s"] < 0.0:
        raise ConfigValidationError(
            f"geometry.v2_um_per_s must be >= 0, got {g['v2_um_per_s']!r}"
        )

    try:
        fluid = flow.FluidProperties(
            density_kg_m3=merged["fluid"]["density_kg_m3"],
            viscosity_pa_s=merged["fluid"]["viscosity_pa_s"],
        )
    except InputError as exc:
        raise ConfigValidationError(f"fluid: {exc}") from exc

    species = []
    for k, entry in enumerate(merged["species"]):
        try:
            species.append(tracer.CellSpecies(**entry))
        except (InputError, TypeError) as exc:
            raise ConfigValidationError(f"species[{k}]: {exc}") from exc

    tr = merged["tracer"]
    if tr["mode"] not in ("massless", "inertial"):
        raise ConfigValidationError(
            f"tracer.mode must be 'massless' or 'inertial', got {tr['mode']!r}"
        )
    if tr["mode"] == "inertial" and tr["dt_s"] is None:
        raise ConfigValidationError("tracer.dt_s is required for inertial mode")
    if not (isinstance(tr["n_particles"], int) and tr["n_particles"] > 0):
        raise ConfigValidationError(
            f"tracer.n_particles must be a positive integer, got {tr['n_particles']!r}"
        )
    if tr["release"]["mode"] not in ("batch", "poisson", "ladder"):
        raise ConfigValidationError(
            f"tracer.release.mode must be 'batch', 'poisson' or 'ladder', "
            f"got {tr['release']['mode']!r}"
        )

    im = merged["impedance"]
    try:
        impedance.DielectricMaterial(
            conductivity_s_per_m=im["medium"]["conductivity_s_per_m"],
            permittivity_rel=im["medium"]["permittivity_rel"],
        )
    except InputError as exc:
        raise ConfigValidationError(f"impedance.medium: {exc}") from exc
    band = im["band_hz"]
    if (
        not isinstance(band, (list, tuple))
        or len(band) != 2
        or not (0.0 <= float(band[0]) < float(band[1]))
    ):
        raise ConfigValidationError(
            f"impedance.band_hz must be [lo, hi] with 0 <= lo < hi, got {band!r}"
        )

    # materialize derived defaults into the echo
    g["electrode_position_um"] = geom.electrode_position_um
    g["side_width_um"] = geom.side_width_um
    g["side_length_um"] = geom.side_length_um
    g["resolution_um"] = resolution
    if im["cell_position"]["x_um"] is None:
        im["cell_position"]["x_um"] = im["length_um"] / 2.0
    if im["cell_position"]["y_um"] is None:
        im["cell_position"]["y_um"] = im["height_um"] / 2.0
    if im["frequencies_hz"] is None:
        im["frequencies_hz"] = [float(f) for f in impedance.default_frequencies()]
    if im["classify_frequencies_hz"] is None:
        # band-mean statistics only need in-band support; a short log grid
        # keeps per-sample classification affordable
        lo, hi = float(band[0]), float(band[1])
        if lo <= 0.0:
            lo = hi / 1e2
        im["classify_frequencies_hz"] = [
            float(f) for f in np.geomspace(lo, hi, 9)
        ]

    return RunConfig(
        geometry=geom,
        resolution_um=resolution,
        resolution_explicit=resolution_explicit,
        geometry_overrides=geometry_overrides,
        v1_um_per_s=float(g["v1_um_per_s"]),
        v2_um_per_s=float(g["v2_um_per_s"]),
        fluid=fluid,
        species=species,
        tracer_options=tr,
        impedance_options=im,
        sweep_options=merged["sweep"],
        resolved=merged,
        sha256=resolved_hash(merged),
    )
