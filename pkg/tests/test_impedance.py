"""Electrical model: complex conductivity, field solves, spectra, labeling."""

import io
import math

import numpy as np
import pytest
from dataclasses import replace

from cytofocus import impedance
from cytofocus.errors import (
    EmptyBand,
    FrequencyMismatch,
    InputError,
    NoCalibration,
    ResolutionTooCoarse,
)

MEDIUM = impedance.DielectricMaterial(conductivity_s_per_m=0.7, permittivity_rel=80.0)
MCF7_MATERIAL = impedance.DielectricMaterial(conductivity_s_per_m=4.0, permittivity_rel=50.0)


def _plate(**kwargs):
    """Full-width electrodes: the field is one-dimensional and analytic."""
    args = dict(
        length_um=500.0, height_um=50.0, electrode_width_um=500.0,
        drive_voltage_v=1.0, depth_um=50.0, medium=MEDIUM,
    )
    args.update(kwargs)
    return impedance.DielectricDomain(**args)


def _sensing(**kwargs):
    """Small sensing slice with 15 um electrodes, cheap to solve."""
    args = dict(
        length_um=120.0, height_um=50.0, electrode_width_um=15.0,
        drive_voltage_v=1.0, depth_um=50.0, medium=MEDIUM,
    )
    args.update(kwargs)
    return impedance.DielectricDomain(**args)


# ---------------------------------------------------------------------------
# materials
# ---------------------------------------------------------------------------


def test_complex_conductivity_oracles():
    # sigma + j 2 pi f eps0 eps_r
    s = impedance.complex_conductivity(MCF7_MATERIAL, 1e7)
    assert s.real == pytest.approx(4.0, rel=1e-12)
    assert s.imag == pytest.approx(2.0 * math.pi * 1e7 * 8.854e-12 * 50.0, rel=1e-12)
    s80 = impedance.complex_conductivity(MEDIUM, 1e6)
    assert s80.imag == pytest.approx(4.450505816781444e-3, rel=1e-9)
    dc = impedance.complex_conductivity(MEDIUM, 0.0)
    assert dc == 0.7 + 0.0j


def test_material_validation():
    with pytest.raises(InputError):
        impedance.DielectricMaterial(conductivity_s_per_m=-0.1, permittivity_rel=80.0)
    with pytest.raises(InputError):
        impedance.DielectricMaterial(conductivity_s_per_m=0.7, permittivity_rel=0.5)
    with pytest.raises(InputError):
        impedance.complex_conductivity(MEDIUM, -1.0)


# ---------------------------------------------------------------------------
# field solves
# ---------------------------------------------------------------------------


def test_parallel_plate_matches_analytic():
    # Z = g / (sigma* L D); uniform medium between full-width electrodes
    domain = _plate()
    for f in (0.0, 1e5, 1e7):
        z = impedance.impedance_of(domain, f, h_um=2.5)
        sig = impedance.complex_conductivity(MEDIUM, f)
        expected = 50e-6 / (sig * 500e-6 * 50e-6)
        assert abs(z) == pytest.approx(abs(expected), rel=1e-9)
    z0 = impedance.impedance_of(domain, 0.0, h_um=2.5)
    assert z0.imag == 0.0


def test_current_is_conserved():
    sol = impedance.solve_field(
        _sensing(inclusion=impedance.Inclusion(50.0, 20.0, 12.0, MCF7_MATERIAL)),
        1e6, h_um=1.25,
    )
    assert abs(sol.current_top_a - sol.current_bottom_a) <= 1e-9 * abs(sol.current_top_a)


def test_mirror_symmetric_inclusions_give_equal_impedance():
    left = _sensing(inclusion=impedance.Inclusion(40.0, 25.0, 12.0, MCF7_MATERIAL))
    right = _sensing(inclusion=impedance.Inclusion(80.0, 25.0, 12.0, MCF7_MATERIAL))
    zl = impedance.impedance_of(left, 1e6, h_um=1.25)
    zr = impedance.impedance_of(right, 1e6, h_um=1.25)
    assert abs(zl) == pytest.approx(abs(zr), rel=1e-9)


def test_matched_inclusion_is_invisible():
    empty = _sensing()
    matched = _sensing(inclusion=impedance.Inclusion(60.0, 25.0, 12.0, MEDIUM))
    ze = impedance.impedance_of(empty, 1e6, h_um=1.25)
    zm = impedance.impedance_of(matched, 1e6, h_um=1.25)
    assert abs(zm - ze) <= 1e-12 * abs(ze)


def test_larger_cell_perturbs_more():
    empty = abs(impedance.impedance_of(_sensing(), 1e6, h_um=1.25))
    n = []
    for d in (12.0, 18.0):
        dom = _sensing(inclusion=impedance.Inclusion(60.0, 25.0, d, MCF7_MATERIAL))
        z = abs(impedance.impedance_of(dom, 1e6, h_um=1.25))
        n.append(abs(z - empty) / empty)
    assert n[1] > n[0] > 0.0


def test_resolution_preconditions():
    with pytest.raises(ResolutionTooCoarse):
        impedance.solve_field(_sensing(), 0.0, h_um=3.0)  # > electrode width / 6
    with pytest.raises(ResolutionTooCoarse):
        impedance.solve_field(
            _sensing(inclusion=impedance.Inclusion(60.0, 25.0, 12.0, MCF7_MATERIAL)),
            0.0, h_um=2.5,  # fine for the electrode but > diameter / 6
        )
    with pytest.raises(InputError):
        impedance.solve_field(_plate(), 0.0, h_um=0.7)  # does not divide 500
    with pytest.raises(InputError):
        impedance.solve_field(_sensing(), 0.0, h_um=-1.0)


def test_domain_validation():
    with pytest.raises(InputError):
        _sensing(inclusion=impedance.Inclusion(60.0, 25.0, 50.0, MCF7_MATERIAL))
    with pytest.raises(InputError):
        _sensing(inclusion=impedance.Inclusion(5.0, 25.0, 12.0, MCF7_MATERIAL))
    with pytest.raises(InputError):
        _plate(electrode_width_um=600.0)
    with pytest.raises(InputError):
        _plate(height_um=0.0)


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def test_default_frequencies_shape():
    f = impedance.default_frequencies()
    assert len(f) == 51
    assert f[0] == 0.0
    assert f[1] == pytest.approx(1e4)
    assert f[-1] == pytest.approx(1e7)
    assert np.all(np.diff(f) > 0.0)


def test_spectrum_requires_increasing_frequencies():
    with pytest.raises(InputError):
        impedance.spectrum(_plate(), [1e6, 1e5], h_um=2.5)


def test_normalized_spectrum_values():
    freqs = np.array([1e5, 1e6])
    empty = impedance.ImpedanceSpectrum(
        frequencies_hz=freqs, z_ohm=np.array([100.0 + 0j, 200.0 + 0j])
    )
    cell = impedance.ImpedanceSpectrum(
        frequencies_hz=freqs, z_ohm=np.array([90.0 + 0j, 220.0 + 0j])
    )
    out = impedance.normalized(cell, empty)
    assert out.n_signed == pytest.approx([-0.1, 0.1])
    assert out.n_abs == pytest.approx([0.1, 0.1])
    with pytest.raises(FrequencyMismatch):
        impedance.normalized(
            cell,
            impedance.ImpedanceSpectrum(
                frequencies_hz=np.array([1e5, 2e6]),
                z_ohm=np.array([100.0 + 0j, 200.0 + 0j]),
            ),
        )


def _synthetic(n_abs_values, freqs=None):
    freqs = np.asarray([1e5, 1e6, 1e7] if freqs is None else freqs, dtype=float)
    vals = np.asarray(n_abs_values, dtype=float)
    return impedance.ImpedanceSpectrum(
        frequencies_hz=freqs,
        z_ohm=np.ones(len(freqs), dtype=complex),
        n_signed=vals.copy(),
        n_abs=vals,
    )


def test_band_mean():
    spec = _synthetic([1.0, 2.0, 3.0])
    assert impedance.band_mean(spec, (5e5, 2e7)) == pytest.approx(2.5)
    assert impedance.band_mean(spec, (1e5, 1e7)) == pytest.approx(2.0)
    with pytest.raises(EmptyBand):
        impedance.band_mean(spec, (1.0, 10.0))
    with pytest.raises(InputError):
        impedance.band_mean(spec, (1e7, 1e5))
    bare = impedance.ImpedanceSpectrum(
        frequencies_hz=np.array([1e5]), z_ohm=np.array([1.0 + 0j])
    )
    with pytest.raises(InputError):
        impedance.band_mean(bare, (1e4, 1e6))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------


def _sample(sid, species, value, truth):
    return impedance.LabeledSample(
        sample_id=sid, species=species,
        spectrum=_synthetic([value], freqs=[1e6]), truth=truth,
    )


def test_threshold_calibrates_to_the_midpoint():
    samples = [
        _sample("w1", "lymphocyte", 1.0, "WBC"),
        _sample("w2", "neutrophil", 2.0, "WBC"),
        _sample("c1", "MCF-7", 8.0, "CTC"),
        _sample("c2", "MCF-7", 10.0, "CTC"),
        _sample("u1", "unknown", 9.0, None),
        _sample("u2", "unknown", 0.5, None),
    ]
    results = impedance.classify(samples, (1e5, 1e7))
    assert all(r.threshold == 5.0 for r in results)
    labels = {r.sample_id: r.label for r in results}
    assert labels == {
        "w1": "WBC", "w2": "WBC", "c1": "CTC", "c2": "CTC", "u1": "CTC", "u2": "WBC"
    }


def test_explicit_threshold_skips_calibration():
    samples = [_sample("u1", "unknown", 4.0, None)]
    (res,) = impedance.classify(samples, (1e5, 1e7), threshold=3.0)
    assert res.label == "CTC"


def test_missing_calibration_class_raises():
    samples = [
        _sample("w1", "lymphocyte", 1.0, "WBC"),
        _sample("u1", "unknown", 9.0, None),
    ]
    with pytest.raises(NoCalibration):
        impedance.classify(samples, (1e5, 1e7))


def test_classify_empty_returns_empty():
    assert impedance.classify([], (1e5, 1e7)) == []


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------


def test_spectrum_csv_roundtrip():
    spec = impedance.spectrum(_plate(), [0.0, 1e6], h_um=2.5)
    buf = io.StringIO()
    impedance.write_spectrum_csv(buf, spec)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "freq_hz,re_z_ohm,im_z_ohm,abs_z_ohm,n_signed,n_abs"
    f, re_z, im_z, abs_z, ns, na = lines[1].split(",")
    assert float(f) == 0.0
    assert float(re_z) == spec.z_ohm[0].real
    assert float(im_z) == 0.0
    assert (ns, na) == ("", "")


def test_classification_csv():
    samples = [
        _sample("w1", "lymphocyte", 1.0, "WBC"),
        _sample("c1", "MCF-7", 9.0, "CTC"),
    ]
    results = impedance.classify(samples, (1e5, 1e7))
    buf = io.StringIO()
    impedance.write_classification_csv(buf, results)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "sample_id,species,band_mean_n,threshold,label"
    assert lines[1] == "w1,lymphocyte,1.0,5.0,WBC"
    assert lines[2] == "c1,MCF-7,9.0,5.0,CTC"
