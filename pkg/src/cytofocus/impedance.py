"""Electrical impedance of a channel cross-section with and without a cell.

The sensing region is a 2D slice of the channel: opposing electrodes
centered on the top and bottom walls, insulating walls elsewhere, filled
with a conductive medium and optionally one cell modeled as a homogeneous
disk.  Below ~10 MHz the field is electroquasistatic, so the potential
obeys div(sigma* grad phi) = 0 with the complex conductivity
sigma* = sigma + j 2 pi f eps0 eps_r.

The discretization is finite-volume on a uniform grid with harmonic face
averaging (flux-continuous across the cell boundary) and area-fraction
blending of the disk into boundary cells, which keeps impedance magnitudes
stable under grid refinement.  A depth factor converts the 2D sheet
solution to ohms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    EmptyBand,
    FrequencyMismatch,
    InputError,
    NoCalibration,
    ResolutionTooCoarse,
    SolverDiverged,
)

__all__ = [
    "EPS0_F_PER_M",
    "DielectricMaterial",
    "Inclusion",
    "DielectricDomain",
    "FieldSolution",
    "ImpedanceSpectrum",
    "ClassificationResult",
    "LabeledSample",
    "complex_conductivity",
    "solve_field",
    "impedance_of",
    "spectrum",
    "default_frequencies",
    "normalized",
    "band_mean",
    "classify",
    "write_spectrum_csv",
    "write_classification_csv",
]

EPS0_F_PER_M = 8.854e-12


@dataclass(frozen=True)
class DielectricMaterial:
    """Bulk conductivity (S/m) and relative permittivity of one material."""

    conductivity_s_per_m: float
    permittivity_rel: float

    def __post_init__(self):
        if self.conductivity_s_per_m < 0.0:
            raise InputError(
                f"conductivity_s_per_m must be >= 0, got {self.conductivity_s_per_m!r}"
            )
        if self.permittivity_rel < 1.0:
            raise InputError(f"permittivity_rel must be >= 1, got {self.permittivity_rel!r}")


# blood-plasma-like medium; assumed defaults, configurable
DEFAULT_MEDIUM = DielectricMaterial(conductivity_s_per_m=0.7, permittivity_rel=80.0)


@dataclass(frozen=True)
class Inclusion:
    """One cell, modeled as a homogeneous disk."""

    center_x_um: float
    center_y_um: float
    diameter_um: float
    material: DielectricMaterial

    def __post_init__(self):
        if not (self.diameter_um > 0.0):
            raise InputError(f"diameter_um must be positive, got {self.diameter_um!r}")


@dataclass(frozen=True)
class DielectricDomain:
    """Sensing-region geometry, drive and materials.

    ``electrode_width_um`` electrodes are centered on the top and bottom
    walls of a ``length_um`` x ``height_um`` slice; all other boundary is
    insulating.  ``depth_um`` is the out-of-plane extent used to convert
    the planar solution into ohms.
    """

    length_um: float = 500.0
    height_um: float = 50.0
    electrode_width_um: float = 15.0
    drive_voltage_v: float = 1.0
    depth_um: float = 50.0
    medium: DielectricMaterial = DEFAULT_MEDIUM
    inclusion: Inclusion | None = None

    def __post_init__(self):
        for name in ("length_um", "height_um", "electrode_width_um", "depth_um"):
            if not (getattr(self, name) > 0.0):
                raise InputError(f"{name} must be positive, got {getattr(self, name)!r}")
        if not (self.drive_voltage_v > 0.0):
            raise InputError(f"drive_voltage_v must be positive, got {self.drive_voltage_v!r}")
        if self.electrode_width_um > self.length_um:
            raise InputError(
                f"electrode_width_um={self.electrode_width_um!r} exceeds "
                f"length_um={self.length_um!r}"
            )
        inc = self.inclusion
        if inc is not None:
            r = 0.5 * inc.diameter_um
            if inc.diameter_um >= self.height_um:
                raise InputError(
                    f"inclusion diameter {inc.diameter_um!r} um must be smaller than "
                    f"the channel height {self.height_um!r} um"
                )
            if not (
                r < inc.center_x_um < self.length_um - r
                and r < inc.center_y_um < self.height_um - r
            ):
                raise InputError("inclusion must lie strictly inside the channel")


def complex_conductivity(material: DielectricMaterial, frequency_hz: float) -> complex:
    """sigma* = sigma + j 2 pi f eps0 eps_r, in S/m."""
    if frequency_hz < 0.0:
        raise InputError(f"frequency_hz must be >= 0, got {frequency_hz!r}")
    return complex(
        material.conductivity_s_per_m,
        2.0 * math.pi * frequency_hz * EPS0_F_PER_M * material.permittivity_rel,
    )


def _disk_fractions(nx: int, ny: int, h: float, inc: Inclusion) -> np.ndarray:
    """Area fraction of each grid cell covered by the disk, anti-aliased.

    Cells well inside or outside the disk are resolved by a center test;
    cells straddling the rim are subsampled on a 16x16 midpoint grid, which
    keeps the covered area (and hence the impedance) stable as h changes.
    """
    r = 0.5 * inc.diameter_um
    xc = (np.arange(nx) + 0.5) * h
    yc = (np.arange(ny) + 0.5) * h
    dx = xc[:, None] - inc.center_x_um
    dy = yc[None, :] - inc.center_y_um
    dist = np.hypot(dx, dy)
    half_diag = h * math.sqrt(0.5)
    frac = np.where(dist <= r - half_diag, 1.0, 0.0)
    rim = np.abs(dist - r) <= half_diag

    if np.any(rim):
        ii, jj = np.nonzero(rim)
        s = (np.arange(16) + 0.5) / 16.0 * h
        sx = s[:, None]
        sy = s[None, :]
        for i, j in zip(ii, jj):
            px = i * h + sx - inc.center_x_um
            py = j * h + sy - inc.center_y_um
            inside = (px * px + py * py) <= r * r
            frac[i, j] = inside.mean()
    return frac


@dataclass(frozen=True)
class FieldSolution:
    """Complex potential on the solve grid plus the electrode currents."""

    phi: np.ndarray
    h_um: float
    frequency_hz: float
    current_top_a: complex
    current_bottom_a: complex
    electrode_columns: np.ndarray


def solve_field(domain: DielectricDomain, frequency_hz: float, h_um: float) -> FieldSolution:
    """Solve div(sigma* grad phi) = 0 on the sensing slice at one frequency.

    The top electrode is driven at the domain voltage, the bottom one
    grounded, every other boundary carries no normal current.  ``h_um``
    must evenly divide both the slice length and height, resolve the
    electrode width at least six cells, and likewise the inclusion
    diameter when one is present.
    """
    if not (h_um > 0.0):
        raise InputError(f"h_um must be positive, got {h_um!r}")
    if h_um > domain.electrode_width_um / 6.0 + 1e-12:
        raise ResolutionTooCoarse(
            f"h_um={h_um!r} too coarse for a {domain.electrode_width_um!r} um electrode; "
            "need at least six cells across it"
        )
    if domain.inclusion is not None and h_um > domain.inclusion.diameter_um / 6.0 + 1e-12:
        raise ResolutionTooCoarse(
            f"h_um={h_um!r} too coarse for a {domain.inclusion.diameter_um!r} um inclusion; "
            "need at least six cells across it"
        )
    nx = round(domain.length_um / h_um)
    ny = round(domain.height_um / h_um)
    if abs(nx * h_um - domain.length_um) > 1e-6 * domain.length_um or abs(
        ny * h_um - domain.height_um
    ) > 1e-6 * domain.height_um:
        raise InputError(
            f"h_um={h_um!r} must evenly divide the slice "
            f"({domain.length_um!r} x {domain.height_um!r} um)"
        )

    sig_med = complex_conductivity(domain.medium, frequency_hz)
    real_case = frequency_hz == 0.0
    dtype = np.float64 if real_case else np.complex128
    sig = np.full((nx, ny), sig_med.real if real_case else sig_med, dtype=dtype)
    if domain.inclusion is not None:
        sig_inc = complex_conductivity(domain.inclusion.material, frequency_hz)
        frac = _disk_fractions(nx, ny, h_um, domain.inclusion)
        sig = sig + frac * ((sig_inc.real if real_case else sig_inc) - sig[0, 0])

    def harmonic(a, b):
        return 2.0 * a * b / (a + b)

    n_cells = nx * ny

    def cid(i, j):
        return i * ny + j

    rows, cols, vals = [], [], []
    diag = np.zeros(n_cells, dtype=dtype)
    b = np.zeros(n_cells, dtype=dtype)

    # interior faces
    sig_h = harmonic(sig[:-1, :], sig[1:, :])
    ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="ij")
    left = cid(ii, jj).ravel()
    right = cid(ii + 1, jj).ravel()
    f = sig_h.ravel()
    rows.extend([left, right])
    cols.extend([right, left])
    vals.extend([f, f])
    np.add.at(diag, left, -f)
    np.add.at(diag, right, -f)

    sig_v = harmonic(sig[:, :-1], sig[:, 1:])
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="ij")
    lower = cid(ii, jj).ravel()
    upper = cid(ii, jj + 1).ravel()
    f = sig_v.ravel()
    rows.extend([lower, upper])
    cols.extend([upper, lower])
    vals.extend([f, f])
    np.add.at(diag, lower, -f)
    np.add.at(diag, upper, -f)

    # electrode segments: Dirichlet a half cell beyond the wall cells
    x_lo = 0.5 * (domain.length_um - domain.electrode_width_um)
    x_hi = 0.5 * (domain.length_um + domain.electrode_width_um)
    centers = (np.arange(nx) + 0.5) * h_um
    e_cols = np.nonzero((centers > x_lo) & (centers < x_hi))[0]
    v0 = domain.drive_voltage_v

    top = cid(e_cols, ny - 1)
    f_top = 2.0 * sig[e_cols, ny - 1]
    np.add.at(diag, top, -f_top)
    b[top] -= f_top * v0

    bot = cid(e_cols, 0)
    f_bot = 2.0 * sig[e_cols, 0]
    np.add.at(diag, bot, -f_bot)
    # grounded: contributes nothing to b

    rows.append(np.arange(n_cells))
    cols.append(np.arange(n_cells))
    vals.append(diag)

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_cells, n_cells),
        dtype=dtype,
    ).tocsr()

    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            phi_flat = spla.spsolve(matrix, b)
        except (spla.MatrixRankWarning, RuntimeError) as exc:
            raise SolverDiverged(f"field solve failed at {frequency_hz:g} Hz: {exc}") from exc
    if not np.all(np.isfinite(phi_flat.view(np.float64))):
        raise SolverDiverged(f"field solve returned non-finite values at {frequency_hz:g} Hz")
    residual = np.linalg.norm(matrix @ phi_flat - b)
    scale = np.linalg.norm(b)
    if scale > 0.0 and residual > 1e-8 * scale:
        raise SolverDiverged(
            f"field solve residual {residual / scale:.3e} exceeds tolerance at "
            f"{frequency_hz:g} Hz"
        )

    phi = phi_flat.reshape(nx, ny)
    depth_m = domain.depth_um * 1e-6
    i_top = depth_m * np.sum(2.0 * sig[e_cols, ny - 1] * (v0 - phi[e_cols, ny - 1]))
    i_bot = depth_m * np.sum(2.0 * sig[e_cols, 0] * (phi[e_cols, 0] - 0.0))
    return FieldSolution(
        phi=phi,
        h_um=h_um,
        frequency_hz=frequency_hz,
        current_top_a=complex(i_top),
        current_bottom_a=complex(i_bot),
        electrode_columns=e_cols,
    )


def impedance_of(domain: DielectricDomain, frequency_hz: float, h_um: float) -> complex:
    """Z(f) = V0 / I(f), in ohms."""
    sol = solve_field(domain, frequency_hz, h_um)
    return domain.drive_voltage_v / sol.current_top_a


def default_frequencies() -> np.ndarray:
    """DC plus 50 logarithmic points from 10 kHz to 10 MHz."""
    return np.concatenate([[0.0], np.logspace(4.0, 7.0, 50)])


@dataclass(frozen=True)
class ImpedanceSpectrum:
    """Impedance per frequency; normalized values present after comparison
    against an empty-channel reference."""

    frequencies_hz: np.ndarray
    z_ohm: np.ndarray
    n_signed: np.ndarray | None = None
    n_abs: np.ndarray | None = None

    def __post_init__(self):
        f = np.asarray(self.frequencies_hz, dtype=float)
        if len(f) != len(self.z_ohm):
            raise InputError("frequency and impedance lists differ in length")
        if len(f) > 1 and np.any(np.diff(f) <= 0.0):
            raise InputError("frequencies must be strictly increasing")

    @property
    def abs_z_ohm(self) -> np.ndarray:
        return np.abs(self.z_ohm)


def spectrum(
    domain: DielectricDomain, frequencies_hz=None, h_um: float = 0.625
) -> ImpedanceSpectrum:
    """Impedance at every requested frequency (default: the standard sweep)."""
    if frequencies_hz is None:
        frequencies_hz = default_frequencies()
    freqs = np.asarray(frequencies_hz, dtype=float)
    z = np.array([impedance_of(domain, f, h_um) for f in freqs], dtype=complex)
    return ImpedanceSpectrum(frequencies_hz=freqs, z_ohm=z)


def normalized(with_cell: ImpedanceSpectrum, empty: ImpedanceSpectrum) -> ImpedanceSpectrum:
    """Relative impedance change caused by the cell.

    N(f) = | |Z_cell| - |Z_empty| | / |Z_empty|; the signed relative
    difference is retained alongside.  Both spectra must share the same
    frequency grid.
    """
    if len(with_cell.frequencies_hz) != len(empty.frequencies_hz) or np.any(
        with_cell.frequencies_hz != empty.frequencies_hz
    ):
        raise FrequencyMismatch("spectra were swept on different frequency grids")
    ref = empty.abs_z_ohm
    if np.any(ref == 0.0):
        raise InputError("empty-channel impedance vanishes; cannot normalize")
    signed = (with_cell.abs_z_ohm - ref) / ref
    return replace(with_cell, n_signed=signed, n_abs=np.abs(signed))


def band_mean(spec: ImpedanceSpectrum, band_hz: tuple[float, float]) -> float:
    """Mean of N(f) over the swept frequencies inside [lo, hi]."""
    if spec.n_abs is None:
        raise InputError("spectrum has no normalized values; compare against a reference first")
    lo, hi = band_hz
    if not (0.0 <= lo < hi):
        raise InputError(f"band must satisfy 0 <= lo < hi, got {band_hz!r}")
    mask = (spec.frequencies_hz >= lo) & (spec.frequencies_hz <= hi)
    if not np.any(mask):
        raise EmptyBand(f"no swept frequency falls inside [{lo:g}, {hi:g}] Hz")
    return float(np.mean(spec.n_abs[mask]))


@dataclass(frozen=True)
class LabeledSample:
    """One measured cell: its normalized spectrum plus identity labels.

    ``truth`` is "CTC" or "WBC" for calibration samples, None for unknowns.
    """

    sample_id: str
    species: str
    spectrum: ImpedanceSpectrum
    truth: str | None = None


@dataclass(frozen=True)
class ClassificationResult:
    sample_id: str
    species: str
    statistic: float
    threshold: float
    label: str


def classify(
    samples: list[LabeledSample],
    band_hz: tuple[float, float],
    threshold: float | None = None,
) -> list[ClassificationResult]:
    """Label each sample CTC or WBC by its band-mean normalized impedance.

    Without an explicit threshold, the labeled samples calibrate it as the
    midpoint between the largest WBC statistic and the smallest CTC
    statistic.
    """
    if not samples:
        return []
    stats = [band_mean(s.spectrum, band_hz) for s in samples]
    if threshold is None:
        ctc = [st for s, st in zip(samples, stats) if s.truth == "CTC"]
        wbc = [st for s, st in zip(samples, stats) if s.truth == "WBC"]
        if not ctc or not wbc:
            raise NoCalibration(
                "no threshold given and the samples do not include both labeled "
                "CTC and labeled WBC calibration data"
            )
        threshold = 0.5 * (max(wbc) + min(ctc))
    return [
        ClassificationResult(
            sample_id=s.sample_id,
            species=s.species,
            statistic=st,
            threshold=threshold,
            label="CTC" if st > threshold else "WBC",
        )
        for s, st in zip(samples, stats)
    ]


def write_spectrum_csv(fh, spec: ImpedanceSpectrum) -> None:
    fh.write("freq_hz,re_z_ohm,im_z_ohm,abs_z_ohm,n_signed,n_abs\n")
    absz = spec.abs_z_ohm
    for k, f in enumerate(spec.frequencies_hz):
        ns = "" if spec.n_signed is None else repr(float(spec.n_signed[k]))
        na = "" if spec.n_abs is None else repr(float(spec.n_abs[k]))
        fh.write(
            f"{float(f)!r},{float(spec.z_ohm[k].real)!r},{float(spec.z_ohm[k].imag)!r},"
            f"{float(absz[k])!r},{ns},{na}\n"
        )


def write_classification_csv(fh, results: list[ClassificationResult]) -> None:
    fh.write("sample_id,species,band_mean_n,threshold,label\n")
    for r in results:
        fh.write(f"{r.sample_id},{r.species},{r.statistic!r},{r.threshold!r},{r.label}\n")
