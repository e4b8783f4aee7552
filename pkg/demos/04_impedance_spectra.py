"""Impedance spectra of the sensing zone, with and without a cell.

A pair of facing electrodes drives a current through the channel; a cell
between them perturbs the impedance.  The relative change N(f) is the
measurable signature: it grows with cell size and depends on the cell's
electrical properties, which is what separates tumor cells from blood cells.

Run:  python3 demos/04_impedance_spectra.py
"""

import os
import time

import numpy as np

from cytofocus import impedance

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")

CELLS = {
    # diameter (um), conductivity (S/m), relative permittivity
    "lymphocyte": (6.58, 0.6, 60.0),
    "neutrophil": (9.42, 0.6, 60.0),
    "MCF-7": (18.0, 4.0, 50.0),
}


def main():
    freqs = np.concatenate([[0.0], np.logspace(4, 7, 25)])
    empty_domain = impedance.DielectricDomain()  # 500 x 50 um, 15 um electrodes
    print("sweeping 26 frequencies, DC to 10 MHz ...")
    start = time.perf_counter()
    empty = impedance.spectrum(empty_domain, freqs)
    spectra = {}
    for name, (d, sigma, eps) in CELLS.items():
        domain = impedance.DielectricDomain(
            inclusion=impedance.Inclusion(
                250.0, 25.0, d, impedance.DielectricMaterial(sigma, eps)
            )
        )
        spectra[name] = impedance.normalized(impedance.spectrum(domain, freqs), empty)
    print(f"4 spectra in {time.perf_counter() - start:.1f} s")

    print(f"\nempty channel: |Z| = {empty.abs_z_ohm[0]:.0f} ohm at DC, "
          f"{empty.abs_z_ohm[-1]:.0f} ohm at 10 MHz")
    print(f"{'cell':>12} {'|Z| at 1MHz':>14} {'band-mean N':>12}")
    for name, spec in spectra.items():
        k = int(np.argmin(np.abs(freqs - 1e6)))
        n = impedance.band_mean(spec, (1e5, 1e7))
        print(f"{name:>12} {spec.abs_z_ohm[k]:>14.0f} {n:>12.5f}")

    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping the figure")
        return

    os.makedirs(OUT, exist_ok=True)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.loglog(freqs[1:], empty.abs_z_ohm[1:], "k--", label="empty")
    for name, spec in spectra.items():
        ax1.loglog(freqs[1:], spec.abs_z_ohm[1:], label=name)
    ax1.set_xlabel("frequency (Hz)")
    ax1.set_ylabel("|Z| (ohm)")
    ax1.legend()
    for name, spec in spectra.items():
        ax2.semilogx(freqs[1:], spec.n_abs[1:], label=name)
    ax2.set_xlabel("frequency (Hz)")
    ax2.set_ylabel("N(f) = | d|Z| | / |Z_empty|")
    ax2.legend()
    fig.suptitle("sensing-zone impedance")
    path = os.path.join(OUT, "04_spectra.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    print(f"figure saved to {path}")


if __name__ == "__main__":
    main()
