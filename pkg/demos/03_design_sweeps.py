"""Sweep design parameters and rank the candidate operating points.

Each sweep holds the rest of the design fixed and varies one knob: the
sheath speed V2 here (the junction position X1 and channel width Y work the
same way).  Trends are checked against the expected directions, and a
weighted score picks a compromise design from the rows.

Run:  python3 demos/03_design_sweeps.py
"""

import sys
import time

from cytofocus import sweep


def main():
    base = sweep.BaseCase(v1_um_per_s=500.0)  # 50 um channel, junction mid-length
    spec = sweep.SweepSpec(
        base=base,
        parameter="V2",
        values=[1_000.0, 1_500.0, 2_000.0, 3_000.0, 5_000.0],
    )
    start = time.perf_counter()
    result = sweep.run_sweep(spec)
    print(f"{len(result.rows)} rows in {time.perf_counter() - start:.1f} s")

    print(f"\n{'V2':>8} {'dy_max':>8} {'dx_min':>8} {'T':>7}")
    for row in result.rows:
        m = row.metrics
        print(f"{row.param_value:>8g} {m.dy_max_um:>8.2f} {m.dx_min_um:>8.1f} {m.t_s:>7.2f}")

    report = sweep.check_trends(result, sweep.DEFAULT_EXPECTATIONS["V2"])
    print("\ntrends (faster sheath focuses tighter, spreads cells, flows quicker):")
    sweep.write_trend_report(sys.stdout, report)
    if not report.passed:
        raise SystemExit("unexpected trend — inspect the rows above")

    # favor tight focusing, then spacing; transit time is a tiebreaker
    best = sweep.select_design(
        result, weights={"dy_max_um": 0.5, "dx_min_um": 0.3, "t_s": 0.2}
    )
    print(f"\nselected operating point: V2 = {best.param_value:g} um/s "
          f"(dy_max {best.metrics.dy_max_um:.2f} um, "
          f"dx_min {best.metrics.dx_min_um:.1f} um, T {best.metrics.t_s:.2f} s)")

    # the bundled reference tables show the same directions
    for name, param in (("table4", "X1"), ("table6", "V2"), ("table7", "Y")):
        ref = sweep.check_trends(
            sweep.load_table_fixture(name), sweep.DEFAULT_EXPECTATIONS[param]
        )
        print(f"reference {name} ({param} axis): "
              f"{'consistent' if ref.passed else 'NOT consistent'}")


if __name__ == "__main__":
    main()
