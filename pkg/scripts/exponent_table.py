"""Fitted growth exponents of log C_lambda against the thickness prediction (delta/k + 1/m)/2.

Writes ``exponent_table.csv`` next to the current directory and prints the table.
"""

import csv

from shubin_lab.geometry import example_region
from shubin_lab.operator import ShubinParams, eigenbasis
from shubin_lab.spectral import constant_sweep, fit_exponent, theoretical_exponent

REGIONS = [("omega_zero", {}, 0.0, False), ("omega_delta", {"delta": 1 / 3}, 1 / 3, False),
           ("half_line", {}, 1.0, False), ("interval", {"a": 0.0, "b": 1.0}, 1.0, True)]


def main():
    rows = []
    for k, m in [(1, 1), (2, 1), (1, 2), (2, 2)]:
        basis = eigenbasis(ShubinParams(k, m), 256)
        lam = basis.eigenvalues[: basis.reliability_index()]
        for name, params, delta, log_factor in REGIONS:
            ser = constant_sweep(basis.params, example_region(name, params), lam, basis=basis,
                                 stop_on_ill_conditioned=True)
            e = theoretical_exponent(basis.params, delta)
            fit = fit_exponent(ser.lam, ser.C, e, log_factor=log_factor)
            rows.append([k, m, name, delta, e, fit.e_fit, len(ser.lam), ser.truncated_at, fit.verdict])
            print(f"({k},{m}) {name:12s} e_theory={e:.3f} e_fit={fit.e_fit:.3f} points={len(ser.lam):3d} "
                  f"{fit.verdict}")
    with open("exponent_table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "m", "region", "delta", "e_theory", "e_fit", "points", "truncated_at", "verdict"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
