"""Phase-by-phase Lebeau-Robbiano trace and HUM cost against the horizon.

Operator (-d^2)^2 + x^4 with s = 1, controlled from omega_0.
"""

import numpy as np

from shubin_lab.control import ControlProblem, hum_control, lr_synthesize
from shubin_lab.geometry import example_region
from shubin_lab.operator import ShubinParams, eigenbasis


def main():
    basis = eigenbasis(ShubinParams(2, 2, 1.0), 256)
    nf = basis.reliability_index()
    region = example_region("omega_zero")
    f0 = np.random.default_rng(0).standard_normal(nf)
    f0 /= np.linalg.norm(f0)
    prob = ControlProblem(1.0, basis, region, f0, 20)
    sch = lr_synthesize(prob)
    print(f"LR, T = 1, {nf} modes")
    print(f"{'start':>10s} {'end':>10s} {'kind':>8s} {'modes':>6s} {'cost':>11s} {'residual':>10s}")
    for p in sch.phases:
        print(f"{p.t_start:10.5f} {p.t_end:10.5f} {p.kind:>8s} {p.n_modes:6d} {p.cost:11.4e} {p.residual:10.3e}")
    print("\nHUM cost on 20 modes")
    for T in np.geomspace(0.02, 2, 9):
        sch = hum_control(ControlProblem(T, basis, region, f0, 20, gram=prob.gram))
        print(f"T = {T:7.4f}  cost = {sch.cost:.6e}")


if __name__ == "__main__":
    main()
