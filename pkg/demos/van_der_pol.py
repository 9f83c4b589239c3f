"""Mean-field Van der Pol demo: phase portrait of the coordinate means.

A two dimensional model with cubic kernel f(x) = -x|x|^2, a cubic confining
term in the first coordinate and a rotation-like Lipschitz drift.  The
cross-particle means (E[X1], E[X2]) trace a closed-loop style orbit.

Run from the repository root:

    python3 demos/van_der_pol.py
"""

import numpy as np

import mvsde as mv


def main():
    m = mv.make_builtin("van_der_pol")
    N, M, T = 100, 2000, 20.0
    plan = mv.NoisePlan(0, N, m.l, T / M, M)
    p = mv.SchemeParams(T=T, M=M, N=N, scheme="ssm", seed=0)

    times, means = mv.export_phase_means(m, "ssm", p, plan,
                                         x0=((1.0, 0.25), (0.0, 0.25)))
    print(f"simulated {N} particles over [0, {T}] with h = {p.h}")
    for k in range(0, M + 1, M // 10):
        print(f"  t={times[k]:5.1f}  mean=({means[k, 0]:+.3f}, {means[k, 1]:+.3f})")

    radius = np.sqrt(np.sum(means[M // 2:] ** 2, axis=1))
    print(f"\norbit radius over the second half: min {radius.min():.3f}, "
          f"max {radius.max():.3f}")
    print("write a CSV for the phase-portrait plot with:")
    print("  mvsde phase --model van_der_pol --N 100 --M 2000 --T 20 "
          "--x0 'normal:1,0.25;0,0.25' --out vdp_phase.csv")


if __name__ == "__main__":
    main()
