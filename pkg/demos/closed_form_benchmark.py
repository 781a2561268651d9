"""Backward Riccati solver against an analytic solution.

With A = C = 0, B = D = 1, Q = -2r, R = r < 0 and terminal weight h - r,
the scalar backward equation integrates in closed form:

    P(t) = sqrt(exp(-2(T - t)) (h^2 + r^2) - r^2) - r.

The solution escapes to infinity at T_max = 0.5 log(1 + h^2/r^2); below
we solve at 80% of that horizon and check the pointwise error, then repeat
for a diagonal two-channel matrix version, and finally show the solver
refusing a horizon past the escape time.
"""

import time

import numpy as np

from mfsoc.linalg import Tolerance
from mfsoc.model import ProblemSpec, zero_signal
from mfsoc.riccati import SolverError, solve_finite_limit


def closed_form(grid, T, r, h):
    return np.sqrt(np.exp(-2.0 * (T - grid)) * (h * h + r * r) - r * r) - r


def scalar_spec(T, r):
    return ProblemSpec(
        n=1, r=1, A=0.0, B=1.0, C=0.0, D=1.0, G=0.0, Q=-2.0 * r, R=r,
        Gamma=0.0, f=zero_signal(1), sigma=zero_signal(1), eta=zero_signal(1),
        x0_mean=[1.0], x0_cov=[[0.1]], N=10, horizon=T, H=[[1.0 - r]],
    )


def main():
    r = -0.5
    T_max = 0.5 * np.log(1.0 + 1.0 / r ** 2)
    T = 0.8 * T_max
    print(f"escape time T_max = {T_max:.6f}, solving on [0, {T:.6f}]")

    t0 = time.perf_counter()
    sol = solve_finite_limit(scalar_spec(T, r), Tolerance(ode_step=1e-4))
    elapsed = time.perf_counter() - t0
    want = closed_form(sol.grid, T, r, 1.0)
    rel = np.max(np.abs(sol.P[:, 0, 0] - want) / np.abs(want))
    print(f"scalar: max relative error {rel:.3e} at dt=1e-4  ({elapsed:.2f}s)")

    rr = np.array([-0.5, -0.4])
    spec2 = ProblemSpec(
        n=2, r=2, A=np.zeros((2, 2)), B=np.eye(2), C=np.zeros((2, 2)),
        D=np.eye(2), G=np.zeros((2, 2)), Q=np.diag(-2.0 * rr), R=np.diag(rr),
        Gamma=np.zeros((2, 2)), f=zero_signal(2), sigma=zero_signal(2),
        eta=zero_signal(2), x0_mean=[0.0, 0.0], x0_cov=np.zeros((2, 2)),
        N=5, horizon=T, H=np.diag(1.0 - rr),
    )
    sol2 = solve_finite_limit(spec2, Tolerance(ode_step=1e-4))
    for j, rj in enumerate(rr):
        want = closed_form(sol2.grid, T, rj, 1.0)
        rel = np.max(np.abs(sol2.P[:, j, j] - want) / np.abs(want))
        print(f"matrix channel {j} (r={rj}): max relative error {rel:.3e}")

    try:
        solve_finite_limit(scalar_spec(1.2 * T_max, r))
    except SolverError as exc:
        print(f"horizon 1.2 T_max correctly refused: {exc}")


if __name__ == "__main__":
    main()
