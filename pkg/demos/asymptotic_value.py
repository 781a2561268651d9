"""Asymptotic per-agent optimum versus Monte Carlo (problems/wellposed.json).

This data set admits genuine roots of both algebraic equations (the solver
finds the stabilizing branch of 9 P^2 - 4.4 P + 0.2 = 0), so the closed-form
value

    value = tr(P Sigma_0) + xbar_0' Pi xbar_0 + 2 s(0)' xbar_0 + m

can be checked against the simulated cost of the mean-field-type system and
against the per-agent cost of a 200-agent population.
"""

import pathlib

from mfsoc.model import ProblemSpec
from mfsoc.riccati import solve_are
from mfsoc.simulator import SimConfig, simulate_meanfield_type, simulate_population
from mfsoc.social import asymptotic_value
from mfsoc.synthesis import build_law

PROBLEMS = pathlib.Path(__file__).resolve().parent.parent / "problems"


def main():
    spec = ProblemSpec.load(PROBLEMS / "wellposed.json")
    sol = solve_are(spec, t_sim=15.0)
    print(f"P  = {sol.P[0, 0]:.8f}  (residual {sol.residual_P:.1e})")
    print(f"Pi = {sol.Pi[0, 0]:.8f}  (residual {sol.residual_Pi:.1e})")

    val = asymptotic_value(spec, sol)
    print(f"\nvalue = {val.value:.6f}")
    print(f"  tr(P Sigma0)      = {val.quad_spread:.6f}")
    print(f"  mean' Pi mean     = {val.quad_mean:.6f}")
    print(f"  2 s(0)' mean      = {val.lin_offset:.6f}")
    print(f"  m (quadrature)    = {val.m:.6f}")
    print(f"  truncation tail  <= {val.tail_bound:.2e}")

    law = build_law(sol, spec)
    out = simulate_meanfield_type(
        spec, law, SimConfig(dt=2e-3, T_sim=15.0, replications=2000, seed=5))
    z = (out.social_cost - val.value) / out.social_se
    print(f"\nmean-field-type MC (2000 reps): "
          f"{out.social_cost:.6f} +- {out.social_se:.6f}  (z = {z:+.2f})")

    big = simulate_population(
        spec, law, SimConfig(dt=2e-3, T_sim=15.0, replications=200, seed=6), N=200)
    zb = (big.social_cost / 200 - val.value) / (big.social_se / 200)
    print(f"200-agent population (200 reps): per-agent "
          f"{big.social_cost / 200:.6f} +- {big.social_se / 200:.6f}  (z = {zb:+.2f})")


if __name__ == "__main__":
    main()
