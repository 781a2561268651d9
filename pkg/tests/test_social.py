import numpy as np
import pytest

from mfsoc.riccati import SolverError, solve_are
from mfsoc.simulator import SimConfig, simulate_meanfield_type, simulate_population
from mfsoc.social import (
    asymptotic_value,
    centralized_cost,
    expected_social_cost,
    gap_curve,
    gap_curve_exact,
)
from mfsoc.synthesis import build_law


def test_value_components(spec_wellposed, sol_wellposed):
    val = asymptotic_value(spec_wellposed, sol_wellposed)
    assert val.value == pytest.approx(val.components_sum)
    assert val.quad_spread == pytest.approx(
        float(np.trace(sol_wellposed.P @ spec_wellposed.x0_cov)))
    assert val.quad_mean == pytest.approx(
        float(spec_wellposed.x0_mean @ sol_wellposed.Pi @ spec_wellposed.x0_mean))
    assert val.tail_bound < 1e-3
    assert np.all(np.isfinite(val.m_integrand))


def test_value_agrees_with_monte_carlo(spec_wellposed, sol_wellposed):
    # the closed-form limit must match the simulated single-agent cost
    law = build_law(sol_wellposed, spec_wellposed)
    cfg = SimConfig(dt=2e-3, T_sim=15.0, replications=800, seed=21)
    out = simulate_meanfield_type(spec_wellposed, law, cfg)
    val = asymptotic_value(spec_wellposed, sol_wellposed)
    assert abs(out.social_cost - val.value) < 3.0 * out.social_se + 1e-3


def test_value_refuses_non_decaying_signals(spec_sec6):
    sol = solve_are(spec_sec6, t_sim=10.0, pin_P=[[0.6808]])
    with pytest.raises(SolverError):
        asymptotic_value(spec_sec6, sol)  # constant diffusion offset: no L2 limit


def test_centralized_cost_runs(spec_sec6_finite):
    cfg = SimConfig(dt=2e-3, replications=10, seed=2)
    out = centralized_cost(spec_sec6_finite, N=5, cfg=cfg)
    assert out.individual_costs.shape == (5,)
    assert out.social_se > 0.0


def test_gap_curve_pairing(spec_sec6_finite):
    cfg = SimConfig(dt=2e-3, replications=60, seed=17)
    curve = gap_curve(spec_sec6_finite, [2, 8], cfg)
    assert curve.N_values.tolist() == [2, 8]
    # common random numbers: the paired standard error must beat the
    # two-sample one by a wide margin
    for j in range(2):
        unpaired = np.hypot(curve.decentralized_se[j], curve.centralized_se[j])
        assert curve.epsilon_se[j] < 0.5 * unpaired
    # the decentralized strategy can only lose against the optimum
    # (up to Monte Carlo resolution)
    assert np.all(curve.epsilon > -3.0 * curve.epsilon_se - 1e-12)


def test_expected_cost_matches_monte_carlo(spec_sec6_finite):
    # the moment-ODE evaluation is the exact expectation of the simulated
    # cost, so a moderate Monte Carlo run must straddle it
    from mfsoc.riccati import solve_finite_limit
    law = build_law(solve_finite_limit(spec_sec6_finite), spec_sec6_finite)
    exact = expected_social_cost(spec_sec6_finite, law, N=3, step=5e-4)
    out = simulate_population(spec_sec6_finite, law,
                              SimConfig(dt=5e-4, replications=600, seed=7), N=3)
    assert abs(out.social_cost / 3 - exact) < 3.0 * out.social_se / 3 + 1e-4


def test_expected_cost_guards(spec_sec6_finite, spec_sec6, sol_sec6_finite):
    law = build_law(sol_sec6_finite, spec_sec6_finite)
    with pytest.raises(Exception):
        expected_social_cost(spec_sec6, law, N=3)        # infinite horizon
    with pytest.raises(Exception):
        expected_social_cost(spec_sec6_finite, law, N=10 ** 6)  # too wide


def test_gap_curve_exact_is_noiseless_and_decreasing(spec_sec6_finite):
    curve = gap_curve_exact(spec_sec6_finite, [2, 5], step=1e-3)
    assert np.all(curve.epsilon_se == 0.0)
    assert curve.epsilon[0] > curve.epsilon[1] > 0.0


def test_gap_shrinks_with_population(spec_sec6_finite):
    cfg = SimConfig(dt=2e-3, replications=200, seed=29)
    curve = gap_curve(spec_sec6_finite, [2, 32], cfg)
    assert curve.epsilon[1] < curve.epsilon[0] + 2.0 * np.hypot(*curve.epsilon_se)
