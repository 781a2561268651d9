import numpy as np
import pytest
import scipy.linalg

from mfsoc.linalg import Tolerance, symmetrize
from mfsoc.model import ProblemSpec, constant_signal, derive_weights, zero_signal
from mfsoc.riccati import (
    SolverError,
    check_ranges,
    grid_interp,
    meanfield_path,
    solve_are,
    solve_are_N,
    solve_finite_N,
    solve_finite_limit,
    solve_stochastic_are,
)

T_MAX_SCALAR = 0.5 * np.log(5.0)  # escape time of the scalar benchmark


def scalar_closed_form(grid, T, r, h):
    return np.sqrt(np.exp(-2.0 * (T - grid)) * (h * h + r * r) - r * r) - r


def make_scalar_benchmark(T, r=-0.5):
    # A=C=G=Gamma=0, B=D=1, Q=-2r: the backward equation integrates in closed form
    return ProblemSpec(
        n=1, r=1, A=0.0, B=1.0, C=0.0, D=1.0, G=0.0, Q=-2.0 * r, R=r,
        Gamma=0.0, f=zero_signal(1), sigma=zero_signal(1), eta=zero_signal(1),
        x0_mean=[1.0], x0_cov=[[0.1]], N=10, horizon=T, H=[[1.0 - r]],
    )


def test_grid_interp():
    grid = np.array([0.0, 1.0, 2.0])
    vals = np.array([0.0, 2.0, 6.0])
    assert grid_interp(grid, vals, 0.5) == pytest.approx(1.0)
    assert grid_interp(grid, vals, 1.5) == pytest.approx(4.0)
    assert grid_interp(grid, vals, -3.0) == pytest.approx(0.0)  # clamped
    out = grid_interp(grid, vals, np.array([0.0, 2.0]))
    np.testing.assert_allclose(out, [0.0, 6.0])


def test_scalar_closed_form(spec_example1):
    sol = solve_finite_limit(spec_example1, Tolerance(ode_step=1e-4))
    want = scalar_closed_form(sol.grid, spec_example1.horizon, -0.5, 1.0)
    rel = np.max(np.abs(sol.P[:, 0, 0] - want) / np.abs(want))
    assert rel < 1e-6
    assert sol.residual < 1e-8
    # the mean-field gain and offset stay identically zero here
    np.testing.assert_allclose(sol.K, 0.0, atol=1e-10)
    np.testing.assert_allclose(sol.s, 0.0, atol=1e-10)


def test_matrix_closed_form():
    # two decoupled scalar channels: the diagonal matrix problem must match
    # the channelwise closed form
    rr = np.array([-0.5, -0.4])
    T = 0.8 * T_MAX_SCALAR
    spec = ProblemSpec(
        n=2, r=2, A=np.zeros((2, 2)), B=np.eye(2), C=np.zeros((2, 2)),
        D=np.eye(2), G=np.zeros((2, 2)), Q=np.diag(-2.0 * rr), R=np.diag(rr),
        Gamma=np.zeros((2, 2)), f=zero_signal(2), sigma=zero_signal(2),
        eta=zero_signal(2), x0_mean=[0.0, 0.0], x0_cov=np.zeros((2, 2)),
        N=5, horizon=T, H=np.diag(1.0 - rr),
    )
    sol = solve_finite_limit(spec, Tolerance(ode_step=1e-4))
    for j, r in enumerate(rr):
        want = scalar_closed_form(sol.grid, T, r, 1.0)
        rel = np.max(np.abs(sol.P[:, j, j] - want) / np.abs(want))
        assert rel < 1e-6
    np.testing.assert_allclose(sol.P[:, 0, 1], 0.0, atol=1e-10)


def test_horizon_beyond_escape_fails():
    spec = make_scalar_benchmark(1.2 * T_MAX_SCALAR, r=-0.5)
    with pytest.raises(SolverError):
        solve_finite_limit(spec)


def test_scalar_branch_matches_matrix_branch(spec_sec6_finite, sol_sec6_finite):
    # embed the scalar benchmark in a 2x2 block-diagonal problem; block (0,0)
    # must reproduce the n=1 solve (guards the scalar fast path)
    s = spec_sec6_finite
    pad = lambda M: np.block([[M, np.zeros((1, 1))], [np.zeros((1, 1)), np.array([[0.0]])]])
    spec2 = ProblemSpec(
        n=2, r=2, A=pad(s.A) + np.diag([0.0, -1.0]), B=pad(s.B) + np.diag([0.0, 1.0]),
        C=pad(s.C), D=pad(s.D) + np.diag([0.0, 1.0]), G=pad(s.G),
        Q=pad(s.Q) + np.diag([0.0, 1.0]), R=pad(s.R) + np.diag([0.0, 1.0]),
        Gamma=pad(s.Gamma), f=zero_signal(2), sigma=zero_signal(2),
        eta=zero_signal(2), x0_mean=[1.0, 0.0], x0_cov=np.diag([0.1, 0.0]),
        N=s.N, horizon=s.horizon, H=pad(s.H), Gamma0=pad(s.Gamma0),
        eta0=[0.0, 0.0],
    )
    sol2 = solve_finite_limit(spec2)
    scalar = ProblemSpec.from_json(s.to_json())
    scalar.f = zero_signal(1)
    scalar.sigma = zero_signal(1)
    scalar.eta = zero_signal(1)
    scalar.eta0 = np.zeros(1)
    sol1 = solve_finite_limit(scalar)
    np.testing.assert_allclose(sol2.P[:, 0, 0], sol1.P[:, 0, 0], atol=1e-9)
    np.testing.assert_allclose(sol2.K[:, 0, 0], sol1.K[:, 0, 0], atol=1e-9)


def test_finite_triple_against_backward_euler(spec_sec6_finite, sol_sec6_finite):
    # independent oracle: first-order backward Euler on the same equations,
    # written out term by term
    s = spec_sec6_finite
    dw = derive_weights(s)
    a, b, c, d = s.A[0, 0], s.B[0, 0], s.C[0, 0], s.D[0, 0]
    g, q, r, qg = s.G[0, 0], s.Q[0, 0], s.R[0, 0], dw.Q_Gamma[0, 0]
    dt = 1e-5
    steps = int(round(s.horizon / dt))
    P = s.H[0, 0]
    K = -dw.H_Gamma0[0, 0]
    sv = -dw.eta0_bar[0]
    for k in range(steps):
        t = s.horizon - k * dt
        ups = r + d * d * P
        psi = b * P + d * P * c
        bk = b * K
        dP = 2 * a * P + c * c * P + q - psi * psi / ups
        dK = 2 * (a + g) * K + 2 * g * P - (2 * psi * bk + bk * bk) / ups - qg
        theta = b * (P + K) + d * P * c
        acl = a + g - b * theta / ups
        ccl = c - d * theta / ups
        dsv = acl * sv + (P + K) * s.f(t - dt)[0] + ccl * P * s.sigma(t - dt)[0] \
            - dw.eta_bar(t - dt)[0]
        P, K, sv = P + dt * dP, K + dt * dK, sv + dt * dsv
    assert sol_sec6_finite.P[0, 0, 0] == pytest.approx(P, abs=5e-5)
    assert sol_sec6_finite.K[0, 0, 0] == pytest.approx(K, abs=5e-5)
    assert sol_sec6_finite.s[0, 0] == pytest.approx(sv, abs=5e-5)


def test_population_form_collapses_at_N1(spec_sec6_finite):
    # for N=1 the sum P+K solves an ordinary one-agent Riccati equation with
    # shifted data (A+G, Q - Q_Gamma, terminal H - H_Gamma0)
    s = spec_sec6_finite
    dw = derive_weights(s)
    solN = solve_finite_N(s, N=1)
    Z = solN.P + solN.K

    a = (s.A + s.G)[0, 0]
    b, c, d = s.B[0, 0], s.C[0, 0], s.D[0, 0]
    q = (s.Q - dw.Q_Gamma)[0, 0]
    r = s.R[0, 0]
    dt = 1e-5
    z = (s.H - dw.H_Gamma0)[0, 0]
    for k in range(int(round(s.horizon / dt))):
        ups = r + d * d * z
        psi = b * z + d * z * c
        z = z + dt * (2 * a * z + c * c * z + q - psi * psi / ups)
    assert Z[0, 0, 0] == pytest.approx(z, abs=5e-5)


def test_population_form_approaches_limit(spec_sec6_finite, sol_sec6_finite):
    sol_big = solve_finite_N(spec_sec6_finite, N=10 ** 6)
    assert np.max(np.abs(sol_big.P - sol_sec6_finite.P)) < 1e-4
    assert np.max(np.abs(sol_big.K - sol_sec6_finite.K)) < 1e-4
    # and the deviation shrinks with N
    gaps = []
    for N in (10, 100, 1000):
        solN = solve_finite_N(spec_sec6_finite, N=N)
        gaps.append(np.max(np.abs(solN.P - sol_sec6_finite.P)))
    assert gaps[0] > gaps[1] > gaps[2]


def test_finite_solution_symmetric_and_checked(sol_sec6_finite):
    assert sol_sec6_finite.residual < 1e-7
    skew = np.max(np.abs(sol_sec6_finite.P - np.swapaxes(sol_sec6_finite.P, 1, 2)))
    assert skew < 1e-9
    assert sol_sec6_finite.min_upsilon_eig > 0.0


def test_meanfield_path_initial_condition(spec_sec6_finite, sol_sec6_finite):
    ts, xs = meanfield_path(spec_sec6_finite, sol_sec6_finite)
    assert ts[0] == 0.0 and ts[-1] == pytest.approx(spec_sec6_finite.horizon)
    assert xs[0, 0] == pytest.approx(spec_sec6_finite.x0_mean[0])


def test_are_definite_case_matches_scipy():
    # C = D = 0 reduces to the standard CARE; scipy is the oracle
    rng = np.random.default_rng(3)
    for _ in range(5):
        n = 2
        A = rng.standard_normal((n, n)) - 2.0 * np.eye(n)
        B = rng.standard_normal((n, 1))
        Q = np.eye(n)
        R = np.eye(1)
        X, res = solve_stochastic_are(A, B, np.zeros((n, n)), np.zeros((n, 1)), Q, R)
        want = scipy.linalg.solve_continuous_are(A, B, Q, R)
        np.testing.assert_allclose(X, want, atol=1e-6)
        assert res < 1e-8


def test_are_picks_stabilizing_root(spec_wellposed, sol_wellposed):
    # the equation 9 P^2 - 4.4 P + 0.2 = 0 has two roots with positive
    # control weight; only the larger one stabilizes the closed loop
    roots = np.roots([9.0, -4.4, 0.2])
    assert sol_wellposed.P[0, 0] == pytest.approx(max(roots), abs=1e-8)
    assert sol_wellposed.residual_P < 1e-8
    assert sol_wellposed.residual_Pi < 1e-8


def test_mean_equation_quadratic_root(spec_wellposed, sol_wellposed):
    # with C = 0 the second equation is an explicit scalar quadratic
    P = sol_wellposed.P[0, 0]
    ups = spec_wellposed.R[0, 0] + 4.0 * P
    dw = derive_weights(spec_wellposed)
    ag = (spec_wellposed.A + spec_wellposed.G)[0, 0]
    qq = (spec_wellposed.Q - dw.Q_Gamma)[0, 0]
    # Pi^2/ups - 2 ag Pi - qq = 0  (sign convention: residual = 0)
    pi_roots = np.roots([1.0 / ups, -2.0 * ag, -qq])
    want = max(p for p in pi_roots if np.isreal(p)).real
    assert sol_wellposed.Pi[0, 0] == pytest.approx(want, abs=1e-8)


def test_pinned_solve_reports_residual(spec_sec6):
    sol = solve_are(spec_sec6, t_sim=10.0, pin_P=[[0.6808]])
    assert sol.P[0, 0] == pytest.approx(0.6808)
    assert sol.residual_P > 1.0  # the pinned value is not a root; reported honestly
    assert sol.residual_Pi < 1e-8


def test_unsolvable_equation_raises(spec_sec6):
    with pytest.raises(SolverError) as exc:
        solve_are(spec_sec6, t_sim=10.0)
    assert "seed" in str(exc.value)


def test_offset_decays(spec_wellposed, sol_wellposed):
    # exponentially decaying forcing => the offset vanishes at the far end
    assert abs(sol_wellposed.s[-1, 0]) < 1e-3
    assert abs(sol_wellposed.s[0, 0]) > 1e-3
    assert sol_wellposed.xbar[0, 0] == pytest.approx(spec_wellposed.x0_mean[0])


def test_steady_population_pair(spec_wellposed, sol_wellposed):
    solN = solve_are_N(spec_wellposed, t_sim=10.0, N=10000)
    assert solN.residual < 1e-8
    # at huge N the individual matrix matches the limit equation
    assert solN.P[0, 0] == pytest.approx(sol_wellposed.P[0, 0], abs=1e-3)
    # and P + K approaches the mean-trajectory matrix
    assert (solN.P + solN.K)[0, 0] == pytest.approx(sol_wellposed.Pi[0, 0], abs=1e-3)


def test_range_report(spec_wellposed, sol_wellposed, spec_sec6_finite, sol_sec6_finite):
    rep = check_ranges(sol_wellposed, spec_wellposed)
    assert rep.all_ok and rep.failing() == []
    rep_f = check_ranges(sol_sec6_finite, spec_sec6_finite)
    assert rep_f.all_ok
    assert set(rep_f.inclusions) == {"feedback_gain", "meanfield_gain", "offset"}
