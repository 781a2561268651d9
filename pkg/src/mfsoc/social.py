"""Centralized benchmark, optimality-gap curves, and the asymptotic value.

The centralized cost simulates the population under the population-N
feedback (which requires the live empirical average, i.e. centralized
information).  Gap curves pair decentralized and centralized runs under
common random numbers, so the per-replication cost differences are the
variance-reduced estimator of the gap.  The asymptotic per-agent optimum
is evaluated in closed form from the two constant Riccati matrices, the
offset, and a quadrature term m; the initial-state expectation reduces to
a trace against the initial covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import DEFAULT_TOL, Tolerance, pinv, quadrature
from .model import ProblemSpec
from .riccati import (
    RiccatiInfiniteSolution,
    SolverError,
    solve_are,
    solve_are_N,
    solve_finite_limit,
    solve_finite_N,
)
from .simulator import SimConfig, SimulationOutput, simulate_population
from .synthesis import build_centralized_law, build_law


@dataclass
class GapCurve:
    N_values: np.ndarray
    decentralized: np.ndarray   # per-agent social cost
    centralized: np.ndarray
    decentralized_se: np.ndarray
    centralized_se: np.ndarray
    epsilon: np.ndarray         # decentralized - centralized, paired
    epsilon_se: np.ndarray


@dataclass
class AsymptoticValue:
    value: float
    quad_spread: float   # trace(P . initial covariance)
    quad_mean: float     # mean' Pi mean
    lin_offset: float    # 2 s(0)' mean
    m: float
    tail_bound: float
    grid: np.ndarray
    m_integrand: np.ndarray

    @property
    def components_sum(self) -> float:
        return self.quad_spread + self.quad_mean + self.lin_offset + self.m


def centralized_cost(spec: ProblemSpec, N: int, cfg: SimConfig,
                     tol: Tolerance = DEFAULT_TOL) -> SimulationOutput:
    """Monte Carlo social cost under the population-N optimal feedback."""
    if spec.infinite_horizon:
        sol = solve_are_N(spec, tol, t_sim=cfg.horizon_for(spec), N=N)
    else:
        sol = solve_finite_N(spec, tol, N=N)
    law = build_centralized_law(sol, spec, tol)
    return simulate_population(spec, law, cfg, N=N, tol=tol)


def gap_curve(spec: ProblemSpec, N_values, cfg: SimConfig,
              tol: Tolerance = DEFAULT_TOL) -> GapCurve:
    """Per-agent cost gap between decentralized and centralized strategies.

    Both strategies at each N consume identical noise streams, so epsilon
    is estimated from paired per-replication differences.
    """
    N_values = np.asarray(list(N_values), dtype=int)
    if spec.infinite_horizon:
        dec_sol = solve_are(spec, tol, t_sim=cfg.horizon_for(spec))
    else:
        dec_sol = solve_finite_limit(spec, tol)
    dec_law = build_law(dec_sol, spec, tol)

    dec = np.empty(N_values.size)
    cen = np.empty(N_values.size)
    dec_se = np.empty(N_values.size)
    cen_se = np.empty(N_values.size)
    eps = np.empty(N_values.size)
    eps_se = np.empty(N_values.size)
    for j, N in enumerate(N_values):
        out_d = simulate_population(spec, dec_law, cfg, N=int(N), tol=tol)
        out_c = centralized_cost(spec, int(N), cfg, tol)
        dec[j] = out_d.social_cost / N
        cen[j] = out_c.social_cost / N
        dec_se[j] = out_d.social_se / N
        cen_se[j] = out_c.social_se / N
        diff = (out_d.rep_social - out_c.rep_social) / N
        eps[j] = float(diff.mean())
        reps = diff.size
        eps_se[j] = float(diff.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return GapCurve(N_values, dec, cen, dec_se, cen_se, eps, eps_se)


_MAX_STACK = 120   # largest N*n the moment propagation will attempt


def expected_social_cost(spec: ProblemSpec, law, N: int,
                         step: float = 2e-4,
                         tol: Tolerance = DEFAULT_TOL) -> float:
    """Exact per-agent social cost of the N-population under a law.

    Propagates the mean and second moment of the stacked nN-dimensional
    closed loop by an ODE (the cost is a quadratic functional, so the
    first two moments determine it), which removes all Monte Carlo error.
    Finite horizon only; the law may feed back on the live empirical
    average or on its stored mean-field trajectory.
    """
    if spec.infinite_horizon:
        raise SolverError("moment propagation needs a finite horizon")
    n, T = spec.n, float(spec.horizon)
    if N * n > _MAX_STACK:
        raise SolverError(
            f"stacked dimension N*n = {N * n} exceeds {_MAX_STACK}; "
            "use the Monte Carlo evaluator for large populations"
        )
    A, B, C, D, G = spec.A, spec.B, spec.C, spec.D, spec.G
    Q, R, Gam = spec.Q, spec.R, spec.Gamma
    emp = law.mf_source == "empirical"
    I_N = np.eye(N)
    E_N = np.full((N, N), 1.0 / N)
    ones = np.ones(N)
    steps = max(1, int(round(T / step)))
    h = T / steps

    def rates(t, mu, S):
        Fs = law.F_self_at(t)
        Fm = law.F_mf_at(t)
        g = law.g_at(t)
        f = spec.f(float(t))
        sig = spec.sigma(float(t))
        eta = spec.eta(float(t))
        if emp:
            u_off = g
            mix = B @ Fm + G
            d = D @ Fm
        else:
            u_off = Fm @ law.xbar_at(t) + g
            mix = G
            d = np.zeros((n, n))
        a = C + D @ Fs
        s0 = D @ u_off + sig
        Acl = np.kron(I_N, A + B @ Fs) + np.kron(E_N, mix)
        b = np.kron(ones, B @ u_off + f)
        dmu = Acl @ mu + b
        dS = Acl @ S + S @ Acl.T + np.outer(b, mu) + np.outer(mu, b)
        # per-agent scalar noise loads only that agent's block row
        Sb = S.reshape(N, n, N, n)
        mub = mu.reshape(N, n)
        S_row = Sb.mean(axis=2)                      # (N, n, n): (1/N) sum_j S_ij
        S_avg = S_row.mean(axis=0)                   # (n, n)
        mu_avg = mub.mean(axis=0)
        w = mub @ a.T + mu_avg @ d.T                 # (N, n)
        blk = (
            np.einsum("pq,iqs,rs->ipr", a, Sb[np.arange(N), :, np.arange(N)], a)
            + np.einsum("pq,iqs,rs->ipr", a, S_row, d)
            + np.einsum("pq,isq,rs->ipr", d, S_row, a)
            + (d @ S_avg @ d.T)[None]
            + w[:, :, None] * s0[None, None, :]
            + s0[None, :, None] * w[:, None, :]
            + np.outer(s0, s0)[None]
        )
        diff = np.zeros((N * n, N * n))
        for i in range(N):
            diff[i * n:(i + 1) * n, i * n:(i + 1) * n] = blk[i]
        dS = dS + diff
        # cost rate, summed over agents
        Md = np.kron(I_N, np.eye(n)) - np.kron(E_N, Gam)
        Sy = Md @ S @ Md.T
        my = (Md @ mu).reshape(N, n)
        Syb = Sy.reshape(N, n, N, n)[np.arange(N), :, np.arange(N)]
        qsum = float(np.einsum("ipq,pq->", Syb, Q)
                     - 2.0 * (my.sum(axis=0) @ Q @ eta) + N * (eta @ Q @ eta))
        Ku = np.kron(I_N, Fs) + (np.kron(E_N, Fm) if emp else 0.0)
        Su = Ku @ S @ Ku.T
        mu_u = (Ku @ mu).reshape(N, spec.r)
        Sub = Su.reshape(N, spec.r, N, spec.r)[np.arange(N), :, np.arange(N)]
        rsum = float(np.einsum("ipq,pq->", Sub, R)
                     + 2.0 * (mu_u.sum(axis=0) @ R @ u_off)
                     + N * (u_off @ R @ u_off))
        return dmu, dS, (qsum + rsum) / N

    mu = np.kron(ones, spec.x0_mean)
    S = np.outer(mu, mu) + np.kron(I_N, spec.x0_cov)
    cost = 0.0
    t = 0.0
    for _ in range(steps):
        k1 = rates(t, mu, S)
        k2 = rates(t + h / 2, mu + h / 2 * k1[0], S + h / 2 * k1[1])
        k3 = rates(t + h / 2, mu + h / 2 * k2[0], S + h / 2 * k2[1])
        k4 = rates(t + h, mu + h * k3[0], S + h * k3[1])
        mu = mu + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        S = S + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        cost += h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        t += h
    M0 = np.kron(I_N, np.eye(n)) - np.kron(E_N, spec.Gamma0)
    Sy = (M0 @ S @ M0.T).reshape(N, n, N, n)[np.arange(N), :, np.arange(N)]
    my = (M0 @ mu).reshape(N, n)
    term = float(np.einsum("ipq,pq->", Sy, spec.H)
                 - 2.0 * (my.sum(axis=0) @ spec.H @ spec.eta0)
                 + N * (spec.eta0 @ spec.H @ spec.eta0))
    return cost + term / N


def gap_curve_exact(spec: ProblemSpec, N_values, step: float = 2e-4,
                    tol: Tolerance = DEFAULT_TOL) -> GapCurve:
    """Gap curve from moment propagation instead of Monte Carlo.

    Same pairing as gap_curve but every cost is an exact expectation, so
    the standard-error fields are identically zero.  Finite horizon only.
    """
    N_values = np.asarray(list(N_values), dtype=int)
    dec_law = build_law(solve_finite_limit(spec, tol), spec, tol)
    dec = np.empty(N_values.size)
    cen = np.empty(N_values.size)
    for j, N in enumerate(N_values):
        solN = solve_finite_N(spec, tol, N=int(N))
        cen_law = build_centralized_law(solN, spec, tol)
        dec[j] = expected_social_cost(spec, dec_law, int(N), step, tol)
        cen[j] = expected_social_cost(spec, cen_law, int(N), step, tol)
    zero = np.zeros(N_values.size)
    return GapCurve(N_values, dec, cen, zero.copy(), zero.copy(),
                    dec - cen, zero.copy())


def asymptotic_value(spec: ProblemSpec, sol: RiccatiInfiniteSolution,
                     tol: Tolerance = DEFAULT_TOL) -> AsymptoticValue:
    """Closed-form limit of the per-agent social cost.

    value = trace(P Sigma0) + mean' Pi mean + 2 s(0)' mean + m, with
        m = integral of [ sigma' P sigma + 2 s' f + ||eta||^2_Q
                          - ||B's + D'P sigma||^2_{Ups^+} ] dt.
    The printed statement of this constant elsewhere carries an extra
    mean-trajectory noise term; the completion-of-squares derivation (and
    the Monte Carlo oracle) select the form above, which is what we
    implement.  Refuses when the integrand has not decayed by the end of
    the available grid (signals must be square-integrable).
    """
    grid = sol.grid
    P, Pi, Ups = sol.P, sol.Pi, sol.Upsilon
    Ui = pinv(Ups, tol)
    sig = spec.sigma(grid)
    f = spec.f(grid)
    eta = spec.eta(grid)
    s = sol.s
    w = s @ spec.B + sig @ (spec.D.T @ P).T   # rows: B's + D'P sigma
    integrand = (
        np.einsum("tn,nm,tm->t", sig, P, sig)
        + 2.0 * np.einsum("tn,tn->t", s, f)
        + np.einsum("tn,nm,tm->t", eta, spec.Q, eta)
        - np.einsum("tr,rs,ts->t", w, Ui, w)
    )
    peak = float(np.max(np.abs(integrand)))
    tail_win = max(2, grid.size // 20)
    end_level = float(np.max(np.abs(integrand[-tail_win:])))
    if peak > 0 and end_level > 1e-3 * peak:
        raise SolverError(
            f"value integrand has not decayed by t={grid[-1]:.3g} "
            f"(end level {end_level:.3g} vs peak {peak:.3g}); the forcing "
            f"signals are not square-integrable on this horizon"
        )
    m = quadrature(integrand, grid=grid)
    tail_bound = end_level * max(grid[-1], 1.0)
    quad_spread = float(np.trace(P @ spec.x0_cov))
    quad_mean = float(spec.x0_mean @ Pi @ spec.x0_mean)
    lin_offset = float(2.0 * s[0] @ spec.x0_mean)
    value = quad_spread + quad_mean + lin_offset + m
    return AsymptoticValue(
        value=value, quad_spread=quad_spread, quad_mean=quad_mean,
        lin_offset=lin_offset, m=m, tail_bound=tail_bound,
        grid=grid, m_integrand=integrand,
    )
