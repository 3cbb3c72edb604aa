"""Quadrature, scalar line search, and barrier-solver checks.

Solver answers are compared against closed forms (waterfilling, KKT
hand-checks) or dense scans computed independently in this file.
"""

import math

import numpy as np
import pytest

from cran_split.optim import (
    BarrierOptions,
    ConvexSubproblem,
    directional_gradient_check,
    gauss_legendre,
    line_search_1d,
    maximize_concave,
)
from cran_split.uplink import CONVENTIONAL, UplinkScenario, design_for_split

LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# gauss_legendre


def test_quadrature_sine():
    val = gauss_legendre(np.sin, 0.0, math.pi)
    assert abs(val - 2.0) < 1e-12


def test_quadrature_constant():
    val = gauss_legendre(lambda t: np.full_like(t, 2.75), -1.5, 4.0)
    assert abs(val - 2.75 * 5.5) < 1e-12


def test_quadrature_degenerate_and_reversed_interval():
    assert gauss_legendre(np.sin, 1.3, 1.3) == 0.0
    with pytest.raises(ValueError):
        gauss_legendre(np.sin, 2.0, 1.0)


def test_quadrature_correlation_entry_vs_trapezoid():
    # spatial-correlation off-diagonal entry: averaged complex exponential
    # over the arrival cone; oracle is a brute-force trapezoid sum
    theta, delta, lag = math.pi / 5, 0.2, 3

    def integrand(t):
        return np.exp(-1j * math.pi * lag * np.sin(t))

    val = (gauss_legendre(lambda t: integrand(t).real,
                          theta - delta, theta + delta)
           + 1j * gauss_legendre(lambda t: integrand(t).imag,
                                 theta - delta, theta + delta)) / (2 * delta)
    t = np.linspace(theta - delta, theta + delta, 1_000_001)
    ref = np.trapezoid(integrand(t), t) / (2 * delta)
    assert abs(val - ref) < 1e-8


# ---------------------------------------------------------------------------
# line_search_1d


def test_line_search_parabola():
    x, fx = line_search_1d(lambda x: -((x - 3.0) ** 2), 0.0, 10.0, tol=1e-9)
    assert abs(x - 3.0) < 1e-6
    assert abs(fx) < 1e-12


def test_line_search_constant():
    x, fx = line_search_1d(lambda x: 4.25, 2.0, 5.0)
    assert 2.0 <= x <= 5.0
    assert fx == 4.25


def test_line_search_include_points_are_candidates():
    # a spike the coarse grid cannot see must still win via include=
    def f(x):
        return 1.0 if x == math.pi else 0.0

    x, fx = line_search_1d(f, 0.0, 10.0, n_grid=8, include=(math.pi,))
    assert x == math.pi and fx == 1.0


def test_line_search_matches_dense_scan_on_snr_profile():
    # effective SNR as a function of the pilot fronthaul share; oracle is
    # a 1e5-point exhaustive scan
    scen = UplinkScenario(n_tx=4, n_rx=4, T=10, t_pilot=4, alpha=0.5,
                          p_avg=10.0, c_total=6.0)

    def value(c_p):
        return design_for_split(CONVENTIONAL, scen, 10.0, 10.0, c_p).snr_eff

    x, fx = line_search_1d(value, 0.0, scen.c_total, tol=1e-8)
    grid = np.linspace(0.0, scen.c_total, 100_001)
    vals = np.array([value(c) for c in grid])
    k = int(np.argmax(vals))
    assert fx >= vals[k] - 1e-12
    assert abs(x - grid[k]) <= (grid[1] - grid[0]) + 1e-6


# ---------------------------------------------------------------------------
# maximize_concave


def _no_blocks():
    return []


def test_barrier_single_scalar_capacity():
    # max log2(1+v) s.t. v <= 1.7  ->  v* = 1.7
    def objective(blocks, scalars, ctx):
        v = float(scalars[0])
        return math.log2(1.0 + v), [], np.array([1.0 / ((1.0 + v) * LN2)])

    def budget(blocks, scalars, ctx):
        return float(scalars[0]), [], np.array([1.0])

    prob = ConvexSubproblem(block_orders=[], n_scalars=1,
                            objective=objective, constraints=[budget],
                            rhs=[1.7], start_blocks=[], start_scalars=[0.2])
    res = maximize_concave(prob)
    assert res.converged
    assert abs(float(res.scalars[0]) - 1.7) < 1e-5
    assert abs(res.value - math.log2(2.7)) < 1e-6
    assert np.all(res.residuals <= 1e-9)


def _waterfill(gains, budget):
    """Closed-form waterfilling for max sum log2(1+g v), sum v <= budget."""
    g = np.asarray(gains, dtype=float)
    order = np.argsort(1.0 / g)
    for m in range(len(g), 0, -1):
        act = order[:m]
        mu = (budget + float(np.sum(1.0 / g[act]))) / m
        v = np.zeros_like(g)
        v[act] = mu - 1.0 / g[act]
        if np.all(v[act] >= -1e-12):
            return np.maximum(v, 0.0)
    raise AssertionError("waterfilling failed")


def test_barrier_waterfilling_two_channels():
    g = np.array([1.0, 0.5])

    def objective(blocks, scalars, ctx):
        t = 1.0 + g * scalars
        return float(np.sum(np.log2(t))), [], g / (t * LN2)

    def budget(blocks, scalars, ctx):
        return float(np.sum(scalars)), [], np.ones(2)

    prob = ConvexSubproblem(block_orders=[], n_scalars=2,
                            objective=objective, constraints=[budget],
                            rhs=[1.0], start_blocks=[],
                            start_scalars=[0.25, 0.25])
    res = maximize_concave(prob)
    v_ref = _waterfill(g, 1.0)
    f_ref = float(np.sum(np.log2(1.0 + g * v_ref)))
    assert res.converged
    assert abs(res.value - f_ref) < 1e-5
    assert np.all(np.abs(res.scalars - v_ref) < 1e-3)
    assert float(np.sum(res.scalars)) <= 1.0 + 1e-9


def _logdet_problem(start):
    # max log2 det(I+V) s.t. tr V <= 2 over 2x2 PSD V; optimum V = I by
    # symmetry and the KKT conditions
    def objective(blocks, scalars, ctx):
        a = np.eye(2) + blocks[0]
        val = float(np.linalg.slogdet(a)[1]) / LN2
        return val, [np.linalg.inv(a) / LN2], np.zeros(0)

    def trace_budget(blocks, scalars, ctx):
        return float(np.trace(blocks[0]).real), \
            [np.eye(2, dtype=complex)], np.zeros(0)

    return ConvexSubproblem(block_orders=[2], n_scalars=0,
                            objective=objective, constraints=[trace_budget],
                            rhs=[2.0], start_blocks=[start],
                            start_scalars=[])


def test_barrier_psd_block_identity_optimum():
    res = maximize_concave(_logdet_problem(0.5 * np.eye(2, dtype=complex)))
    assert res.converged
    assert abs(res.value - 2.0) < 1e-5
    assert np.linalg.norm(res.blocks[0] - np.eye(2)) < 1e-3
    assert np.all(res.residuals <= 1e-9)
    # returned block stays inside the PSD cone
    assert np.min(np.linalg.eigvalsh(res.blocks[0])) >= -1e-12


def test_barrier_rejects_infeasible_start():
    def objective(blocks, scalars, ctx):
        return float(scalars[0]), [], np.array([1.0])

    prob = ConvexSubproblem(block_orders=[], n_scalars=1,
                            objective=objective, constraints=[objective],
                            rhs=[1.0], start_blocks=[], start_scalars=[5.0])
    with pytest.raises(ValueError, match="infeasible start"):
        maximize_concave(prob)


def test_gradient_check_on_logdet_objective():
    prob = _logdet_problem(0.5 * np.eye(2, dtype=complex))

    def fn(blocks, scalars):
        return prob.objective(blocks, scalars, None)

    v0 = np.array([[0.8, 0.1 + 0.2j], [0.1 - 0.2j, 0.5]])
    err = directional_gradient_check(fn, [v0], np.zeros(0), rng=7)
    assert err < 1e-6
