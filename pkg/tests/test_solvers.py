import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onestep.core import (
    CompositeObjective,
    ContractViolation,
    RegularityConstants,
    ScalingMatrix,
    SmoothTerm,
    l1_term,
    quadratic_term,
    zero_term,
)
from onestep.proxops import moreau_gradient, prox_l1
from onestep.solvers import (
    OseConfig,
    check_stop_cond_inequality,
    composite_residual,
    gd_step_exact,
    gd_step_fixed,
    one_newton_step,
    ose_prox_descent,
    ose_prox_gradient,
    run_prox_gradient,
    run_prox_newton,
    solve_reference,
    stop_cond_kappa,
    stopping_report,
    stopping_threshold,
)

from conftest import random_spd


def centered_quadratic(H, b):
    """1/2 (x - b)^T H (x - b)."""
    return quadratic_term(H, center=b)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_newton_step_exact_on_quadratics(d, seed):
    rng = np.random.default_rng(seed)
    H = random_spd(rng, d, 0.5, 5.0)
    b = rng.standard_normal(d)
    g = centered_quadratic(H, b)
    theta = 10 * rng.standard_normal(d)
    C = ScalingMatrix(H)
    np.testing.assert_allclose(ose_prox_gradient(g, None, C, theta), b, atol=1e-10)
    np.testing.assert_array_equal(one_newton_step(g, C, theta),
                                  ose_prox_gradient(g, zero_term(d), C, theta))


def test_ose_lasso_1d():
    g = centered_quadratic(np.eye(1), [3.0])
    out = ose_prox_gradient(g, l1_term(1, 1.0), ScalingMatrix.identity(1), [0.0])
    np.testing.assert_array_equal(out, [2.0])


def test_ose_fixed_point_at_minimizer(rng):
    for _ in range(10):
        d = int(rng.integers(1, 6))
        g = quadratic_term(random_spd(rng, d, 0.5, 3.0), b=2 * rng.standard_normal(d))
        obj = CompositeObjective(g, l1_term(d, 0.4))
        theta_hat, res = solve_reference(obj, np.zeros(d))
        assert res <= 1e-10
        C = ScalingMatrix(random_spd(rng, d))
        assert np.linalg.norm(ose_prox_gradient(g, obj.nonsmooth, C, theta_hat) - theta_hat) <= 1e-8


def test_ose_prox_descent_examples(rng):
    f = quadratic_term(np.eye(1))
    np.testing.assert_allclose(ose_prox_descent(f, ScalingMatrix.identity(1), [2.0]), [1.0],
                               atol=1e-10)
    np.testing.assert_allclose(ose_prox_descent(f, ScalingMatrix.identity(1), [0.0]), [0.0])
    obj = CompositeObjective(quadratic_term(random_spd(rng, 3, 0.5, 2.0)), l1_term(3, 0.2))
    C = ScalingMatrix(random_spd(rng, 3))
    x = rng.standard_normal(3)
    np.testing.assert_allclose(ose_prox_descent(obj, C, x), x - C.solve(moreau_gradient(obj, C, x)),
                               atol=1e-12)


def test_gd_steps():
    g = quadratic_term(np.eye(1))
    np.testing.assert_array_equal(gd_step_fixed(g, 1.0, [5.0]), [0.0])
    g0 = centered_quadratic(np.eye(2), [1.0, 2.0])
    np.testing.assert_array_equal(gd_step_fixed(g0, 0.3, [1.0, 2.0]), [1.0, 2.0])
    with pytest.raises(ContractViolation):
        gd_step_fixed(g, 0.0, [1.0])


def test_gd_exact_isotropic_and_1d():
    b = np.array([1.0, -1.0])
    new, alpha = gd_step_exact(centered_quadratic(3 * np.eye(2), b), [4.0, 4.0])
    np.testing.assert_allclose(new, b)
    assert alpha == pytest.approx(1 / 3)
    new, _ = gd_step_exact(centered_quadratic(np.array([[7.0]]), [2.0]), [-3.0])
    np.testing.assert_allclose(new, [2.0])
    same, alpha = gd_step_exact(centered_quadratic(np.eye(2), b), b)
    np.testing.assert_array_equal(same, b)
    assert math.isnan(alpha)


def test_gd_exact_step_bounds():
    # sigma1 = 10, sigma2 = 1; alpha is a Rayleigh-quotient inverse, so it lies in
    # [sigma2^2, sigma1^2].  The tighter sigma1 + sigma2 = 11 holds when the second
    # coordinate's gradient is not negligible, which is the typical case.
    Q = np.diag([10.0 ** -2, 1.0])
    g = quadratic_term(Q)
    _, alpha = gd_step_exact(g, [1.0, 1.0])
    assert alpha <= 11.0
    _, alpha_edge = gd_step_exact(g, [1.0, 0.0])
    assert alpha_edge == pytest.approx(100.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        _, a = gd_step_exact(g, rng.standard_normal(2))
        assert 1.0 - 1e-12 <= a <= 100.0 + 1e-9


def test_run_prox_gradient_lasso_2d():
    g = centered_quadratic(np.eye(2), [3.0, 0.5])
    obj = CompositeObjective(g, l1_term(2, 1.0))
    trace = run_prox_gradient(obj, ScalingMatrix.identity(2), [0.0, 0.0], 1e-12)
    np.testing.assert_allclose(trace.final, [2.0, 0.0], atol=1e-10)
    assert trace.stopping_reason in ("step_below_threshold", "stationary")


def test_run_prox_gradient_quadratic_hessian_one_iteration(rng):
    H = random_spd(rng, 4)
    b = rng.standard_normal(4)
    obj = CompositeObjective(centered_quadratic(H, b), zero_term(4))
    trace = run_prox_gradient(obj, OseConfig("hessian"), 5 * rng.standard_normal(4), 1e-8)
    np.testing.assert_allclose(trace.iterates[1], b, atol=1e-10)
    assert trace.iterations <= 2


def test_run_threshold_infinity_single_step():
    obj = CompositeObjective(centered_quadratic(np.eye(2), [3.0, 0.5]), l1_term(2, 1.0))
    trace = run_prox_gradient(obj, ScalingMatrix.identity(2, 4.0), [0.0, 0.0], math.inf)
    assert trace.iterations == 1
    assert trace.stopping_reason == "step_below_threshold"
    assert len(trace.objective_values) == len(trace.iterates) == len(trace.step_norms) + 1
    rep = stopping_report(trace)
    assert rep.triggered_at == 1 and rep.final_step_norm <= rep.threshold


def test_monotone_descent(rng):
    for _ in range(10):
        d = int(rng.integers(2, 8))
        A = rng.standard_normal((3 * d, d))
        y = rng.standard_normal(3 * d)
        g = SmoothTerm(lambda t, A=A, y=y: 0.5 * float(np.sum((A @ t - y) ** 2)),
                       lambda t, A=A, y=y: A.T @ (A @ t - y), d, lambda t, A=A: A.T @ A)
        obj = CompositeObjective(g, l1_term(d, 0.5))
        # deliberately too large a step so the line search has to work
        trace = run_prox_gradient(obj, ScalingMatrix.identity(d, 0.01), np.zeros(d), 1e-9)
        f = np.asarray(trace.objective_values)
        assert np.all(np.diff(f) <= 1e-12 * np.maximum(1, np.abs(f[:-1])))


def test_run_prox_newton_quadratic_and_errors(rng):
    H = random_spd(rng, 3)
    b = rng.standard_normal(3)
    obj = CompositeObjective(centered_quadratic(H, b), zero_term(3))
    trace = run_prox_newton(obj, np.zeros(3), 1e-9)
    np.testing.assert_allclose(trace.iterates[1], b, atol=1e-10)
    no_hess = CompositeObjective(SmoothTerm(lambda t: 0.0, lambda t: 0 * t, 3), zero_term(3))
    with pytest.raises(ContractViolation):
        run_prox_newton(no_hess, np.zeros(3), 1e-3)
    with pytest.raises(ContractViolation):
        run_prox_newton(obj, np.zeros(3), 0.0)


def test_stationary_start_stops_immediately():
    obj = CompositeObjective(quadratic_term(np.eye(2)), l1_term(2, 1.0))
    trace = run_prox_newton(obj, np.zeros(2), 1e-6)
    assert trace.stopping_reason == "stationary"
    assert trace.iterations == 0


def test_composite_residual():
    obj = CompositeObjective(centered_quadratic(np.eye(1), [3.0]), l1_term(1, 1.0))
    assert composite_residual(obj, [2.0]) == 0.0
    assert composite_residual(obj, [0.0]) == pytest.approx(2.0)


def test_stopping_threshold():
    assert stopping_threshold(1.0, 100) == 0.1
    assert stopping_threshold(2.0, 4) == 1.0
    with pytest.raises(ContractViolation):
        stopping_threshold(1.0, 0)


def test_kappa_examples():
    k = stop_cond_kappa(RegularityConstants(1.0, 1.0, 1.0))
    assert k == pytest.approx(1 / 6)
    assert stop_cond_kappa(RegularityConstants(1.0, 1.0, 1.0), conservative=False) == \
        pytest.approx(math.sqrt(1 / 6))


def test_stop_cond_examples():
    g = quadratic_term(np.eye(1))
    obj = CompositeObjective(g, zero_term(1))
    consts = RegularityConstants(1.0, 1.0, 1.0)
    rep = check_stop_cond_inequality(obj, consts, [0.0], [0.0], [0.0])
    assert rep.holds and rep.step_norm == 0 and rep.distance_to_minimizer == 0
    ose = ose_prox_gradient(g, None, ScalingMatrix.identity(1), [1.0])
    rep = check_stop_cond_inequality(obj, consts, [1.0], [0.0], ose)
    assert rep.step_norm == 1.0 and rep.kappa == pytest.approx(1 / 6) and rep.holds


def test_stop_cond_soundness_sweep(rng):
    """Once the step is below t, the minimizer is within t / kappa."""
    for _ in range(30):
        d = int(rng.integers(1, 5))
        Q = random_spd(rng, d, 0.5, 4.0)
        eig = np.linalg.eigvalsh(Q)
        g = quadratic_term(Q, b=2 * rng.standard_normal(d))
        obj = CompositeObjective(g, l1_term(d, 0.3))
        C = ScalingMatrix(random_spd(rng, d, 1.0, 5.0))
        consts = RegularityConstants(eig[0], eig[-1], C.lambda_max)
        theta_hat, _ = solve_reference(obj, np.zeros(d))
        t = 1e-3
        trace = run_prox_gradient(obj, C, 5 * rng.standard_normal(d), t)
        theta_init = trace.iterates[-2]
        step = np.linalg.norm(prox_step(obj, C, theta_init) - theta_init)
        if step <= t:
            assert np.linalg.norm(theta_init - theta_hat) <= t / stop_cond_kappa(consts) + 1e-9


def prox_step(obj, C, theta):
    return ose_prox_gradient(obj.smooth, obj.nonsmooth, C, theta)


def test_l1_ose_matches_soft_threshold():
    g = centered_quadratic(np.eye(3), [3.0, -0.2, 1.5])
    out = ose_prox_gradient(g, l1_term(3, 1.0), ScalingMatrix.identity(3), np.zeros(3))
    np.testing.assert_array_equal(out, prox_l1([3.0, -0.2, 1.5], 1.0).point)
