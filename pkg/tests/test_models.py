import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from onestep.core import ContractViolation
from onestep.models import (
    BivariateNormalModel,
    CauchyModel,
    LogisticMatrixModel,
    SampleBatch,
    cauchy_fisher,
    cauchy_map_objective,
    cauchy_nll,
    cauchy_sample,
    logistic_objective,
    logistic_sample,
    logit_matrix,
    normal_nll,
    normal_sample,
    probability_matrix,
)

from conftest import central_difference


def test_cauchy_sample_median():
    model = CauchyModel(3.0, 2.0)
    n = 100_000
    x = cauchy_sample(model, n, 1).observations
    # asymptotic sd of the sample median is scale * pi / (2 sqrt(n))
    assert abs(np.median(x) - 3.0) <= 3 * 2.0 * math.pi / (2 * math.sqrt(n))


def test_cauchy_sample_determinism():
    m = CauchyModel(0.0, 20.0)
    np.testing.assert_array_equal(cauchy_sample(m, 50, 7).observations,
                                  cauchy_sample(m, 50, 7).observations)
    assert not np.array_equal(cauchy_sample(m, 50, 7).observations,
                              cauchy_sample(m, 50, 8).observations)
    with pytest.raises(ContractViolation):
        cauchy_sample(m, 0, 0)


def test_cauchy_nll_value_and_minimum():
    m = CauchyModel(0.0, 1.0)
    nll = cauchy_nll(m, SampleBatch(np.array([0.0])))
    assert nll.value(np.array([0.0])) == 0.0
    assert nll.value(np.array([1.0])) == pytest.approx(math.log(2.0))
    assert nll.gradient(np.array([0.0]))[0] == 0.0
    assert nll.hessian(np.array([0.0]))[0, 0] == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-30, 30), st.floats(0.5, 25))
def test_cauchy_derivatives_match_finite_differences(seed, theta, scale):
    m = CauchyModel(0.0, scale)
    nll = cauchy_nll(m, cauchy_sample(m, 40, seed))
    t = np.array([theta])
    h = 1e-5 * max(1.0, scale)
    g_fd = central_difference(nll.value, t, h)
    g = nll.gradient(t)
    assert abs(g[0] - g_fd[0]) <= 1e-6 * max(1.0, abs(g[0])) / min(1.0, scale) + 1e-9
    h2 = 1e-4 * max(1.0, scale)
    H_fd = central_difference(lambda x: nll.gradient(x)[0], t, h2)
    H = nll.hessian(t)[0, 0]
    assert abs(H - H_fd[0]) <= 1e-4 * max(1.0, abs(H)) + 1e-9


@pytest.mark.parametrize("scale, frozen", [(1.0, 0.49999999999915), (20.0, 0.00124999998302)])
def test_cauchy_fisher_against_quadrature(scale, frozen):
    m = CauchyModel(0.0, scale)

    def integrand(x):
        score = 2 * x / (scale ** 2 + x ** 2)
        return score ** 2 / (math.pi * scale * (1 + (x / scale) ** 2))

    val, _ = integrate.quad(integrand, -1e4, 1e4, points=[0.0], limit=400)
    assert val == pytest.approx(frozen, rel=1e-9)
    assert cauchy_fisher(m) == pytest.approx(val, rel=1e-6)
    assert cauchy_fisher(m) == 0.5 / scale ** 2


def test_cauchy_map_weight():
    m = CauchyModel(0.0, 20.0, prior_gamma=1000.0)
    obj = cauchy_map_objective(m, cauchy_sample(m, 100, 0))
    assert obj.nonsmooth.weight == pytest.approx(1e-5)
    with pytest.raises(ContractViolation):
        cauchy_map_objective(CauchyModel(), cauchy_sample(CauchyModel(), 5, 0))
    with pytest.raises(ContractViolation):
        CauchyModel(0.0, 0.0)


def test_normal_model():
    with pytest.raises(ContractViolation):
        BivariateNormalModel(sigma1=1.0, sigma2=1.0)
    m = BivariateNormalModel((1.0, -1.0), 10.0, 1.0)
    batch = normal_sample(m, 50_000, 3)
    x = batch.observations
    np.testing.assert_allclose(x.mean(axis=0), [1.0, -1.0], atol=0.2)
    np.testing.assert_allclose(x.std(axis=0), [10.0, 1.0], rtol=0.02)
    nll = normal_nll(m, SampleBatch(x[:20]))
    theta = np.array([0.3, 0.7])
    direct = np.mean([0.5 * np.sum((theta - xi) ** 2 * m.precision) for xi in x[:20]])
    assert nll.value(theta) == pytest.approx(direct, rel=1e-12)
    np.testing.assert_allclose(nll.gradient(theta), central_difference(nll.value, theta, 1e-5),
                               rtol=1e-6)
    np.testing.assert_array_equal(nll.hessian(theta), np.diag([0.01, 1.0]))


def test_logistic_minimizer_is_logit():
    freq = np.array([[1, 10], [24, 48]]) / 49
    obj = logistic_objective(LogisticMatrixModel(freq))
    theta = logit_matrix(freq).reshape(-1)
    np.testing.assert_allclose(obj.smooth.gradient(theta), 0.0, atol=1e-14)
    assert obj.smooth.hessian(np.zeros(4)) == pytest.approx(np.full(4, 0.25))


def test_logistic_saturation_and_coercivity():
    freq = np.full((2, 2), 0.5)
    obj = logistic_objective(LogisticMatrixModel(freq, 2))
    h = obj.smooth.hessian(np.full(4, 50.0))
    assert np.all(h >= 0) and np.all(h < 1e-20)
    assert np.isfinite(obj(np.full(4, 1e6)))
    assert obj(np.full(4, 1e6)) > obj(np.zeros(4))
    assert obj(np.full(4, -1e6)) > obj(np.zeros(4))
    # value stays finite where a naive log(1 + exp) overflows
    assert obj.smooth.value(np.full(4, 800.0)) == pytest.approx(4 * 800 * 0.5)


def test_logistic_derivatives(rng):
    freq = rng.integers(0, 50, size=(3, 3)) / 49
    obj = logistic_objective(LogisticMatrixModel(freq))
    theta = rng.standard_normal(9)
    np.testing.assert_allclose(obj.smooth.gradient(theta),
                               central_difference(obj.smooth.value, theta, 1e-6), rtol=1e-6,
                               atol=1e-9)


def test_logistic_model_validation_and_roundtrip():
    with pytest.raises(ContractViolation):
        LogisticMatrixModel(np.full((2, 3), 0.5))
    with pytest.raises(ContractViolation):
        LogisticMatrixModel(np.full((2, 2), 0.3), 49)
    with pytest.raises(ContractViolation):
        LogisticMatrixModel(np.full((2, 2), 1.5), 2)
    m = LogisticMatrixModel(np.zeros((3, 3)))
    assert m.effective_n == 9 * 49 and m.with_penalty(2.0).penalty == 2.0
    p = np.array([[0.2, 0.5], [0.9, 0.01]])
    np.testing.assert_allclose(probability_matrix(logit_matrix(p)), p, rtol=1e-12)
    np.testing.assert_allclose(probability_matrix(np.zeros(4), (2, 2)), np.full((2, 2), 0.5))
    sampled = logistic_sample(np.zeros((4, 4)), 49, 0)
    assert sampled.freq.shape == (4, 4)
    np.testing.assert_array_equal(sampled.freq, logistic_sample(np.zeros((4, 4)), 49, 0).freq)
