import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from onestep.core import (
    CompositeObjective,
    ContractViolation,
    NotPositiveDefiniteError,
    RegularityConstants,
    ScalingMatrix,
    box_indicator,
    convexity_spot_check,
    generic_term,
    l1_term,
    quadratic_term,
    ridge_to_spd,
    spd_solve,
    weighted_norm,
    zero_term,
)

from conftest import random_spd

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_weighted_norm_examples():
    assert weighted_norm(np.zeros(3), ScalingMatrix(random_spd(np.random.default_rng(0), 3))) == 0
    assert weighted_norm([1.0, 0.0], ScalingMatrix.identity(2)) == 1.0
    assert weighted_norm([1.0, 1.0], ScalingMatrix(np.diag([4.0, 9.0]))) == pytest.approx(math.sqrt(13))


def test_weighted_norm_dimension_mismatch():
    with pytest.raises(ContractViolation):
        weighted_norm([1.0, 2.0, 3.0], ScalingMatrix.identity(2))


@given(arrays(float, st.integers(1, 8), elements=finite))
def test_weighted_norm_identity_is_euclidean(x):
    assert weighted_norm(x, ScalingMatrix.identity(x.size)) == pytest.approx(
        np.linalg.norm(x), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("C, b, expected", [
    (np.eye(2), [3.0, -2.0], [3.0, -2.0]),
    (np.diag([2.0, 4.0]), [2.0, 4.0], [1.0, 1.0]),
    ([[2.0, 1.0], [1.0, 2.0]], [3.0, 3.0], [1.0, 1.0]),
])
def test_spd_solve_examples(C, b, expected):
    y = spd_solve(ScalingMatrix(C), b)
    np.testing.assert_allclose(y, expected, rtol=0, atol=1e-12)
    assert np.linalg.norm(np.asarray(C) @ y - b) <= 1e-10 * (1 + np.linalg.norm(b))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_spd_solve_roundtrip(d, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, d))
    C = A.T @ A + np.eye(d)
    y = rng.standard_normal(d)
    got = spd_solve(ScalingMatrix(C), C @ y)
    assert np.linalg.norm(got - y) <= 1e-9 * max(1.0, np.linalg.norm(y))


def test_scaling_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveDefiniteError):
        ScalingMatrix(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefiniteError):
        ScalingMatrix.diagonal([1.0, 0.0])
    with pytest.raises(ContractViolation):
        ScalingMatrix([[1.0, 0.5], [0.0, 1.0]])


def test_scaling_eigen_bounds_and_diagonal_detection():
    C = ScalingMatrix([[2.0, 1.0], [1.0, 2.0]])
    assert C.lambda_min == pytest.approx(1.0)
    assert C.lambda_max == pytest.approx(3.0)
    assert not C.is_diagonal
    D = ScalingMatrix(np.diag([5.0, 5.0]))
    assert D.is_diagonal and D.is_scalar
    np.testing.assert_allclose(D.chol @ D.chol.T, D.entries)
    assert ScalingMatrix.from_step(0.5, 3).is_scalar
    np.testing.assert_allclose(ScalingMatrix.from_step(0.5, 3).diag, 2.0)


def test_ridge_to_spd():
    C = ridge_to_spd(np.diag([1.0, -2.0]))
    assert C.lambda_min == pytest.approx(1e-8, abs=1e-12)
    assert C.lambda_max == pytest.approx(3.0 + 1e-8)
    # already definite: untouched
    np.testing.assert_array_equal(ridge_to_spd([[2.0, 0.5], [0.5, 1.0]]).entries,
                                  [[2.0, 0.5], [0.5, 1.0]])
    # diagonal given as a vector
    np.testing.assert_allclose(ridge_to_spd(np.array([0.25, -0.5])).diag, [0.75 + 1e-8, 1e-8])


def test_nonsmooth_terms():
    assert l1_term(3, 2.0)([1.0, -1.0, 0.5]) == 5.0
    box = box_indicator([0, 0], [1, 1])
    assert box([0.5, 0.5]) == 0.0
    assert box([2.0, 0.5]) == math.inf
    with pytest.raises(ContractViolation):
        box_indicator([1.0], [0.0])
    with pytest.raises(ContractViolation):
        generic_term(1, lambda x: math.inf, lambda x, t: x, feasible_point=[0.0])
    assert zero_term(2).prox(np.array([1.0, 2.0]), 3.0).tolist() == [1.0, 2.0]


def test_composite_dimension_mismatch():
    with pytest.raises(ContractViolation):
        CompositeObjective(quadratic_term(np.eye(2)), l1_term(3, 1.0))


def test_regularity_constants():
    RegularityConstants(1.0, 2.0, 3.0)
    with pytest.raises(ContractViolation):
        RegularityConstants(2.0, 1.0, 1.0)
    with pytest.raises(ContractViolation):
        RegularityConstants(0.0, 1.0, 1.0)


def test_convexity_spot_check_examples():
    assert convexity_spot_check(l1_term(3, 1.0), 100, 5.0, 0).violations == 0
    concave = convexity_spot_check(lambda w: -float(w @ w), 100, 2.0, 7, dim=3)
    assert concave.violations >= 1
    box = box_indicator(np.zeros(2), np.ones(2))
    rep = convexity_spot_check(box, 100, 0.5, 3, center=[0.5, 0.5])
    assert rep.violations == 0
