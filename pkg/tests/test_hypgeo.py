import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from issm.exceptions import DomainError, InvalidInputError
from issm.hypgeo import exp_map_origin, exp_map_origin_rows, log_map_origin, metric_factor, validate_in_ball

TANH_HALF = 0.46211715726000974  # math.tanh(0.5), cross-checked with mpmath to 20 digits


def test_validate_examples():
    assert validate_in_ball([0, 0], 1)
    assert not validate_in_ball([1, 0], 1)
    assert validate_in_ball([0.3, 0.4], 1)


def test_validate_rejects_nan():
    with pytest.raises(InvalidInputError):
        validate_in_ball([np.nan, 0.0], 1)


@pytest.mark.parametrize("c", [0.0, -1.0, np.inf])
def test_bad_curvature(c):
    with pytest.raises(InvalidInputError):
        exp_map_origin([1.0], c)


def test_metric_factor_examples():
    assert metric_factor([0.0], 1) == 4.0
    assert metric_factor([0.5], 1) == pytest.approx((2 / 0.75) ** 2, rel=1e-15)
    assert metric_factor([0.5], 1) == pytest.approx(7.111111111111111, rel=1e-12)
    with pytest.raises(DomainError):
        metric_factor([0.5], 4)


@pytest.mark.parametrize("c", [0.25, 1.0, 4.0, 17.0])
def test_metric_factor_origin_is_four(c):
    assert metric_factor(np.zeros(3), c) == 4.0


def test_exp_map_examples():
    np.testing.assert_array_equal(exp_map_origin([0.0, 0.0], 1), [0.0, 0.0])
    np.testing.assert_allclose(exp_map_origin([0.5], 1), [TANH_HALF], rtol=1e-15)
    np.testing.assert_allclose(exp_map_origin([0.5], 1), [0.4621172], atol=5e-8)
    np.testing.assert_allclose(exp_map_origin([0.25], 4), [TANH_HALF / 2], rtol=1e-15)
    np.testing.assert_allclose(exp_map_origin([0.25], 4), [0.2310586], atol=5e-8)


def test_exp_map_rejects_inf():
    with pytest.raises(InvalidInputError):
        exp_map_origin([np.inf], 1)


def test_log_map_examples():
    np.testing.assert_array_equal(log_map_origin([0.0], 1), [0.0])
    np.testing.assert_allclose(log_map_origin([TANH_HALF], 1), [0.5], rtol=1e-14)
    np.testing.assert_allclose(log_map_origin([0.4621172], 1), [0.5], atol=1e-7)
    with pytest.raises(DomainError):
        log_map_origin([0.9999999995], 1)


def test_exp_map_saturation_stays_inside():
    y = exp_map_origin([1e6, 0.0], 1.0)
    assert validate_in_ball(y, 1.0)


def test_rows_match_single():
    X = np.random.default_rng(0).normal(size=(20, 4)) * 2
    X[3] = 0
    Y = exp_map_origin_rows(X, 2.0)
    for x, y in zip(X, Y):
        np.testing.assert_allclose(y, exp_map_origin(x, 2.0), rtol=1e-14, atol=1e-300)


vectors = arrays(np.float64, st.integers(1, 6), elements=st.floats(-3 / np.sqrt(6), 3 / np.sqrt(6)))
curvatures = st.sampled_from([0.25, 1.0, 4.0])


@settings(max_examples=200, deadline=None)
@given(vectors, curvatures)
def test_round_trip(v, c):
    back = log_map_origin(exp_map_origin(v, c), c)
    assert np.linalg.norm(back - v) <= 1e-9 * (1 + np.linalg.norm(v))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 5), elements=st.floats(-50, 50)), curvatures)
def test_containment_and_direction(v, c):
    y = exp_map_origin(v, c)
    assert validate_in_ball(y, c)
    if np.linalg.norm(v) > 1e-12:
        k = (y @ v) / (v @ v)
        assert k > 0
        np.testing.assert_allclose(y, k * v, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(1e-6, 1.0), curvatures)
def test_radial_norm_monotone(r, dr, c):
    d = np.array([0.6, -0.8])
    a = np.linalg.norm(exp_map_origin(r * d, c))
    b = np.linalg.norm(exp_map_origin((r + dr) * d, c))
    assert a < b < 1 / np.sqrt(c)
