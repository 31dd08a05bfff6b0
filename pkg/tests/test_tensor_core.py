import numpy as np
import pytest
import scipy.special
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from otfuse.exceptions import DegenerateVectorError, DomainError, ParameterError, ShapeError
from otfuse.tensor_core import (
    cosine_distance,
    logsumexp,
    marginalize_joint,
    softmax_with_temperature,
    tensor_product_joint,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_logsumexp_matches_scipy(a):
    np.testing.assert_allclose(logsumexp(a, axis=1), scipy.special.logsumexp(a, axis=1), rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(logsumexp(a), scipy.special.logsumexp(a), rtol=1e-12, atol=1e-12)


def test_logsumexp_handles_large_and_neg_inf():
    assert logsumexp(np.array([1000.0, 1000.0])) == pytest.approx(1000.0 + np.log(2.0))
    assert logsumexp(np.array([-np.inf, -np.inf])) == -np.inf
    out = logsumexp(np.array([[0.0, -np.inf], [-np.inf, -np.inf]]), axis=1, keepdims=True)
    assert out.shape == (2, 1)
    assert out[0, 0] == 0.0 and out[1, 0] == -np.inf


@given(arrays(np.float64, st.integers(1, 8), elements=finite), st.floats(0.01, 10.0))
def test_softmax_matches_scipy(z, tau):
    np.testing.assert_allclose(softmax_with_temperature(z, tau), scipy.special.softmax(z / tau), atol=1e-12)


def test_softmax_examples():
    np.testing.assert_allclose(softmax_with_temperature([0.0, 0.0], 1.0), [0.5, 0.5])
    p = softmax_with_temperature([1.0, 0.0], 0.07)
    assert p[0] == pytest.approx(1.0 / (1.0 + np.exp(-1.0 / 0.07)), rel=1e-12)
    p = softmax_with_temperature([1000.0, 0.0], 1.0)
    assert np.all(np.isfinite(p)) and p[0] == 1.0
    batch = softmax_with_temperature(np.zeros((3, 4)), 1.0)
    np.testing.assert_allclose(batch, 0.25)


@pytest.mark.parametrize("tau", [0.0, -1.0])
def test_softmax_rejects_nonpositive_temperature(tau):
    with pytest.raises(ParameterError):
        softmax_with_temperature([1.0], tau)


def test_softmax_rejects_empty():
    with pytest.raises(DomainError):
        softmax_with_temperature(np.array([]), 1.0)


def test_tensor_product_ordering_is_weather_major():
    pw, pd, pr = np.array([0.2, 0.8]), np.array([0.5, 0.5]), np.array([0.1, 0.9])
    joint = tensor_product_joint(pw, pd, pr)
    for w in range(2):
        for d in range(2):
            for r in range(2):
                assert joint[(w * 2 + d) * 2 + r] == pytest.approx(pw[w] * pd[d] * pr[r], abs=0)
    assert joint.sum() == pytest.approx(1.0)


def _simplex(n):
    return arrays(np.float64, n, elements=st.floats(0.01, 1.0)).map(lambda v: v / v.sum())


@given(_simplex(5), _simplex(2), _simplex(2))
def test_tensor_product_remarginalizes(pw, pd, pr):
    for back, orig in zip(marginalize_joint(tensor_product_joint(pw, pd, pr), (5, 2, 2)), (pw, pd, pr)):
        np.testing.assert_allclose(back, orig, atol=1e-12)


def test_tensor_product_one_hot_gives_single_mass():
    joint = tensor_product_joint([0, 1, 0, 0, 0], [1, 0], [0, 1])
    assert joint.sum() == 1.0 and joint[(1 * 2 + 0) * 2 + 1] == 1.0


def test_tensor_product_rejects_non_distribution():
    with pytest.raises(DomainError):
        tensor_product_joint([0.5, 0.6], [1.0], [1.0])


def test_cosine_distance_known_values():
    assert cosine_distance([1, 0], [1, 0]) == 0.0
    assert cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert cosine_distance([1, 0], [-1, 0]) == 2.0
    assert cosine_distance([3, 4], [6, 8]) == pytest.approx(0.0, abs=1e-15)


@given(arrays(np.float64, 4, elements=st.floats(-10, 10)), arrays(np.float64, 4, elements=st.floats(-10, 10)))
def test_cosine_distance_range_and_symmetry(a, b):
    if np.linalg.norm(a) < 1e-6 or np.linalg.norm(b) < 1e-6:
        return
    d = cosine_distance(a, b)
    assert 0.0 <= d <= 2.0
    assert d == pytest.approx(cosine_distance(b, a), abs=1e-15)


def test_cosine_distance_errors():
    with pytest.raises(DegenerateVectorError):
        cosine_distance([0, 0], [1, 0])
    with pytest.raises(ShapeError):
        cosine_distance([1, 0], [1, 0, 0])
