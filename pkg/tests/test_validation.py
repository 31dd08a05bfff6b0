import numpy as np
import pytest

from otfuse import exceptions as ex
from otfuse.validation import as_feature_map, as_matrix, as_vector, check_distribution


def test_exception_hierarchy():
    for cls in (ex.ParameterError, ex.DomainError, ex.ShapeError, ex.DataError):
        assert issubclass(cls, ex.OTFuseError) and issubclass(cls, ValueError)
    assert issubclass(ex.DegenerateVectorError, ex.DomainError)
    assert issubclass(ex.DegenerateTargetError, ex.DomainError)
    assert issubclass(ex.NumericError, ArithmeticError)


def test_as_vector_and_matrix():
    np.testing.assert_array_equal(as_vector([1, 2]), [1.0, 2.0])
    with pytest.raises(ex.ShapeError):
        as_vector([[1]])
    with pytest.raises(ex.DomainError):
        as_vector([np.inf])
    assert as_matrix(np.zeros((0, 3)), allow_empty=True).shape == (0, 3)
    with pytest.raises(ex.DomainError):
        as_matrix(np.zeros((0, 3)))
    with pytest.raises(ex.ShapeError):
        as_matrix([1, 2])


def test_check_distribution():
    check_distribution([0.25, 0.75])
    check_distribution([1.0, 1e-10])
    for bad in ([], [0.5, 0.4], [1.5, -0.5]):
        with pytest.raises(ex.DomainError):
            check_distribution(bad)


def test_as_feature_map():
    assert as_feature_map(np.ones((2, 3, 4))).shape == (2, 3, 4)
    with pytest.raises(ex.ShapeError):
        as_feature_map(np.ones((2, 3)))
    with pytest.raises(ex.DomainError):
        as_feature_map(np.ones((0, 3, 4)))
