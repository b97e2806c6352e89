import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from genalpha.splines import (DomainError, KnotVector, KnotVectorError, SplineSpace, basis_derivatives,
                              basis_matrix, eval_basis, find_span, find_spans, tensor_eval)


def linear_scan_span(kv, x):
    t, p = kv.knots, kv.degree
    if x == 1.0:
        return kv.size - 1
    for i in range(p, kv.size):
        if t[i] <= x < t[i + 1]:
            return i
    raise AssertionError


def cox_de_boor(t, p, i, x):
    """Textbook recursion with 0/0 = 0; right end handled by closing the last span."""
    if p == 0:
        last = t[i + 1] == t[-1] and t[i] < t[i + 1]
        return 1.0 if (t[i] <= x < t[i + 1]) or (last and x == t[-1]) else 0.0
    out = 0.0
    if t[i + p] > t[i]:
        out += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, p - 1, i, x)
    if t[i + p + 1] > t[i + 1]:
        out += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, p - 1, i + 1, x)
    return out


def test_rejects_invalid_knot_vectors():
    with pytest.raises(KnotVectorError):
        KnotVector(2, [0, 0, 0, 0.5, 0.4, 1, 1, 1])
    with pytest.raises(KnotVectorError):
        KnotVector(2, [0, 0, 0.5, 1, 1, 1])
    with pytest.raises(KnotVectorError):
        KnotVector(1, [0, 0, 0.5, 0.5, 1, 1])
    with pytest.raises(KnotVectorError):
        KnotVector.uniform(2, 0)


def test_knots_are_read_only():
    kv = KnotVector.uniform(2, 4)
    with pytest.raises(ValueError):
        kv.knots[3] = 0.1


def test_find_span_outside_domain():
    kv = KnotVector.uniform(3, 5)
    with pytest.raises(DomainError):
        find_span(kv, 1.0 + 1e-9)
    with pytest.raises(DomainError):
        find_spans(kv, [-0.1, 0.5])


def test_find_span_endpoint():
    kv = KnotVector.uniform(3, 5)
    assert find_span(kv, 1.0) == kv.size - 1
    assert find_span(kv, 0.0) == 3


@settings(max_examples=60, deadline=None)
@given(p=st.integers(0, 5), n=st.integers(1, 9), x=st.floats(0, 1))
def test_find_span_matches_linear_scan(p, n, x):
    kv = KnotVector.uniform(p, n)
    assert find_span(kv, x) == linear_scan_span(kv, x)


@settings(max_examples=60, deadline=None)
@given(p=st.integers(0, 5), n=st.integers(1, 8), x=st.floats(0, 1))
def test_partition_of_unity_and_nonnegativity(p, n, x):
    kv = KnotVector.uniform(p, n)
    _, vals = eval_basis(kv, x)
    assert np.all(vals >= -1e-14)
    assert abs(vals.sum() - 1.0) < 1e-12


def test_matches_cox_de_boor_with_repeated_knots():
    kv = KnotVector(3, [0, 0, 0, 0, 0.2, 0.5, 0.5, 0.7, 1, 1, 1, 1])
    xs = np.linspace(0, 1, 37)
    B = basis_matrix(kv, xs)
    ref = np.array([[cox_de_boor(kv.knots, 3, i, x) for i in range(kv.size)] for x in xs])
    np.testing.assert_allclose(B, ref, atol=1e-13)


@pytest.mark.parametrize("p", [1, 2, 3, 5])
def test_derivatives_match_finite_differences(p):
    kv = KnotVector.uniform(p, 7)
    xs = np.array([0.03, 0.31, 0.5 + 1e-3, 0.77, 0.96])
    h = 1e-6
    for order in range(1, min(p, 3) + 1):
        d = basis_matrix(kv, xs, order)
        fd = (basis_matrix(kv, xs + h, order - 1) - basis_matrix(kv, xs - h, order - 1)) / (2 * h)
        scale = max(1.0, np.abs(d).max())
        np.testing.assert_allclose(d / scale, fd / scale, atol=1e-6)


def test_derivatives_above_degree_vanish():
    kv = KnotVector.uniform(2, 4)
    _, ders = basis_derivatives(kv, [0.3], 4)
    assert np.all(ders[0, 3:] == 0.0)


def test_derivative_sum_vanishes():
    kv = KnotVector(4, [0, 0, 0, 0, 0, 0.3, 0.3, 0.6, 1, 1, 1, 1, 1])
    _, ders = basis_derivatives(kv, np.linspace(0, 1, 11), 3)
    np.testing.assert_allclose(ders[:, 1:, :].sum(axis=2), 0.0, atol=1e-9)


def test_greville_reproduces_linear_function():
    kv = KnotVector(3, [0, 0, 0, 0, 0.1, 0.4, 0.8, 1, 1, 1, 1])
    xs = np.linspace(0, 1, 13)
    np.testing.assert_allclose(basis_matrix(kv, xs) @ kv.greville(), xs, atol=1e-13)


def test_tensor_eval_and_indexing():
    space = SplineSpace.uniform(2, [3, 4], dim=2)
    assert space.shape == (5, 6)
    act = tensor_eval(space, [0.41, 0.77])
    assert act.flat.size == 9
    assert abs(act.values.sum() - 1.0) < 1e-13
    np.testing.assert_array_equal(space.flat_index(space.multi_index(act.flat)), act.flat)
    # co-lexicographic: first index runs fastest
    assert space.flat_index([1, 0]) == 1 and space.flat_index([0, 1]) == 5


def test_mesh_quantities():
    kv = KnotVector.from_breakpoints(2, [0, 0.25, 1])
    assert kv.n_spans == 2
    assert kv.mesh_size() == 0.75
    assert kv.quasi_uniformity() == pytest.approx(1 / 3)
    assert kv.reversed() == KnotVector.from_breakpoints(2, [0, 0.75, 1])
