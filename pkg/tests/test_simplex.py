import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bdsim import simplex
from bdsim.errors import DimensionMismatch, EmptyInput, NegativeEntry, SumNotOne


def test_validate_accepts_simplex_point():
    v = simplex.validate([0.7, 0.2, 0.1])
    assert v.tolist() == [0.7, 0.2, 0.1]
    assert not v.flags.writeable


def test_validate_rejects_median_counterexample():
    with pytest.raises(SumNotOne) as info:
        simplex.validate([0.7, 0.1, 0.1])
    assert info.value.deviation == pytest.approx(0.1)


def test_validate_accepts_vertex():
    simplex.validate([1, 0, 0])


def test_validate_rejects_negative_and_nan():
    with pytest.raises(NegativeEntry):
        simplex.validate([1.1, -0.1])
    with pytest.raises(SumNotOne):
        simplex.validate([float("nan"), 1.0])


def test_validate_never_renormalizes():
    with pytest.raises(SumNotOne):
        simplex.validate([2.0, 2.0])


def test_validate_rejects_single_class():
    with pytest.raises(DimensionMismatch):
        simplex.validate([1.0])


@pytest.mark.parametrize(
    "b, expected",
    [((0, 1, 0), (0.440, 0.474, 0.086)), ((0, 0, 1), (0.440, 0.046, 0.514))],
)
def test_mix_reproduces_attack_figure(b, expected):
    out = simplex.mix([0.77, 0.08, 0.15], b, 3 / 7)
    np.testing.assert_allclose(out, expected, atol=5e-4)


def test_mix_alpha_zero_is_identity():
    h = [0.3, 0.3, 0.4]
    np.testing.assert_array_equal(simplex.mix(h, [1, 0, 0], 0.0), h)


def test_l2_distance_examples():
    assert simplex.l2_distance([1, 0, 0], [0, 1, 0]) == pytest.approx(math.sqrt(2))
    assert simplex.l2_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert simplex.l2_distance([0.5, 0.5, 0], [0, 0.5, 0.5]) == pytest.approx(math.sqrt(0.5))
    with pytest.raises(DimensionMismatch):
        simplex.l2_distance([0.5, 0.5], [1, 0, 0])


def test_coordwise_median_counterexample_leaves_simplex():
    med = simplex.coordwise_median([(0.7, 0.2, 0.1), (0.8, 0.1, 0.1), (0, 0, 1)])
    assert med.tolist() == [0.7, 0.1, 0.1]
    assert not simplex.is_valid(med)


def test_coordwise_median_trivial_cases():
    p = [0.2, 0.5, 0.3]
    np.testing.assert_array_equal(simplex.coordwise_median([p, p, p]), p)
    np.testing.assert_array_equal(simplex.coordwise_median([[1, 0], [1, 0], [0, 1]]), [1, 0])
    with pytest.raises(EmptyInput):
        simplex.coordwise_median(np.zeros((0, 3)))


def test_prediction_set_validation_reports_cell():
    preds = np.full((2, 3, 2), 0.5)
    simplex.validate_prediction_set(preds)
    preds[1, 2] = [0.9, 0.2]
    with pytest.raises(SumNotOne, match="client 1, sample 2"):
        simplex.validate_prediction_set(preds)
    assert simplex.count_invalid_rows(preds) == 1


simplex_points = st.integers(2, 8).flatmap(
    lambda c: st.tuples(
        st.lists(st.floats(0.01, 10), min_size=c, max_size=c),
        st.lists(st.floats(0.01, 10), min_size=c, max_size=c),
    )
)


@settings(max_examples=200, deadline=None)
@given(simplex_points, st.floats(0, 0.999))
def test_mix_stays_in_simplex(pair, alpha):
    a = np.array(pair[0]) / sum(pair[0])
    b = np.array(pair[1]) / sum(pair[1])
    simplex.validate(simplex.mix(a, b, alpha))


@settings(max_examples=200, deadline=None)
@given(simplex_points)
def test_distance_bounded_by_diameter(pair):
    a = np.array(pair[0]) / sum(pair[0])
    b = np.array(pair[1]) / sum(pair[1])
    assert 0 <= simplex.l2_distance(a, b) <= math.sqrt(2) + 1e-12
