import numpy as np
import pytest
from hypothesis import given, strategies as st

from freeknot.errors import InvalidKnotArityError, OutOfRangeError
from freeknot.knots import (KnotVector, drop_first, drop_last, insert, joint_min_mesh_size, min_mesh_size,
                            width)

sorted_lists = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=12).map(sorted)


def test_drop_operators():
    kv = KnotVector([0.0, 1.0, 2.0, 5.0])
    assert drop_first(kv) == KnotVector([1.0, 2.0, 5.0])
    assert drop_last(kv) == KnotVector([0.0, 1.0, 2.0])
    assert kv.drop_first().drop_last() == KnotVector([1.0, 2.0])


def test_drop_needs_three_knots():
    with pytest.raises(InvalidKnotArityError):
        drop_first(KnotVector([0.0, 1.0]))
    with pytest.raises(InvalidKnotArityError):
        drop_last(KnotVector([0.0, 1.0]))


def test_insert_keeps_order_and_duplicates():
    kv = KnotVector([0.0, 1.0, 2.0])
    assert insert(kv, 1.5) == KnotVector([0.0, 1.0, 1.5, 2.0])
    assert insert(kv, 1.0) == KnotVector([0.0, 1.0, 1.0, 2.0])
    assert insert(kv, 0.0) == KnotVector([0.0, 0.0, 1.0, 2.0])


def test_insert_out_of_range():
    with pytest.raises(OutOfRangeError):
        insert(KnotVector([0.0, 1.0]), 1.5)
    with pytest.raises(OutOfRangeError):
        insert(KnotVector([0.0, 1.0]), -0.1)


def test_width_and_mesh_size():
    kv = KnotVector([0.0, 0.5, 2.0, 2.25])
    assert width(kv) == 2.25
    assert min_mesh_size(kv) == 0.25
    assert joint_min_mesh_size(kv, KnotVector([0.0, 0.1])) == pytest.approx(0.1)
    assert min_mesh_size(KnotVector([0.0, 1.0, 1.0])) == 0.0


def test_rejects_decreasing_and_short():
    with pytest.raises(ValueError):
        KnotVector([1.0, 0.0])
    with pytest.raises(InvalidKnotArityError):
        KnotVector([1.0])
    with pytest.raises(ValueError):
        KnotVector([0.0, np.inf])


def test_immutable_and_hashable():
    kv = KnotVector([0.0, 1.0, 3.0])
    with pytest.raises(ValueError):
        np.asarray(kv)[0] = 5.0
    assert hash(kv) == hash(KnotVector([0.0, 1.0, 3.0]))
    assert kv != KnotVector([0.0, 1.0, 3.0 + 1e-15])


@given(sorted_lists, st.floats(0, 1))
def test_insert_then_drop_properties(values, frac):
    kv = KnotVector(values)
    x = values[0] + frac * (values[-1] - values[0])
    x = min(max(x, values[0]), values[-1])
    new = insert(kv, x)
    arr = np.asarray(new)
    assert len(new) == len(kv) + 1
    assert np.all(np.diff(arr) >= 0)
    assert width(new) == width(kv)
    assert sorted(arr.tolist()) == sorted(values + [x])


@given(sorted_lists)
def test_drop_preserves_sum(values):
    kv = KnotVector(values)
    assert np.isclose(np.sum(drop_first(kv)) + values[0], np.sum(values))
    assert np.isclose(np.sum(drop_last(kv)) + values[-1], np.sum(values))
    assert width(drop_first(kv)) <= width(kv) and width(drop_last(kv)) <= width(kv)
