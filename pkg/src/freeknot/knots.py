"""Knot vectors and the small calculus used by the derivative formulas.

Knot vectors are immutable: every operator returns a new vector. Equality of
abscissae is exact, so repeated knots only appear when created on purpose.
"""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import InvalidKnotArityError, OutOfRangeError


class KnotVector:
    """Non-decreasing sequence of real breakpoints."""

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[float]):
        arr = np.array(values, dtype=float).ravel()
        if arr.size < 2:
            raise InvalidKnotArityError(f"knot vector needs at least 2 entries, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("knot values must be finite")
        if np.any(np.diff(arr) < 0):
            raise ValueError("knot values must be non-decreasing")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._values
        return self._values.astype(dtype)

    def __len__(self) -> int:
        return self._values.size

    def __getitem__(self, idx):
        return self._values[idx]

    def __iter__(self):
        return iter(self._values.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self._values.shape == other._values.shape and bool(np.all(self._values == other._values))

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        return f"KnotVector({self._values.tolist()!r})"

    def drop_first(self) -> "KnotVector":
        return drop_first(self)

    def drop_last(self) -> "KnotVector":
        return drop_last(self)

    def insert(self, x: float) -> "KnotVector":
        return insert(self, x)

    def width(self) -> float:
        return width(self)

    def min_mesh_size(self) -> float:
        return min_mesh_size(self)


def _as_array(kv) -> np.ndarray:
    return kv.values if isinstance(kv, KnotVector) else np.asarray(kv, dtype=float)


def drop_first(kv: KnotVector) -> KnotVector:
    """Remove the first knot."""
    t = _as_array(kv)
    if t.size < 3:
        raise InvalidKnotArityError("dropping a knot needs length >= 3")
    return KnotVector(t[1:])


def drop_last(kv: KnotVector) -> KnotVector:
    """Remove the last knot."""
    t = _as_array(kv)
    if t.size < 3:
        raise InvalidKnotArityError("dropping a knot needs length >= 3")
    return KnotVector(t[:-1])


def insert(kv: KnotVector, x: float) -> KnotVector:
    """Insert ``x`` keeping the order; ``x`` must lie in [first, last]."""
    t = _as_array(kv)
    x = float(x)
    if not (t[0] <= x <= t[-1]):
        raise OutOfRangeError(f"{x} outside [{t[0]}, {t[-1]}]")
    pos = int(np.searchsorted(t, x, side="right"))
    return KnotVector(np.concatenate([t[:pos], [x], t[pos:]]))


def width(kv: KnotVector) -> float:
    """Distance between the last and the first knot."""
    t = _as_array(kv)
    return float(t[-1] - t[0])


def min_mesh_size(kv: KnotVector) -> float:
    """Smallest gap between consecutive knots (0 when a knot repeats)."""
    t = _as_array(kv)
    return float(np.min(np.diff(t)))


def joint_min_mesh_size(*kvs: KnotVector) -> float:
    """Minimum of ``min_mesh_size`` over several knot vectors."""
    if not kvs:
        raise ValueError("need at least one knot vector")
    return min(min_mesh_size(kv) for kv in kvs)
