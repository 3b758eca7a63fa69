"""B-spline functors, divided differences and derivatives.

Two evaluation routes live here:

* reference routes acting on a single window of ``p + 2`` knots: the Cox-de Boor
  recursion, the divided-difference form, and the derivative formulas written in
  terms of normalised B-splines on dropped/duplicated windows;
* a vectorised cell kernel that evaluates the ``p + 1`` functions active on a cell
  together with their knot derivatives (forward-mode differentiation of the
  de Boor triangle). Assembly uses the kernel; the tests tie both routes together.

Knot indices are 0-based throughout (``0 .. p + 1`` inside a window).
"""
from __future__ import annotations

from math import factorial
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    CapabilityError,
    DerivativeOrderError,
    DistributionalValueError,
    InvalidKnotArityError,
)
from .knots import KnotVector


def _window(p: int, knots) -> np.ndarray:
    t = np.asarray(knots, dtype=float)
    if p < 0:
        raise ValueError("degree must be non-negative")
    if t.size != p + 2:
        raise InvalidKnotArityError(f"degree {p} needs {p + 2} knots, got {t.size}")
    return t


# ---------------------------------------------------------------------------
# divided differences


def divided_difference(abscissae, f: Callable | Sequence[Callable]) -> float:
    """Divided difference of ``f`` on non-decreasing abscissae.

    ``f`` is either a callable or a sequence ``[f, f', f'', ...]``. Repeated
    abscissae use the confluent rule ``D^r f(y) / r!`` and need the matching
    derivative.
    """
    y = np.asarray(abscissae, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("need at least one abscissa")
    if np.any(np.diff(y) < 0):
        raise ValueError("abscissae must be non-decreasing")
    derivs = list(f) if isinstance(f, (list, tuple)) else [f]
    # longest run of equal values decides the derivative order required
    run, longest = 1, 1
    for a, b in zip(y[:-1], y[1:]):
        run = run + 1 if a == b else 1
        longest = max(longest, run)
    if longest - 1 >= len(derivs):
        raise CapabilityError(
            f"repeated abscissae need derivative order {longest - 1}, only {len(derivs) - 1} given")

    n = y.size
    table = [float(derivs[0](yi)) for yi in y]
    # table[i] holds [y_i .. y_{i+level}] f after each sweep
    for level in range(1, n):
        new = []
        for i in range(n - level):
            j = i + level
            if y[j] == y[i]:
                new.append(float(derivs[level](y[i])) / factorial(level))
            else:
                new.append((table[i + 1] - table[i]) / (y[j] - y[i]))
        table = new
    return table[0]


def truncated_power(x: float, p: int) -> Callable:
    """The map ``y -> (y - x)_+^p`` with ``0^0`` taken as 0 (half-open support)."""
    def g(y):
        d = np.asarray(y, dtype=float) - x
        return np.where(d > 0, np.maximum(d, 0.0) ** p, 0.0)
    return g


def eval_divided_difference(p: int, knots, x: float) -> float:
    """B-spline value through ``width * [knots](. - x)_+^p`` (simple knots)."""
    t = _window(p, knots)
    return float((t[-1] - t[0]) * divided_difference(t, truncated_power(float(x), p)))


# ---------------------------------------------------------------------------
# Cox-de Boor on one window


def eval_bspline(p: int, knots, x, closed_right: bool = False):
    """Value of the degree-``p`` B-spline on a ``p + 2`` knot window.

    Uses half-open cells ``[t_i, t_{i+1})``; with ``closed_right`` the last
    non-empty cell also contains its right end. Zero denominators drop the term.
    """
    t = _window(p, knots)
    xa = np.asarray(x, dtype=float)
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    nb = [((t[i] <= xa) & (xa < t[i + 1])).astype(float) for i in range(p + 1)]
    if closed_right:
        nonempty = [i for i in range(p + 1) if t[i] < t[i + 1]]
        if nonempty:
            last = nonempty[-1]
            nb[last] = np.where(xa == t[last + 1], 1.0, nb[last])
    for q in range(1, p + 1):
        new = []
        for i in range(p + 1 - q):
            acc = np.zeros_like(xa)
            d1 = t[i + q] - t[i]
            if d1 != 0.0:
                acc = acc + (xa - t[i]) / d1 * nb[i]
            d2 = t[i + q + 1] - t[i + 1]
            if d2 != 0.0:
                acc = acc + (t[i + q + 1] - xa) / d2 * nb[i + 1]
            new.append(acc)
        nb = new
    out = nb[0]
    return float(out[0]) if scalar else out


def _normalised_ae(q: int, w: np.ndarray, x) -> np.ndarray:
    """Normalised B-spline, with zero-width windows read as 0 away from the atom."""
    wd = w[-1] - w[0]
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if wd == 0.0:
        return np.zeros_like(xa)
    return eval_bspline(q, w, xa) / wd


def eval_normalised(p: int, knots, x):
    """``B_p / width``; refuses zero-width windows (a Dirac for ``p = 0``)."""
    t = _window(p, knots)
    wd = t[-1] - t[0]
    if wd == 0.0:
        raise DistributionalValueError("normalised B-spline on a zero-width window is a distribution")
    return eval_bspline(p, t, x) / wd


def _dn(q: int, w: np.ndarray, x, j: int) -> np.ndarray:
    """j-th spatial derivative of the normalised spline ``N_q(w)`` (a.e.)."""
    if j == 0:
        return _normalised_ae(q, w, x)
    wd = w[-1] - w[0]
    if wd == 0.0:
        return np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
    return -(q / wd) * (_dn(q - 1, w[1:], x, j - 1) - _dn(q - 1, w[:-1], x, j - 1))


def _scalarise(x, out):
    return float(out[0]) if np.ndim(x) == 0 else out


def eval_dx(p: int, knots, x, k: int = 1):
    """k-th spatial derivative, ``k <= p`` (right limits at knots)."""
    t = _window(p, knots)
    if k < 0:
        raise DerivativeOrderError("derivative order must be non-negative")
    if k > p:
        raise DerivativeOrderError(f"order {k} exceeds degree {p}")
    if k == 0:
        return eval_bspline(p, t, x)
    out = -p * (_dn(p - 1, t[1:], x, k - 1) - _dn(p - 1, t[:-1], x, k - 1))
    return _scalarise(x, out)


def _check_index(p: int, i: int):
    if not 0 <= i <= p + 1:
        raise IndexError(f"knot index {i} outside 0..{p + 1}")


def eval_dknot(p: int, knots, i: int, x):
    """Derivative of ``B_p(knots)(x)`` with respect to knot ``i`` (0-based)."""
    t = _window(p, knots)
    _check_index(p, i)
    if p == 0:
        raise DistributionalValueError("knot derivatives of degree-0 splines are Diracs")
    s = KnotVector(t).insert(t[i]).values
    out = np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
    if i != 0:
        out = out + _normalised_ae(p, s[1:], x)
    if i != p + 1:
        out = out - _normalised_ae(p, s[:-1], x)
    return _scalarise(x, out)


def eval_dknot_dx(p: int, knots, i: int, x):
    """Mixed derivative: knot ``i`` then space. Needs ``p >= 2``."""
    t = _window(p, knots)
    _check_index(p, i)
    if p < 2:
        raise DerivativeOrderError("mixed knot/space derivative needs degree >= 2")
    s = KnotVector(t).insert(t[i]).values
    out = np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))
    if i != 0:
        out = out + _dn(p, s[1:], x, 1)
    if i != p + 1:
        out = out - _dn(p, s[:-1], x, 1)
    return _scalarise(x, out)


# ---------------------------------------------------------------------------
# vectorised cell kernel


class LocalBasis(NamedTuple):
    """Functions active on a cell, indexed ``a = 0..p`` (global ``k - p + a``).

    Knot derivatives are with respect to the ``2p + 2`` local knots
    ``t[k - p] .. t[k + p + 1]``.
    """
    values: np.ndarray            # (..., p+1)
    dknots: np.ndarray | None     # (..., p+1, 2p+2)
    dx: np.ndarray | None         # (..., p+1)
    dx_dknots: np.ndarray | None  # (..., p+1, 2p+2)


def _dual_mul(a, b):
    out = a * b[..., :1] + a[..., :1] * b
    out[..., 0] = a[..., 0] * b[..., 0]
    return out


def _dual_div(a, b):
    q0 = a[..., 0] / b[..., 0]
    out = (a - q0[..., None] * b) / b[..., :1]
    out[..., 0] = q0
    return out


def _values_only(tl: np.ndarray, x: np.ndarray, p: int) -> np.ndarray:
    shape = x.shape
    nvals = [np.ones(shape)]
    left = [None] + [x - tl[..., p + 1 - j] for j in range(1, p + 1)]
    right = [None] + [tl[..., p + j] - x for j in range(1, p + 1)]
    for j in range(1, p + 1):
        saved = np.zeros(shape)
        for r in range(j):
            temp = nvals[r] / (right[r + 1] + left[j - r])
            nvals[r] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        nvals.append(saved)
    return np.stack(nvals, axis=-1)


def local_basis(tl, x, p: int, deriv: int = 0, knot_grad: bool = False) -> LocalBasis:
    """Evaluate the ``p + 1`` functions active on a cell.

    ``tl`` has shape ``(..., 2p + 2)``; the cell is ``[tl[..., p], tl[..., p+1]]``
    and must be non-empty. ``x`` broadcasts against ``tl[..., 0]``. Points are
    evaluated with the cell's polynomial piece, so cell endpoints give one-sided
    limits.
    """
    tl = np.asarray(tl, dtype=float)
    x = np.asarray(x, dtype=float)
    if deriv not in (0, 1):
        raise DerivativeOrderError("cell kernel supports spatial order 0 or 1")
    if deriv > p:
        raise DerivativeOrderError(f"order {deriv} exceeds degree {p}")
    shape = np.broadcast_shapes(tl.shape[:-1], x.shape)
    tl = np.broadcast_to(tl, shape + (2 * p + 2,))
    x = np.broadcast_to(x, shape)
    if not knot_grad and deriv == 0:
        return LocalBasis(_values_only(tl, x, p), None, None, None)
    if not knot_grad:
        lower = _values_only(tl[..., 1:-1], x, p - 1)
        dx = np.zeros(shape + (p + 1,))
        for a in range(p + 1):
            if a >= 1:
                dx[..., a] += p * lower[..., a - 1] / (tl[..., a + p] - tl[..., a])
            if a <= p - 1:
                dx[..., a] -= p * lower[..., a] / (tl[..., a + p + 1] - tl[..., a + 1])
        return LocalBasis(_values_only(tl, x, p), None, dx, None)

    nk = 2 * p + 2
    m = nk + 2  # value, knot directions, x direction
    ix = nk + 1

    def knot_dual(c, sign_x):
        # dual for (x - t_c) if sign_x > 0, else (t_c - x)
        d = np.zeros(shape + (m,))
        if sign_x > 0:
            d[..., 0] = x - tl[..., c]
            d[..., 1 + c] = -1.0
            d[..., ix] = 1.0
        else:
            d[..., 0] = tl[..., c] - x
            d[..., 1 + c] = 1.0
            d[..., ix] = -1.0
        return d

    left = [None] + [knot_dual(p + 1 - j, +1) for j in range(1, p + 1)]
    right = [None] + [knot_dual(p + j, -1) for j in range(1, p + 1)]
    one = np.zeros(shape + (m,))
    one[..., 0] = 1.0
    nd = [one]
    prev = [one.copy()] if p == 1 else None
    for j in range(1, p + 1):
        saved = np.zeros(shape + (m,))
        for r in range(j):
            temp = _dual_div(nd[r], right[r + 1] + left[j - r])
            nd[r] = saved + _dual_mul(right[r + 1], temp)
            saved = _dual_mul(left[j - r], temp)
        nd.append(saved)
        if j == p - 1:
            prev = [a.copy() for a in nd]
    stack = np.stack(nd, axis=-2)  # (..., p+1, m)
    values = stack[..., 0]
    dknots = stack[..., 1:1 + nk] if knot_grad else None
    dx = dxk = None
    if deriv == 1:
        dx = stack[..., ix]
        if knot_grad:
            terms = []
            for a in range(p + 1):
                acc = np.zeros(shape + (m,))
                if a >= 1:
                    d1 = np.zeros(shape + (m,))
                    d1[..., 0] = tl[..., a + p] - tl[..., a]
                    d1[..., 1 + a + p] += 1.0
                    d1[..., 1 + a] -= 1.0
                    acc = acc + _dual_div(prev[a - 1], d1)
                if a <= p - 1:
                    d2 = np.zeros(shape + (m,))
                    d2[..., 0] = tl[..., a + p + 1] - tl[..., a + 1]
                    d2[..., 1 + a + p + 1] += 1.0
                    d2[..., 1 + a + 1] -= 1.0
                    acc = acc - _dual_div(prev[a], d2)
                terms.append(p * acc)
            dstack = np.stack(terms, axis=-2)
            dx = dstack[..., 0]
            dxk = dstack[..., 1:1 + nk]
    return LocalBasis(values, dknots, dx, dxk)


def padded_knots(t, p: int) -> np.ndarray:
    """Knot array extended by ``p`` unit-spaced dummy knots on each side."""
    t = np.asarray(t, dtype=float)
    if p == 0:
        return t.copy()
    lo = t[0] - np.arange(p, 0, -1, dtype=float)
    hi = t[-1] + np.arange(1, p + 1, dtype=float)
    return np.concatenate([lo, t, hi])


def cell_windows(tp: np.ndarray, p: int, cells) -> np.ndarray:
    """Local knot windows ``(len(cells), 2p + 2)`` from padded knots."""
    cells = np.asarray(cells, dtype=int)
    idx = cells[:, None] + np.arange(2 * p + 2)[None, :]
    return tp[idx]


def locate_cells(t, x, side: str = "right", closed_end: bool = True) -> np.ndarray:
    """Cell index ``k`` with ``t[k] <= x < t[k+1]``; the last non-empty cell is
    closed on the right. Returns -1 for points outside ``[t[0], t[-1]]``.

    With ``side="left"`` cells are ``(t[k], t[k+1]]`` instead (left limits);
    ``closed_end=False`` drops the closure of the last cell (strict right limits).
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if side == "left":
        k = np.searchsorted(t, x, side="left") - 1
        return np.where((x <= t[0]) | (x > t[-1]), -1, k)
    k = np.searchsorted(t, x, side="right") - 1
    nonempty = np.nonzero(np.diff(t) > 0)[0]
    last = nonempty[-1] if nonempty.size else -1
    if closed_end:
        k = np.where(x == t[-1], last, k)
        return np.where((x < t[0]) | (x > t[-1]), -1, k)
    return np.where((x < t[0]) | (x >= t[-1]), -1, k)


def basis_matrix(t, p: int, x, deriv: int = 0, side: str = "right", closed_end: bool = True) -> np.ndarray:
    """Dense ``(len(x), n_basis)`` matrix of all basis functions (or first
    derivatives) of the knot vector ``t`` at points ``x``.

    ``side="left"`` returns left limits at knots instead of right limits, and
    ``closed_end=False`` makes the last knot strictly exterior.
    """
    t = np.asarray(t, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nb = t.size - p - 1
    if nb < 1:
        raise InvalidKnotArityError(f"degree {p} needs at least {p + 2} knots")
    out = np.zeros((x.size, nb))
    k = locate_cells(t, x, side=side, closed_end=closed_end)
    inside = k >= 0
    if not np.any(inside):
        return out
    kin = k[inside]
    tl = cell_windows(padded_knots(t, p), p, kin)
    lb = local_basis(tl, x[inside], p, deriv=deriv)
    vals = lb.values if deriv == 0 else lb.dx
    rows = np.nonzero(inside)[0]
    for a in range(p + 1):
        j = kin - p + a
        ok = (j >= 0) & (j < nb)
        out[rows[ok], j[ok]] = vals[ok, a]
    return out


def evaluate_spline(t, p: int, coeffs, x, deriv: int = 0) -> np.ndarray:
    """``sum_j coeffs[j] d^k B_j(x)`` without forming the dense basis matrix."""
    t = np.asarray(t, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    nb = t.size - p - 1
    out = np.zeros(x.size)
    k = locate_cells(t, x)
    inside = k >= 0
    if not np.any(inside):
        return out
    kin = k[inside]
    lb = local_basis(cell_windows(padded_knots(t, p), p, kin), x[inside], p, deriv=deriv)
    vals = lb.values if deriv == 0 else lb.dx
    j = kin[:, None] - p + np.arange(p + 1)[None, :]
    ok = (j >= 0) & (j < nb)
    out[inside] = np.sum(np.where(ok, vals * coeffs[np.clip(j, 0, nb - 1)], 0.0), axis=1)
    return out
