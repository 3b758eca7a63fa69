"""Gauss-Legendre rules, exact piecewise integration and adaptive quadrature.

The adaptive routines work on many cells at once: integrands receive arrays of
cell ids and abscissae and return ``(n_points, n_components)`` values, so a whole
load vector (and its knot derivatives) is integrated in one vectorised sweep.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

MAX_GAUSS_POINTS = 32


class IntegrationWarning(UserWarning):
    """Adaptive quadrature hit its recursion cap before meeting the tolerance."""


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.nodes.size

    def mapped(self, a, b):
        """Nodes and weights on ``[a, b]``; ``a`` and ``b`` may be arrays of cells."""
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights


@lru_cache(maxsize=None)
def _leggauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_rule(m: int) -> QuadratureRule:
    """Gauss-Legendre rule with ``m`` points on [-1, 1], exact to degree 2m-1."""
    if not 1 <= m <= MAX_GAUSS_POINTS:
        raise ValueError(f"point count must be in 1..{MAX_GAUSS_POINTS}, got {m}")
    x, w = _leggauss(m)
    return QuadratureRule(x, w)


def points_for_degree(degree: int) -> int:
    """Smallest Gauss rule exact for polynomials of the given degree."""
    return max(1, degree // 2 + 1)


def break_partition(breaks, lo: float, hi: float) -> np.ndarray:
    """Sorted distinct breakpoints restricted to ``[lo, hi]``, endpoints included."""
    if not lo < hi:
        raise ValueError("empty target interval")
    b = np.asarray(breaks, dtype=float).ravel()
    b = b[(b > lo) & (b < hi)]
    return np.unique(np.concatenate([[lo], b, [hi]]))


def integrate_piecewise(f: Callable, partition, degree_bound: int) -> float:
    """Integral of a piecewise polynomial, exact on each cell of ``partition``."""
    part = np.asarray(partition, dtype=float)
    if part.size < 2:
        raise ValueError("partition needs at least two points")
    rule = gauss_rule(points_for_degree(degree_bound))
    x, w = rule.mapped(part[:-1], part[1:])
    vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    return float(np.sum(vals * w))


# ---------------------------------------------------------------------------
# adaptive Simpson


@dataclass
class AdaptiveInfo:
    evaluations: int = 0
    segments: int = 0
    depth_exceeded: bool = False


def adaptive_simpson_cells(func: Callable, a, b, tol: float = 1e-12, max_depth: int = 40,
                           min_depth: int = 2):
    """Adaptive Simpson integration of a vector integrand over many cells.

    ``func(cell_ids, x)`` returns an array ``(len(x), V)``. Cells are refined
    breadth-first; the tolerance is shared between cells in proportion to their
    length and halved on every split, so the total error estimate stays below
    ``tol`` in every component. Returns ``(integrals (n_cells, V), info)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    ncell = a.size
    info = AdaptiveInfo()
    total = float(np.sum(b - a))
    if ncell == 0 or total <= 0:
        probe = np.asarray(func(np.zeros(1, dtype=int), np.zeros(1)))
        return np.zeros((ncell, probe.shape[-1] if probe.ndim > 1 else 1)), info

    def evaluate(cid, x):
        info.evaluations += x.size
        v = np.asarray(func(cid, x), dtype=float)
        return v.reshape(x.size, -1)

    cid = np.arange(ncell)
    lo, hi = a.copy(), b.copy()
    mid = 0.5 * (lo + hi)
    vals = evaluate(np.concatenate([cid, cid, cid]), np.concatenate([lo, mid, hi]))
    flo, fmid, fhi = vals[:ncell], vals[ncell:2 * ncell], vals[2 * ncell:]
    whole = (hi - lo)[:, None] / 6.0 * (flo + 4.0 * fmid + fhi)
    seg_tol = tol * (hi - lo) / total
    depth = np.zeros(ncell, dtype=int)
    result = np.zeros((ncell, vals.shape[1]))

    while cid.size:
        ml = 0.5 * (lo + mid)
        mr = 0.5 * (mid + hi)
        n = cid.size
        v = evaluate(np.concatenate([cid, cid]), np.concatenate([ml, mr]))
        fml, fmr = v[:n], v[n:]
        sl = (mid - lo)[:, None] / 6.0 * (flo + 4.0 * fml + fmid)
        sr = (hi - mid)[:, None] / 6.0 * (fmid + 4.0 * fmr + fhi)
        diff = sl + sr - whole
        err = np.max(np.abs(diff), axis=1)
        depth = depth + 1
        converged = (err <= 15.0 * seg_tol) & (depth >= min_depth)
        capped = depth >= max_depth
        done = converged | capped
        if np.any(capped & ~converged):
            info.depth_exceeded = True
        if np.any(done):
            np.add.at(result, cid[done], (sl + sr + diff / 15.0)[done])
            info.segments += int(np.count_nonzero(done))
        keep = ~done
        if not np.any(keep):
            break
        cid_k = cid[keep]
        cid = np.concatenate([cid_k, cid_k])
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate([mid[keep], hi[keep]])
        flo = np.concatenate([flo[keep], fmid[keep]])
        fhi = np.concatenate([fmid[keep], fhi[keep]])
        fmid = np.concatenate([fml[keep], fmr[keep]])
        whole = np.concatenate([sl[keep], sr[keep]])
        seg_tol = np.concatenate([seg_tol[keep], seg_tol[keep]]) / 2.0
        depth = np.concatenate([depth[keep], depth[keep]])
        mid = 0.5 * (lo + hi)
    if info.depth_exceeded:
        warnings.warn("adaptive Simpson reached its depth cap", IntegrationWarning, stacklevel=2)
    return result, info


def _vectorised(f: Callable) -> Callable:
    def g(cid, x):
        try:
            v = np.asarray(f(x), dtype=float)
        except TypeError:
            v = np.array([float(f(xi)) for xi in x])
        if v.shape != x.shape:
            v = np.broadcast_to(v, x.shape) if v.ndim == 0 else np.array([float(f(xi)) for xi in x])
        return v[:, None]
    return g


def adaptive_simpson(f: Callable, a: float, b: float, tol: float = 1e-12, max_depth: int = 40,
                     full_output: bool = False):
    """Integrate a scalar function on ``[a, b]`` with adaptive Simpson.

    With ``full_output`` returns ``(value, AdaptiveInfo)``; ``info.depth_exceeded``
    flags that the depth cap stopped refinement (a warning is also emitted).
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if a == b:
        return (0.0, AdaptiveInfo()) if full_output else 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    res, info = adaptive_simpson_cells(_vectorised(f), [a], [b], tol=tol, max_depth=max_depth)
    value = sign * float(res[0, 0])
    return (value, info) if full_output else value


# ---------------------------------------------------------------------------
# adaptive Gauss (used for error norms, where absolute tolerances are useless)


def adaptive_gauss_cells(func: Callable, a, b, rtol: float = 1e-10, atol: float = 1e-300,
                         points: int = 10, max_depth: int = 30):
    """Adaptive Gauss-Legendre on many cells with a relative tolerance.

    A segment is accepted when its ``points``-point estimate and the sum over its
    two halves agree to ``max(rtol * |halves|, atol)``. Same calling convention as
    :func:`adaptive_simpson_cells`.
    """
    rule = gauss_rule(points)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    info = AdaptiveInfo()

    def estimate(cid, lo, hi):
        x, w = rule.mapped(lo, hi)
        info.evaluations += x.size
        v = np.asarray(func(np.repeat(cid, rule.size), x.ravel()), dtype=float)
        v = v.reshape(lo.size, rule.size, -1)
        return np.einsum("ijk,ij->ik", v, w)

    cid = np.arange(a.size)
    lo, hi = a.copy(), b.copy()
    whole = estimate(cid, lo, hi)
    depth = np.zeros(a.size, dtype=int)
    result = np.zeros((a.size, whole.shape[1]))
    while cid.size:
        mid = 0.5 * (lo + hi)
        left = estimate(cid, lo, mid)
        right = estimate(cid, mid, hi)
        halves = left + right
        err = np.max(np.abs(halves - whole), axis=1)
        scale = np.max(np.abs(halves), axis=1)
        depth = depth + 1
        converged = err <= np.maximum(rtol * scale, atol)
        capped = depth >= max_depth
        done = converged | capped
        if np.any(capped & ~converged):
            info.depth_exceeded = True
        np.add.at(result, cid[done], halves[done])
        keep = ~done
        cid_k = cid[keep]
        cid = np.concatenate([cid_k, cid_k])
        lo, hi = np.concatenate([lo[keep], mid[keep]]), np.concatenate([mid[keep], hi[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        depth = np.concatenate([depth[keep], depth[keep]])
    return result, info
