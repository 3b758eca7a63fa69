"""Feasible knot set and the Euclidean projection onto it.

Each knot vector of each patch is an independent chain with ordering-with-gap
constraints ``t[i+1] >= t[i] + h_min``, per-knot bounds and fixed entries. With
``s[i] = t[i] - i * h_min`` a chain becomes isotonic regression with bounds,
solved exactly by pooling adjacent violators.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, InfeasibleConstraintsError, ProjectionError
from .space import MultiPatchSpace

MODES = ("approx", "poisson")


@dataclass(frozen=True)
class Chain:
    index: np.ndarray   # positions in the flat knot vector
    lower: np.ndarray   # per-knot lower bounds (-inf when absent)
    upper: np.ndarray   # per-knot upper bounds (+inf when absent)
    fixed: np.ndarray   # boolean mask
    values: np.ndarray  # reference values (used for fixed entries)

    def segments(self):
        """Index ranges split where two consecutive knots are both fixed."""
        n = self.index.size
        start = 0
        for i in range(n - 1):
            if self.fixed[i] and self.fixed[i + 1]:
                yield start, i + 1
                start = i + 1
        yield start, n


@dataclass(frozen=True)
class FeasibleSet:
    chains: tuple[Chain, ...]
    h_min: float
    size: int
    mode: str

    def project(self, xi) -> np.ndarray:
        return project(self, xi)

    def min_slack(self, xi) -> float:
        return min_slack(self, xi)


def _bounded_isotonic(z: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """argmin sum (x - z)^2 s.t. x non-decreasing, lo <= x <= hi.

    Bounds are first replaced by their monotone envelopes (same feasible set);
    pooled blocks then take the clipped mean, which is the exact block minimiser.
    """
    n = z.size
    lo_env = np.maximum.accumulate(lo)
    hi_env = np.minimum.accumulate(hi[::-1])[::-1]
    if np.any(lo_env > hi_env):
        raise InfeasibleConstraintsError("bounds leave no monotone point")
    # block stacks: sum, count, first index, last index, value
    sums, counts, firsts, lasts, vals = [], [], [], [], []
    for i in range(n):
        sums.append(z[i])
        counts.append(1)
        firsts.append(i)
        lasts.append(i)
        vals.append(min(max(z[i], lo_env[i]), hi_env[i]))
        while len(vals) > 1 and vals[-2] > vals[-1]:
            s, c, l_ = sums.pop(), counts.pop(), lasts.pop()
            firsts.pop()
            vals.pop()
            sums[-1] += s
            counts[-1] += c
            lasts[-1] = l_
            mean = sums[-1] / counts[-1]
            vals[-1] = min(max(mean, lo_env[lasts[-1]]), hi_env[firsts[-1]])
    out = np.empty(n)
    for v, f, l_ in zip(vals, firsts, lasts):
        out[f:l_ + 1] = v
    return out


def project_chain(y, lower, upper, fixed, values, h_min: float) -> np.ndarray:
    """Project one knot chain; fixed entries are set to ``values``."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    chain = Chain(np.arange(y.size), np.asarray(lower, float), np.asarray(upper, float),
                  np.asarray(fixed, bool), np.asarray(values, float))
    for a, b in chain.segments():
        shift = h_min * np.arange(b - a)
        lo = chain.lower[a:b].copy()
        hi = chain.upper[a:b].copy()
        fx = chain.fixed[a:b]
        lo[fx] = chain.values[a:b][fx]
        hi[fx] = chain.values[a:b][fx]
        s = _bounded_isotonic(y[a:b] - shift, lo - shift, hi - shift)
        out[a:b] = s + shift
    out[chain.fixed] = chain.values[chain.fixed]
    return out


def _bounds_for(n: int, p: int, lo: float, hi: float, mode: str):
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    if mode == "approx":
        span = hi - lo
        lower[0] = lo - span
        upper[-1] = hi + span
        lower[p] = max(lower[p], lo)
        upper[n - p - 1] = min(upper[n - p - 1], hi)
    else:
        lower[0] = lo
        upper[-1] = hi
    return lower, upper


def build_feasible_set(space: MultiPatchSpace, mode: str, h_min: float = 1e-6) -> FeasibleSet:
    """Constraint chains for every knot vector of ``space``.

    ``approx``: contribution anchors ``t[p] >= lo``, ``t[n-p-1] <= hi`` and the box
    ``[lo - L, hi + L]`` on the end knots. ``poisson``: all knots inside the closed
    domain. Both: gap ``h_min`` between consecutive knots that are not both fixed.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if h_min < 0:
        raise ValueError("h_min must be non-negative")
    xi = space.knot_params()
    free = space.trainable()
    chains = []
    for s, t, sl in space.knot_slices():
        p = space.patches[s].degrees[t]
        lo, hi = space.domain[t]
        n = sl.stop - sl.start
        lower, upper = _bounds_for(n, p, lo, hi, mode)
        idx = np.arange(sl.start, sl.stop)
        chains.append(Chain(idx, lower, upper, ~free[idx], xi[idx].copy()))
    fs = FeasibleSet(tuple(chains), float(h_min), space.dim_knots, mode)
    for ch in fs.chains:
        for a, b in ch.segments():
            shift = h_min * np.arange(b - a)
            lo = ch.lower[a:b].copy()
            hi = ch.upper[a:b].copy()
            fx = ch.fixed[a:b]
            lo[fx] = ch.values[a:b][fx]
            hi[fx] = ch.values[a:b][fx]
            lo_env = np.maximum.accumulate(lo - shift)
            hi_env = np.minimum.accumulate((hi - shift)[::-1])[::-1]
            if np.any(lo_env > hi_env):
                raise InfeasibleConstraintsError("constraint chain has no feasible point")
    slack = min_slack(fs, xi)
    if slack < -1e-12:
        raise InfeasibleConstraintsError(f"initial knots violate the constraints (slack {slack:.3e})")
    return fs


def project(fs: FeasibleSet, xi) -> np.ndarray:
    """Euclidean projection of a candidate knot vector onto the feasible set."""
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (fs.size,):
        raise DimensionMismatchError(f"expected {fs.size} knot parameters, got {xi.shape}")
    if not np.all(np.isfinite(xi)):
        raise ProjectionError("candidate contains non-finite values")
    out = xi.copy()
    for ch in fs.chains:
        out[ch.index] = project_chain(xi[ch.index], ch.lower, ch.upper, ch.fixed, ch.values, fs.h_min)
    return out


def min_slack(fs: FeasibleSet, xi) -> float:
    """Smallest constraint slack (negative means violated)."""
    xi = np.asarray(xi, dtype=float)
    worst = np.inf
    for ch in fs.chains:
        t = xi[ch.index]
        gap = np.diff(t) - fs.h_min
        both_fixed = ch.fixed[:-1] & ch.fixed[1:]
        if np.any(~both_fixed):
            worst = min(worst, float(np.min(gap[~both_fixed])))
        worst = min(worst, float(np.min(t - ch.lower)), float(np.min(ch.upper - t)))
        if np.any(ch.fixed):
            worst = min(worst, -float(np.max(np.abs(t[ch.fixed] - ch.values[ch.fixed]))))
    return worst


def cross_patch_min_gap(space: MultiPatchSpace) -> float:
    """Smallest distance between knots of different patches on the same axis
    (``inf`` for a single patch). Reported as a diagnostic only."""
    best = np.inf
    for t in range(space.dim):
        kvs = [np.asarray(pt.knots[t]) for pt in space.patches]
        for i in range(len(kvs)):
            for j in range(i + 1, len(kvs)):
                d = np.abs(kvs[i][:, None] - kvs[j][None, :])
                best = min(best, float(d.min()))
    return best
