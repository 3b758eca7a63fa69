"""Tensor-product patches, sums of patches and the realisation map.

Weights are laid out patch-major and then lexicographically (C order) in the
per-axis multi-index. Knot parameters are laid out patch-major, then by axis,
then by position along the knot vector.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bspline import basis_matrix, locate_cells
from .errors import DimensionMismatchError, InvalidKnotArityError
from .knots import KnotVector


@dataclass(frozen=True)
class PatchSpec:
    degrees: tuple[int, ...]
    knots: tuple[KnotVector, ...]
    fixed: tuple[tuple[bool, ...], ...] = field(default=None)

    def __post_init__(self):
        degrees = tuple(int(p) for p in self.degrees)
        knots = tuple(k if isinstance(k, KnotVector) else KnotVector(k) for k in self.knots)
        if len(degrees) != len(knots):
            raise DimensionMismatchError("one degree per knot vector expected")
        for p, kv in zip(degrees, knots):
            if p < 0:
                raise ValueError("degrees must be non-negative")
            if len(kv) < p + 2:
                raise InvalidKnotArityError(f"degree {p} needs at least {p + 2} knots, got {len(kv)}")
        fixed = self.fixed
        if fixed is None:
            fixed = tuple((False,) * len(kv) for kv in knots)
        fixed = tuple(tuple(bool(b) for b in f) for f in fixed)
        if len(fixed) != len(knots) or any(len(f) != len(kv) for f, kv in zip(fixed, knots)):
            raise DimensionMismatchError("fixed mask must match the knot vectors")
        object.__setattr__(self, "degrees", degrees)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "fixed", fixed)

    @property
    def dim(self) -> int:
        return len(self.degrees)

    @property
    def knot_counts(self) -> tuple[int, ...]:
        return tuple(len(kv) for kv in self.knots)

    @property
    def n_basis(self) -> tuple[int, ...]:
        return tuple(n - p - 1 for n, p in zip(self.knot_counts, self.degrees))

    @property
    def n_weights(self) -> int:
        return int(np.prod(self.n_basis))


@dataclass(frozen=True)
class MultiPatchSpace:
    patches: tuple[PatchSpec, ...]
    domain: tuple[tuple[float, float], ...]

    def __post_init__(self):
        patches = tuple(self.patches)
        domain = tuple((float(lo), float(hi)) for lo, hi in self.domain)
        if not patches:
            raise ValueError("a space needs at least one patch")
        for lo, hi in domain:
            if not lo < hi:
                raise ValueError("domain intervals must have positive length")
        if any(pt.dim != len(domain) for pt in patches):
            raise DimensionMismatchError("patch dimension does not match the domain")
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "domain", domain)

    @property
    def dim(self) -> int:
        return len(self.domain)

    @property
    def n_patches(self) -> int:
        return len(self.patches)

    @property
    def dim_weights(self) -> int:
        return sum(pt.n_weights for pt in self.patches)

    @property
    def dim_knots(self) -> int:
        return sum(sum(pt.knot_counts) for pt in self.patches)

    @property
    def weight_offsets(self) -> tuple[int, ...]:
        offs = [0]
        for pt in self.patches:
            offs.append(offs[-1] + pt.n_weights)
        return tuple(offs)

    def knot_slices(self) -> list[tuple[int, int, slice]]:
        """``(patch, axis, slice into the flat knot vector)`` triples."""
        out, pos = [], 0
        for s, pt in enumerate(self.patches):
            for t, kv in enumerate(pt.knots):
                out.append((s, t, slice(pos, pos + len(kv))))
                pos += len(kv)
        return out

    def knot_params(self) -> np.ndarray:
        """All knots as one flat vector (fixed ones included)."""
        return np.concatenate([np.asarray(kv) for pt in self.patches for kv in pt.knots])

    def trainable(self) -> np.ndarray:
        """Boolean mask over :meth:`knot_params` marking free knots."""
        return ~np.concatenate([np.asarray(f, dtype=bool) for pt in self.patches for f in pt.fixed])

    @property
    def n_free_knots(self) -> int:
        return int(np.count_nonzero(self.trainable()))

    def with_knot_params(self, xi) -> "MultiPatchSpace":
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.dim_knots,):
            raise DimensionMismatchError(f"expected {self.dim_knots} knot parameters, got {xi.shape}")
        new, pos = [], 0
        for pt in self.patches:
            kvs = []
            for kv in pt.knots:
                kvs.append(KnotVector(xi[pos:pos + len(kv)]))
                pos += len(kv)
            new.append(PatchSpec(pt.degrees, tuple(kvs), pt.fixed))
        return MultiPatchSpace(tuple(new), self.domain)

    def split_weights(self, W) -> list[np.ndarray]:
        """Per-patch weight tensors shaped by the per-axis basis counts."""
        W = np.asarray(W, dtype=float)
        if W.shape != (self.dim_weights,):
            raise DimensionMismatchError(f"expected {self.dim_weights} weights, got {W.shape}")
        offs = self.weight_offsets
        return [W[offs[s]:offs[s + 1]].reshape(pt.n_basis) for s, pt in enumerate(self.patches)]


def dim_weights(space: MultiPatchSpace) -> int:
    return space.dim_weights


def dim_knots(space: MultiPatchSpace) -> int:
    return space.dim_knots


def realise(space: MultiPatchSpace, W, x, derivs: Sequence[int] | None = None):
    """Evaluate the represented function at points ``x`` of shape ``(d,)`` or ``(m, d)``.

    ``derivs`` optionally gives a spatial derivative order (0 or 1) per axis.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != space.dim:
        raise DimensionMismatchError("point dimension does not match the space")
    derivs = tuple(derivs) if derivs is not None else (0,) * space.dim
    out = np.zeros(pts.shape[0])
    for pt, Ws in zip(space.patches, space.split_weights(W)):
        mats = [basis_matrix(np.asarray(kv), p, pts[:, t], deriv=derivs[t])
                for t, (p, kv) in enumerate(zip(pt.degrees, pt.knots))]
        acc = np.einsum("qi,i...->q...", mats[0], Ws)
        for B in mats[1:]:
            acc = np.einsum("qi,qi...->q...", B, acc)
        out += acc
    return float(out[0]) if single else out


def realise_grid(space: MultiPatchSpace, W, grids: Sequence[np.ndarray],
                 derivs: Sequence[int] | None = None) -> np.ndarray:
    """Evaluate on the tensor grid ``grids[0] x grids[1] x ...``."""
    if len(grids) != space.dim:
        raise DimensionMismatchError("one grid per axis expected")
    derivs = tuple(derivs) if derivs is not None else (0,) * space.dim
    out = np.zeros(tuple(np.size(g) for g in grids))
    for pt, Ws in zip(space.patches, space.split_weights(W)):
        acc = Ws
        for t, (p, kv) in enumerate(zip(pt.degrees, pt.knots)):
            B = basis_matrix(np.asarray(kv), p, grids[t], deriv=derivs[t])
            acc = np.tensordot(B, acc, axes=([1], [t]))  # new axis first
            acc = np.moveaxis(acc, 0, t)
        out += acc
    return out


def active_basis(space: MultiPatchSpace, s: int, t: int, x: float) -> range:
    """Indices of the basis functions of patch ``s``, axis ``t`` active at ``x``."""
    pt = space.patches[s]
    p = pt.degrees[t]
    knots = np.asarray(pt.knots[t])
    k = int(locate_cells(knots, float(x)))
    if k < 0:
        return range(0)
    nb = pt.n_basis[t]
    return range(max(0, k - p), min(k, nb - 1) + 1)


# ---------------------------------------------------------------------------
# initialisation


def _per_axis(value, d: int, name: str) -> tuple[int, ...]:
    if np.ndim(value) == 0:
        return (int(value),) * d
    out = tuple(int(v) for v in value)
    if len(out) != d:
        raise DimensionMismatchError(f"{name} needs one entry per axis")
    return out


def _axis_layout(lo: float, hi: float, k: int, c: int, p: int) -> list[np.ndarray]:
    """Knot vectors of ``k`` overlapping patches with ``c`` cells each on one axis."""
    if c < 1:
        raise InvalidKnotArityError("each patch needs at least one cell")
    if k < 1:
        raise ValueError("need at least one patch per axis")
    n = c + 2 * p + 1
    cells = k * c + (k - 1) * p
    h = (hi - lo) / cells
    out = []
    for q in range(k):
        start = -p + q * (n - p - 1)
        idx = np.arange(start, start + n, dtype=float)
        kv = lo + h * idx
        # pin grid points that sit on the boundary exactly
        kv[idx == 0] = lo
        kv[idx == cells] = hi
        out.append(kv)
    return out


def _tensor_patches(axis_knots, axis_fixed, degrees):
    patches = []
    for combo in np.ndindex(*[len(a) for a in axis_knots]):
        knots = tuple(KnotVector(axis_knots[t][q]) for t, q in enumerate(combo))
        fixed = tuple(tuple(axis_fixed[t][q]) for t, q in enumerate(combo))
        patches.append(PatchSpec(tuple(degrees), knots, fixed))
    return tuple(patches)


def init_uniform_approx(domain, layout, cells, degrees) -> MultiPatchSpace:
    """Uniform-emulating space for L2 approximation.

    ``layout`` gives patches per axis and ``cells`` the cells per patch per axis
    (``n = cells + 2p + 1`` knots). Knots are evenly spaced; on boundary patches
    the first and last ``p`` knots lie outside the domain and overlapping
    neighbours share ``p + 1`` knot positions.
    """
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    d = len(domain)
    layout, cells, degrees = (_per_axis(layout, d, "layout"), _per_axis(cells, d, "cells"),
                              _per_axis(degrees, d, "degrees"))
    axis_knots, axis_fixed = [], []
    for t, (lo, hi) in enumerate(domain):
        kvs = _axis_layout(lo, hi, layout[t], cells[t], degrees[t])
        axis_knots.append(kvs)
        axis_fixed.append([[False] * kv.size for kv in kvs])
    return MultiPatchSpace(_tensor_patches(axis_knots, axis_fixed, degrees), domain)


def init_uniform_poisson(domain, layout, cells, degrees) -> MultiPatchSpace:
    """Uniform-emulating space with homogeneous boundary values.

    As :func:`init_uniform_approx`, but on boundary-touching ends the exterior
    knots are replaced by the boundary knot with multiplicity ``p``; every basis
    function then vanishes on the boundary. For ``p >= 2`` the repeated knots are
    fixed.
    """
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    d = len(domain)
    layout, cells, degrees = (_per_axis(layout, d, "layout"), _per_axis(cells, d, "cells"),
                              _per_axis(degrees, d, "degrees"))
    if min(degrees) < 1:
        raise ValueError("Poisson spaces need degree >= 1 on every axis")
    axis_knots, axis_fixed = [], []
    for t, (lo, hi) in enumerate(domain):
        p = degrees[t]
        kvs = _axis_layout(lo, hi, layout[t], cells[t], p)
        new_k, new_f = [], []
        for q, kv in enumerate(kvs):
            fixed = np.zeros(kv.size, dtype=bool)
            if q == 0:
                kv = kv[1:].copy()
                kv[:p] = lo
                fixed = fixed[1:]
                fixed[:p] = p >= 2
            if q == len(kvs) - 1:
                kv = kv[:-1].copy()
                kv[-p:] = hi
                fixed = fixed[:-1]
                fixed[-p:] = p >= 2
            new_k.append(kv)
            new_f.append(fixed.tolist())
        axis_knots.append(new_k)
        axis_fixed.append(new_f)
    return MultiPatchSpace(_tensor_patches(axis_knots, axis_fixed, degrees), domain)


# ---------------------------------------------------------------------------
# plain-text snapshots

_HEADER = "freeknot-space 1"


def dumps(space: MultiPatchSpace) -> str:
    """Plain-text snapshot; floats use the shortest round-trip representation."""
    lines = [_HEADER, "domain " + " ".join(repr(v) for iv in space.domain for v in iv)]
    for s, pt in enumerate(space.patches):
        for t, (p, kv, fx) in enumerate(zip(pt.degrees, pt.knots, pt.fixed)):
            mask = "".join("1" if b else "0" for b in fx)
            vals = " ".join(repr(float(v)) for v in kv)
            lines.append(f"patch {s} axis {t} degree {p} fixed {mask} knots {vals}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> MultiPatchSpace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != _HEADER:
        raise ValueError("not a space snapshot")
    dom = [float(v) for v in lines[1].split()[1:]]
    domain = tuple(zip(dom[0::2], dom[1::2]))
    axes: dict[int, dict[int, tuple]] = {}
    for ln in lines[2:]:
        tok = ln.split()
        s, t, p, mask = int(tok[1]), int(tok[3]), int(tok[5]), tok[7]
        vals = [float(v) for v in tok[9:]]
        axes.setdefault(s, {})[t] = (p, vals, [c == "1" for c in mask])
    patches = []
    for s in sorted(axes):
        ax = axes[s]
        order = sorted(ax)
        patches.append(PatchSpec(tuple(ax[t][0] for t in order), tuple(KnotVector(ax[t][1]) for t in order),
                                 tuple(tuple(ax[t][2]) for t in order)))
    return MultiPatchSpace(tuple(patches), domain)
