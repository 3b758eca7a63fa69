"""Separable forms, 1D blocks with knot derivatives, and sum-factorised operators.

Every 1D integral is split over cells on which all integrands are polynomial
pieces. Knot derivatives have two parts: the derivative of each polynomial
piece at fixed ``x`` (from the cell kernel) and, for pieces that jump at a knot,
the boundary term ``g(c-) - g(c+)`` from moving that knot. A knot sitting exactly
on the domain boundary can only move inwards under the constraints, so it gets
the same term, which is the one-sided derivative in that direction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bspline import basis_matrix, cell_windows, local_basis, padded_knots
from .errors import (
    DerivativeOrderError,
    DimensionMismatchError,
    NondifferentiableConfigurationError,
)
from .quadrature import adaptive_simpson_cells, gauss_rule
from .space import MultiPatchSpace


# ---------------------------------------------------------------------------
# form descriptors


@dataclass(frozen=True)
class LinearTerm:
    """One rank-one term of a linear form: per axis ``(f, k)`` meaning
    ``int f(x) d^k v / dx^k dx``."""
    factors: tuple[tuple[Callable, int], ...]


@dataclass(frozen=True)
class SeparableForm:
    """``a(u, v) = sum_terms prod_axes int d^k u d^k v`` and ``l(v) = sum LinearTerm``."""
    bilinear: tuple[tuple[int, ...], ...]
    linear: tuple[LinearTerm, ...] = ()
    data_tol: float = 1e-12

    def __post_init__(self):
        dims = {len(b) for b in self.bilinear} | {len(t.factors) for t in self.linear}
        if len(dims) != 1:
            raise DimensionMismatchError("every term needs one factor per axis")
        for b in self.bilinear:
            if any(k not in (0, 1) for k in b):
                raise DerivativeOrderError("bilinear kernels use derivative order 0 or 1")

    @property
    def dim(self) -> int:
        return len(self.bilinear[0])


def mass_form(d: int, linear: Sequence[LinearTerm] = (), data_tol: float = 1e-12) -> SeparableForm:
    return SeparableForm(((0,) * d,), tuple(linear), data_tol)


def stiffness_form(d: int, linear: Sequence[LinearTerm] = (), data_tol: float = 1e-12) -> SeparableForm:
    terms = tuple(tuple(1 if t == s else 0 for t in range(d)) for s in range(d))
    return SeparableForm(terms, tuple(linear), data_tol)


# ---------------------------------------------------------------------------
# cell bookkeeping


def _gauss_points(p: int, q: int, k: int) -> int:
    return -(-(p + q - 2 * k + 1) // 2) + 1


def _jump_knots(t: np.ndarray, lo: float, hi: float) -> np.ndarray:
    return np.nonzero((t >= lo) & (t <= hi))[0]


def _cells_of(t: np.ndarray, a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell index of each merged cell ``(a, b)`` in knot vector ``t`` and an inside mask."""
    mid = 0.5 * (a + b)
    k = np.searchsorted(t, mid, side="right") - 1
    inside = (k >= 0) & (k <= t.size - 2)
    return np.clip(k, 0, max(t.size - 2, 0)), inside


def _merged_cells(tr: np.ndarray, tc: np.ndarray | None, lo: float, hi: float):
    pts = tr if tc is None else np.concatenate([tr, tc])
    pts = pts[(pts > lo) & (pts < hi)]
    br = np.unique(np.concatenate([[lo], pts, [hi]]))
    return br[:-1], br[1:]


def _scatter_index(k: np.ndarray, p: int, n: int):
    idx = k[:, None] - p + np.arange(p + 1)[None, :]
    ok = (idx >= 0) & (idx < n)
    return np.clip(idx, 0, n - 1), ok


def _scatter_knots(k: np.ndarray, p: int, n: int):
    idx = k[:, None] - p + np.arange(2 * p + 2)[None, :]
    ok = (idx >= 0) & (idx < n)
    return np.clip(idx, 0, n - 1), ok


def _kernel_at(t: np.ndarray, p: int, k: np.ndarray, x: np.ndarray, order: int, grad: bool):
    tl = cell_windows(padded_knots(t, p), p, k)
    lb = local_basis(tl[:, None, :], x, p, deriv=order, knot_grad=grad)
    if order == 0:
        return lb.values, lb.dknots
    return lb.dx, lb.dx_dknots


# ---------------------------------------------------------------------------
# 1D bilinear blocks


@dataclass
class Block1D:
    """Dense 1D block with optional knot derivatives.

    ``d_row[i, j, m]`` differentiates with respect to knot ``m`` of the row knot
    vector (for a block of a patch with itself this is the total derivative) and
    ``d_col`` with respect to the column knots (``None`` for same-patch blocks).
    """
    matrix: np.ndarray
    d_row: np.ndarray | None = None
    d_col: np.ndarray | None = None

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix) and (self.d_row is None or not np.any(self.d_row)) \
            and (self.d_col is None or not np.any(self.d_col))


def bilinear_block_1d(k: int, t_row, p_row: int, t_col, p_col: int, domain, same_patch: bool = False,
                      grad: bool = False, strict: bool = True) -> Block1D:
    """Block ``int_I d^k B_i(row) d^k B_j(col) dx`` on the merged break partition."""
    tr = np.asarray(t_row, dtype=float)
    tc = np.asarray(t_col, dtype=float)
    lo, hi = float(domain[0]), float(domain[1])
    if k > min(p_row, p_col):
        raise DerivativeOrderError(f"derivative order {k} exceeds a degree ({p_row}, {p_col})")
    if same_patch and (p_row != p_col or tr.shape != tc.shape or np.any(tr != tc)):
        raise ValueError("same-patch blocks need identical knots and degrees")
    if grad and strict and not same_patch and p_row == k and p_col == k:
        raise NondifferentiableConfigurationError(
            "knot derivatives of this kernel do not exist when knot vectors of different patches may cross")
    nr, nc = tr.size - p_row - 1, tc.size - p_col - 1
    A = np.zeros((nr, nc))
    d_row = np.zeros((nr, nc, tr.size)) if grad else None
    d_col = np.zeros((nr, nc, tc.size)) if grad and not same_patch else None

    a, b = _merged_cells(tr, None if same_patch else tc, lo, hi)
    kr, in_r = _cells_of(tr, a, b)
    kc, in_c = (kr, in_r) if same_patch else _cells_of(tc, a, b)
    use = in_r & in_c
    if np.any(use):
        a, b, kr, kc = a[use], b[use], kr[use], kc[use]
        m = _gauss_points(p_row, p_col, k)
        x, w = gauss_rule(m).mapped(a, b)
        phr, dphr = _kernel_at(tr, p_row, kr, x, k, grad)
        if same_patch:
            phc, dphc = phr, dphr
        else:
            phc, dphc = _kernel_at(tc, p_col, kc, x, k, grad)
        Jr, okr = _scatter_index(kr, p_row, nr)
        Jc, okc = _scatter_index(kc, p_col, nc)
        mask = okr[:, :, None] & okc[:, None, :]
        loc = np.einsum("cq,cqa,cqb->cab", w, phr, phc) * mask
        np.add.at(A, (Jr[:, :, None], Jc[:, None, :]), loc)
        if grad:
            Gr, okg = _scatter_knots(kr, p_row, tr.size)
            drow = np.einsum("cq,cqaz,cqb->cabz", w, dphr, phc)
            if same_patch:
                drow = drow + np.einsum("cq,cqa,cqbz->cabz", w, phr, dphc)
            drow = drow * (mask[..., None] & okg[:, None, None, :])
            np.add.at(d_row, (Jr[:, :, None, None], Jc[:, None, :, None], Gr[:, None, None, :]), drow)
            if not same_patch:
                Gc, okgc = _scatter_knots(kc, p_col, tc.size)
                dcol = np.einsum("cq,cqa,cqbz->cabz", w, phr, dphc)
                dcol = dcol * (mask[..., None] & okgc[:, None, None, :])
                np.add.at(d_col, (Jr[:, :, None, None], Jc[:, None, :, None], Gc[:, None, None, :]), dcol)

    if grad:
        _add_bilinear_jumps(k, tr, p_row, tc, p_col, lo, hi, same_patch, d_row, d_col)
    return Block1D(A, d_row, d_col)


def _add_bilinear_jumps(k, tr, p_row, tc, p_col, lo, hi, same_patch, d_row, d_col):
    """Boundary terms from moving knots where a factor of the integrand jumps."""
    if same_patch:
        if p_row != k:
            return
        m = _jump_knots(tr, lo, hi)
        if m.size == 0:
            return
        L = basis_matrix(tr, p_row, tr[m], deriv=k, side="left")
        R = basis_matrix(tr, p_row, tr[m], deriv=k, side="right", closed_end=False)
        d_row[:, :, m] += np.einsum("ci,cj->ijc", L, L) - np.einsum("ci,cj->ijc", R, R)
        return
    if p_row == k:
        m = _jump_knots(tr, lo, hi)
        if m.size:
            jump = (basis_matrix(tr, p_row, tr[m], deriv=k, side="left")
                    - basis_matrix(tr, p_row, tr[m], deriv=k, side="right", closed_end=False))
            other = basis_matrix(tc, p_col, tr[m], deriv=k, side="right", closed_end=False)
            d_row[:, :, m] += np.einsum("ci,cj->ijc", jump, other)
    if p_col == k:
        m = _jump_knots(tc, lo, hi)
        if m.size:
            jump = (basis_matrix(tc, p_col, tc[m], deriv=k, side="left")
                    - basis_matrix(tc, p_col, tc[m], deriv=k, side="right", closed_end=False))
            other = basis_matrix(tr, p_row, tc[m], deriv=k, side="right", closed_end=False)
            d_col[:, :, m] += np.einsum("ci,cj->ijc", other, jump)


def assemble_bilinear_1d(k: int, knots_row, knots_col, degree_row: int, degree_col: int, domain) -> np.ndarray:
    """Dense block ``int_I d^k B_i d^k B_j`` (mass for ``k = 0``, stiffness for ``k = 1``)."""
    tr, tc = np.asarray(knots_row, dtype=float), np.asarray(knots_col, dtype=float)
    same = degree_row == degree_col and tr.shape == tc.shape and bool(np.all(tr == tc))
    return bilinear_block_1d(k, tr, degree_row, tc, degree_col, domain, same_patch=same).matrix


def d_assemble_bilinear_dknot(k: int, knots_row, knots_col, degree_row: int, degree_col: int, domain,
                              i: int, same_patch: bool = False, strict: bool = True) -> np.ndarray:
    """Derivative of the block with respect to row knot ``i`` (total derivative for
    a patch coupled with itself)."""
    blk = bilinear_block_1d(k, knots_row, degree_row, knots_col, degree_col, domain,
                            same_patch=same_patch, grad=True, strict=strict)
    return blk.d_row[:, :, i]


# ---------------------------------------------------------------------------
# 1D linear blocks


def linear_block_1d(factors: Sequence[tuple[Callable, int]], t, p: int, domain, tol: float = 1e-12,
                    grad: bool = False):
    """Integrals ``int_I f d^k B_j`` for several ``(f, k)`` pairs at once.

    Returns ``F`` of shape ``(n_basis, n_factors)`` and, with ``grad``, ``dF`` of
    shape ``(n_basis, n_knots, n_factors)``. Data integrals use adaptive Simpson on
    the knot cells clipped to the domain.
    """
    t = np.asarray(t, dtype=float)
    lo, hi = float(domain[0]), float(domain[1])
    nb, nk, nf = t.size - p - 1, t.size, len(factors)
    for _, k in factors:
        if k > p:
            raise DerivativeOrderError(f"derivative order {k} exceeds degree {p}")
    F = np.zeros((nb, nf))
    dF = np.zeros((nb, nk, nf)) if grad else None
    a, b = _merged_cells(t, None, lo, hi)
    kc, inside = _cells_of(t, a, b)
    a, b, kc = a[inside], b[inside], kc[inside]
    if a.size:
        # On a cell every d^k B_j and its knot derivatives are polynomials of
        # degree <= p, so int f phi = sum_r c_r(phi) int f P_r with c_r exact from
        # p + 1 Gauss points. Only the Legendre moments of f need adaptivity.
        tl = cell_windows(padded_knots(t, p), p, kc)
        need_dx = any(k == 1 for _, k in factors)
        nloc = p + 1
        rule = gauss_rule(nloc)
        legendre_at_nodes = np.polynomial.legendre.legvander(rule.nodes, p)  # (q, r)
        scale = (2 * np.arange(p + 1) + 1) / 2.0
        half, centre = 0.5 * (b - a), 0.5 * (a + b)

        def moments(cid, x):
            z = (x - centre[cid]) / half[cid]
            P = np.polynomial.legendre.legvander(z, p)
            cols = [np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)[:, None] * P for f, _ in factors]
            return np.concatenate(cols, axis=1)

        mu, _ = adaptive_simpson_cells(moments, a, b, tol=tol)
        mu = mu.reshape(a.size, nf, p + 1)
        # lam[c, f, q] = sum_r scale_r w_q P_r(z_q) mu[c, f, r]
        lam = np.einsum("r,q,qr,cfr->cfq", scale, rule.weights, legendre_at_nodes, mu)
        xq = centre[:, None] + half[:, None] * rule.nodes[None, :]
        lb = local_basis(tl[:, None, :], xq, p, deriv=1 if need_dx else 0, knot_grad=grad)
        J, okj = _scatter_index(kc, p, nb)
        if grad:
            G, okg = _scatter_knots(kc, p, nk)
        for fi, (f, k) in enumerate(factors):
            phi = lb.values if k == 0 else lb.dx
            block = np.einsum("cq,cqj->cj", lam[:, fi], phi)
            np.add.at(F[:, fi], J, block * okj)
            if grad:
                dphi = lb.dknots if k == 0 else lb.dx_dknots
                dblk = np.einsum("cq,cqjz->cjz", lam[:, fi], dphi)
                dblk = dblk * (okj[:, :, None] & okg[:, None, :])
                np.add.at(dF[:, :, fi], (J[:, :, None], G[:, None, :]), dblk)
    if grad:
        m = _jump_knots(t, lo, hi)
        if m.size:
            for fi, (f, k) in enumerate(factors):
                if k != p:
                    continue
                jump = (basis_matrix(t, p, t[m], deriv=k, side="left")
                        - basis_matrix(t, p, t[m], deriv=k, side="right", closed_end=False))
                fv = np.broadcast_to(np.asarray(f(t[m]), dtype=float), m.shape)
                dF[:, m, fi] += (jump * fv[:, None]).T
    return F, dF


def assemble_linear_1d(f: Callable, knots, degree: int, domain, order: int = 0, tol: float = 1e-12) -> np.ndarray:
    """Vector ``int_I f d^order B_j`` with adaptive Simpson."""
    F, _ = linear_block_1d([(f, order)], knots, degree, domain, tol=tol)
    return F[:, 0]


def d_assemble_linear_dknot(f: Callable, knots, degree: int, i: int, domain=None, order: int = 0,
                            tol: float = 1e-12) -> np.ndarray:
    """Derivative of :func:`assemble_linear_1d` with respect to knot ``i``."""
    t = np.asarray(knots, dtype=float)
    if domain is None:
        domain = (t[0], t[-1])
    _, dF = linear_block_1d([(f, order)], t, degree, domain, tol=tol, grad=True)
    return dF[:, i, 0]


# ---------------------------------------------------------------------------
# global operator


@dataclass
class AssembledOperator:
    """Per-axis blocks of ``A`` and ``F`` for a space and a separable form.

    ``bilinear[(s, s2)][term][axis]`` holds blocks for patch pairs ``s <= s2``;
    ``linear[s][term][axis]`` holds ``(vector, derivative or None)``.
    """
    space: MultiPatchSpace
    form: SeparableForm
    bilinear: dict = field(default_factory=dict)
    linear: dict = field(default_factory=dict)
    grad: bool = False


def assemble(space: MultiPatchSpace, form: SeparableForm, grad: bool = False, strict: bool = True) -> AssembledOperator:
    """Assemble all per-axis blocks; with ``grad`` also their knot derivatives."""
    if form.dim != space.dim:
        raise DimensionMismatchError("form and space dimensions differ")
    op = AssembledOperator(space, form, grad=grad)
    patches = space.patches
    for s in range(len(patches)):
        for s2 in range(s, len(patches)):
            cache = {}
            terms = []
            for orders in form.bilinear:
                axes = []
                for t, k in enumerate(orders):
                    key = (t, k)
                    if key not in cache:
                        pr, pc = patches[s], patches[s2]
                        cache[key] = bilinear_block_1d(
                            k, np.asarray(pr.knots[t]), pr.degrees[t], np.asarray(pc.knots[t]), pc.degrees[t],
                            space.domain[t], same_patch=(s == s2), grad=grad, strict=strict)
                    axes.append(cache[key])
                terms.append(axes)
            if s == s2 or not all(any(blk.is_zero for blk in axes) for axes in terms):
                op.bilinear[(s, s2)] = terms
    for s, pt in enumerate(patches):
        per_axis = []
        for t in range(space.dim):
            factors, index = [], {}
            for term in form.linear:
                f, k = term.factors[t]
                key = (id(f), k)
                if key not in index:
                    index[key] = len(factors)
                    factors.append((f, k))
            if factors:
                F, dF = linear_block_1d(factors, np.asarray(pt.knots[t]), pt.degrees[t], space.domain[t],
                                        tol=form.data_tol, grad=grad)
            per_axis.append((index, F if factors else None, dF if factors else None))
        terms = []
        for term in form.linear:
            axes = []
            for t, (f, k) in enumerate(term.factors):
                index, F, dF = per_axis[t]
                col = index[(id(f), k)]
                axes.append((F[:, col], None if dF is None else dF[:, :, col]))
            terms.append(axes)
        op.linear[s] = terms
    return op


def _apply_axis(M: np.ndarray, X: np.ndarray, axis: int) -> np.ndarray:
    """Multiply tensor ``X`` by ``M`` along ``axis``."""
    Y = np.tensordot(M, X, axes=([1], [axis]))
    return np.moveaxis(Y, 0, axis)


def _kron_apply(mats: Sequence[np.ndarray], X: np.ndarray) -> np.ndarray:
    for t, M in enumerate(mats):
        X = _apply_axis(M, X, t)
    return X


def apply_operator(op: AssembledOperator, W) -> np.ndarray:
    """``A W`` by per-axis products, never forming the d-dimensional matrix."""
    space = op.space
    Ws = space.split_weights(W)
    out = [np.zeros_like(x) for x in Ws]
    for (s, s2) in sorted(op.bilinear):
        for axes in op.bilinear[(s, s2)]:
            mats = [blk.matrix for blk in axes]
            out[s] += _kron_apply(mats, Ws[s2])
            if s != s2:
                out[s2] += _kron_apply([M.T for M in mats], Ws[s])
    return np.concatenate([o.ravel() for o in out])


def load_vector(op: AssembledOperator) -> np.ndarray:
    """``F`` as a flat vector in the weight layout."""
    parts = []
    for s, pt in enumerate(op.space.patches):
        acc = np.zeros(pt.n_basis)
        for axes in op.linear[s]:
            term = axes[0][0]
            for vec, _ in axes[1:]:
                term = np.multiply.outer(term, vec)
            acc = acc + term
        parts.append(acc.ravel())
    return np.concatenate(parts)


def energy_terms(op: AssembledOperator, W) -> tuple[float, float]:
    """``(W^T A W, F^T W)``."""
    W = np.asarray(W, dtype=float)
    return float(W @ apply_operator(op, W)), float(load_vector(op) @ W)


def _contract_except(Wa: np.ndarray, Wb: np.ndarray, mats: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """``M[i, j] = sum Wa[.., i, ..] Wb[.., j, ..] prod_{t != skip} mats[t]`` (i, j on axis ``skip``)."""
    X = Wb
    for t, M in enumerate(mats):
        if t != skip:
            X = _apply_axis(M, X, t)
    d = Wa.ndim
    other = [t for t in range(d) if t != skip]
    return np.tensordot(Wa, X, axes=(other, other))


def _vector_except(Wa: np.ndarray, vecs: Sequence[np.ndarray], skip: int) -> np.ndarray:
    X = Wa
    for t in reversed(range(len(vecs))):
        if t != skip:
            X = np.tensordot(X, vecs[t], axes=([t], [0]))
    return X


def knot_gradient(op: AssembledOperator, W) -> np.ndarray:
    """Partial gradient of ``1/2 W^T A W - F^T W`` over all knots at fixed ``W``.

    Entries of fixed knots are zeroed.
    """
    if not op.grad:
        raise ValueError("operator was assembled without derivatives")
    space = op.space
    Ws = space.split_weights(W)
    slices = {(s, t): sl for s, t, sl in space.knot_slices()}
    g = np.zeros(space.dim_knots)
    for (s, s2) in sorted(op.bilinear):
        factor = 0.5 if s == s2 else 1.0
        for axes in op.bilinear[(s, s2)]:
            mats = [blk.matrix for blk in axes]
            for t, blk in enumerate(axes):
                M = _contract_except(Ws[s], Ws[s2], mats, t)
                g[slices[(s, t)]] += factor * np.einsum("ij,ijm->m", M, blk.d_row)
                if s != s2:
                    g[slices[(s2, t)]] += factor * np.einsum("ij,ijm->m", M, blk.d_col)
    for s in range(space.n_patches):
        for axes in op.linear[s]:
            vecs = [vec for vec, _ in axes]
            for t, (_, dvec) in enumerate(axes):
                v = _vector_except(Ws[s], vecs, t)
                g[slices[(s, t)]] -= v @ dvec
    g[~space.trainable()] = 0.0
    return g
