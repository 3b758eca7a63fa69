"""Energy, knot gradient, inner CG and the projected ADAM knot optimiser."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .assembly import (AssembledOperator, SeparableForm, apply_operator, assemble, energy_terms,
                       knot_gradient, load_vector)
from .constraints import FeasibleSet, build_feasible_set, cross_patch_min_gap, min_slack, project
from .errors import DivergenceError, ProjectionError
from .space import MultiPatchSpace

LEARNING_RATES = (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3, 5e-4)


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    warmup: float = 50.0            # time constant of the learning-rate ramp
    max_iters: int | None = None    # None: 1000, or 3000 above 1000 weights
    stop_tol: float | None = None   # None: 1e-6 in 1D, 1e-4 otherwise
    cg_tol: float = 1e-12
    cg_capped_iters: int = 100
    full_solve_every: int = 25
    h_min: float = 1e-6
    strict: bool = True

    def iterations_for(self, space: MultiPatchSpace) -> int:
        if self.max_iters is not None:
            return self.max_iters
        return 3000 if space.dim_weights > 1000 else 1000

    def stop_for(self, space: MultiPatchSpace) -> float:
        if self.stop_tol is not None:
            return self.stop_tol
        return 1e-6 if space.dim == 1 else 1e-4


# ---------------------------------------------------------------------------
# linear solve


def operator_diagonal(op: AssembledOperator) -> np.ndarray:
    """Diagonal of the assembled matrix (same-patch blocks only contribute)."""
    parts = []
    for s, pt in enumerate(op.space.patches):
        acc = np.zeros(pt.n_basis)
        for axes in op.bilinear[(s, s)]:
            term = np.diag(axes[0].matrix)
            for blk in axes[1:]:
                term = np.multiply.outer(term, np.diag(blk.matrix))
            acc = acc + term
        parts.append(acc.ravel())
    return np.concatenate(parts)


def cg_solve(apply: Callable, F, W0=None, tol: float = 1e-12, max_iters: int | None = None,
             diagonal=None):
    """Conjugate gradients for ``A W = F`` with an optional Jacobi preconditioner.

    Stops when ``||F - A W|| <= tol * ||F||``. Returns ``(W, relative residual, iterations)``.
    """
    F = np.asarray(F, dtype=float)
    n = F.size
    W = np.zeros(n) if W0 is None else np.array(W0, dtype=float)
    if max_iters is None:
        max_iters = 20 * n + 100
    fnorm = float(np.linalg.norm(F))
    if fnorm == 0.0:
        return np.zeros(n), 0.0, 0
    if diagonal is not None:
        inv = np.where(diagonal > 0, 1.0 / np.where(diagonal > 0, diagonal, 1.0), 1.0)
    else:
        inv = np.ones(n)
    r = F - apply(W)
    z = inv * r
    d = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / fnorm
    if not np.isfinite(res):
        raise DivergenceError("non-finite residual in conjugate gradients")
    it = 0
    while res > tol and it < max_iters:
        Ad = apply(d)
        dAd = float(d @ Ad)
        if not np.isfinite(dAd):
            raise DivergenceError("non-finite value in conjugate gradients")
        if dAd <= 0.0:
            break
        alpha = rz / dAd
        W = W + alpha * d
        r = r - alpha * Ad
        it += 1
        res = float(np.linalg.norm(r)) / fnorm
        z = inv * r
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    if not np.all(np.isfinite(W)):
        raise DivergenceError("non-finite weights from conjugate gradients")
    return W, res, it


def solve_weights(op: AssembledOperator, W0=None, tol: float = 1e-12, max_iters: int | None = None):
    F = load_vector(op)
    return cg_solve(lambda v: apply_operator(op, v), F, W0, tol, max_iters, operator_diagonal(op))


# ---------------------------------------------------------------------------
# energy and gradient


def energy(space: MultiPatchSpace, form: SeparableForm, xi, W) -> float:
    """``1/2 W^T A W - F^T W`` on the space with knot parameters ``xi``."""
    op = assemble(space.with_knot_params(xi), form)
    quad, lin = energy_terms(op, W)
    return 0.5 * quad - lin


def grad_knots(space: MultiPatchSpace, form: SeparableForm, xi, W, strict: bool = True) -> np.ndarray:
    """Partial knot gradient of the energy at fixed ``W`` (zero at fixed knots)."""
    op = assemble(space.with_knot_params(xi), form, grad=True, strict=strict)
    return knot_gradient(op, W)


def optimal_energy(space: MultiPatchSpace, form: SeparableForm, tol: float = 1e-12):
    """Energy of the Galerkin solution on ``space``; returns ``(energy, W)``."""
    op = assemble(space, form)
    W, _, _ = solve_weights(op, tol=tol)
    quad, lin = energy_terms(op, W)
    return 0.5 * quad - lin, W


# ---------------------------------------------------------------------------
# ADAM


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def learning_rate(config: OptimConfig, t: int) -> float:
    return (1.0 - np.exp(-t / config.warmup)) * config.lr


def adam_step(state: AdamState, xi, grad, config: OptimConfig, t: int) -> np.ndarray:
    """One bias-corrected ADAM update with the warm-up schedule (in place on ``state``).

    ``t`` counts from 1; ``t == 0`` leaves ``xi`` and ``state`` untouched.
    """
    xi = np.asarray(xi, dtype=float)
    if t <= 0:
        return xi.copy()
    g = np.asarray(grad, dtype=float)
    state.m = config.beta1 * state.m + (1 - config.beta1) * g
    state.v = config.beta2 * state.v + (1 - config.beta2) * g * g
    m_hat = state.m / (1 - config.beta1 ** t)
    v_hat = state.v / (1 - config.beta2 ** t)
    return xi - learning_rate(config, t) * m_hat / (np.sqrt(v_hat) + config.eps)


# ---------------------------------------------------------------------------
# optimisation loop


@dataclass
class TraceRow:
    iter: int
    energy: float
    grad_norm: float
    step_norm: float
    min_slack: float
    cg_iters: int
    cg_residual: float
    cross_gap: float = float("inf")   # smallest knot distance between different patches


@dataclass
class OptimResult:
    space: MultiPatchSpace
    xi: np.ndarray
    W: np.ndarray
    energy: float
    initial_energy: float
    iters: int
    best_iter: int
    trace: list[TraceRow] = field(default_factory=list)
    aborted: bool = False
    reason: str = ""
    lr: float = float("nan")
    wall_s: float = 0.0


def minimise(space: MultiPatchSpace, form: SeparableForm, config: OptimConfig = OptimConfig(),
             feasible: FeasibleSet | None = None, mode: str | None = None,
             callback: Callable | None = None) -> OptimResult:
    """Projected ADAM on the free knots with the weights eliminated by CG.

    Every iteration solves for ``W`` (fully at the first iteration and every
    ``full_solve_every`` iterations, otherwise a warm-started capped CG), records
    the energy, takes an ADAM step on the partial knot gradient and projects.
    The lowest-energy iterate is returned, re-solved to full accuracy.
    ``callback(row, xi)`` receives each trace row and the projected knots.
    """
    start = time.perf_counter()
    if feasible is None:
        feasible = build_feasible_set(space, mode or "approx", config.h_min)
    free = space.trainable()
    xi = space.knot_params()
    state = AdamState.zeros(xi.size)
    n_iters = config.iterations_for(space)
    stop = config.stop_for(space)
    trace: list[TraceRow] = []
    W = None
    best = (np.inf, xi.copy(), None, 0)
    initial_energy = np.nan
    aborted, reason = False, ""
    it = 0
    for it in range(1, n_iters + 1):
        try:
            cur = space.with_knot_params(xi)
            op = assemble(cur, form, grad=True, strict=config.strict)
            full = it == 1 or it % config.full_solve_every == 0
            W, res, cg_it = solve_weights(op, W, config.cg_tol,
                                          None if full else config.cg_capped_iters)
            quad, lin = energy_terms(op, W)
            K = 0.5 * quad - lin
            g = knot_gradient(op, W)
            if not (np.isfinite(K) and np.all(np.isfinite(g))):
                raise DivergenceError(f"non-finite energy or gradient at iteration {it}")
            if it == 1:
                initial_energy = K
            if K < best[0]:
                best = (K, xi.copy(), W.copy(), it)
            new = project(feasible, adam_step(state, xi, g, config, it))
        except (DivergenceError, ProjectionError) as exc:
            aborted, reason = True, str(exc)
            break
        step = float(np.linalg.norm((new - xi)[free]))
        gap = cross_patch_min_gap(space.with_knot_params(new)) if space.n_patches > 1 else np.inf
        trace.append(TraceRow(it, K, float(np.linalg.norm(g[free])), step,
                              min_slack(feasible, new), cg_it, res, gap))
        if callback is not None:
            callback(trace[-1], new)
        xi = new
        if step < stop:
            break
    K_best, xi_best, W_best, best_it = best
    final_space = space.with_knot_params(xi_best)
    if W_best is not None:
        op = assemble(final_space, form)
        W_best, _, _ = solve_weights(op, W_best, config.cg_tol)
        quad, lin = energy_terms(op, W_best)
        K_best = 0.5 * quad - lin
    return OptimResult(final_space, xi_best, W_best, float(K_best), float(initial_energy), it, best_it,
                       trace, aborted, reason, config.lr, time.perf_counter() - start)


def sweep(space: MultiPatchSpace, form: SeparableForm, config: OptimConfig = OptimConfig(),
          learning_rates: Sequence[float] = LEARNING_RATES, mode: str = "approx") -> list[OptimResult]:
    """Run :func:`minimise` once per learning rate from the same start."""
    feasible = build_feasible_set(space, mode, config.h_min)
    return [minimise(space, form, replace(config, lr=lr), feasible) for lr in learning_rates]


def best_of(results: Sequence[OptimResult]) -> OptimResult:
    """Lowest final energy among non-aborted runs (ties: first); aborted ones only as fallback."""
    ok = [r for r in results if not r.aborted and np.isfinite(r.energy)]
    pool = ok or [r for r in results if np.isfinite(r.energy)] or list(results)
    return min(pool, key=lambda r: r.energy)
