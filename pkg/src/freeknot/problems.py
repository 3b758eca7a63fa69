"""Benchmark problems as separable data, degree gating and error metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial
from typing import Callable

import numpy as np

from .assembly import LinearTerm, SeparableForm, mass_form, stiffness_form
from .bspline import evaluate_spline
from .errors import CapabilityError
from .quadrature import adaptive_gauss_cells, adaptive_simpson, gauss_rule
from .space import MultiPatchSpace, init_uniform_approx, init_uniform_poisson, realise_grid


@dataclass(frozen=True, eq=False)
class Factor1D:
    """A 1D factor with its first derivative (both vectorised)."""
    value: Callable
    deriv: Callable

    def __call__(self, x):
        return self.value(x)


@dataclass(frozen=True)
class SeparableFunction:
    """``f(x) = sum_r prod_t f_{r,t}(x_t)``."""
    terms: tuple[tuple[Factor1D, ...], ...]

    @property
    def rank(self) -> int:
        return len(self.terms)

    @property
    def dim(self) -> int:
        return len(self.terms[0])

    def __call__(self, x, derivs=None):
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        derivs = derivs or (0,) * self.dim
        out = np.zeros(pts.shape[0])
        for term in self.terms:
            acc = np.ones(pts.shape[0])
            for t, fac in enumerate(term):
                acc = acc * (fac.deriv(pts[:, t]) if derivs[t] else fac.value(pts[:, t]))
            out += acc
        return out

    def grid(self, grids, derivs=None) -> np.ndarray:
        derivs = derivs or (0,) * self.dim
        out = 0.0
        for term in self.terms:
            acc = None
            for t, fac in enumerate(term):
                v = fac.deriv(grids[t]) if derivs[t] else fac.value(grids[t])
                acc = v if acc is None else np.multiply.outer(acc, v)
            out = out + acc
        return out


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """``kind`` is ``"approx"`` (L2 projection of ``exact``) or ``"poisson"``
    (``-laplace u = f`` with zero boundary values, load ``a(exact, .)``)."""
    name: str
    kind: str
    domain: tuple[tuple[float, float], ...]
    exact: SeparableFunction | None
    reference: Callable | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.domain)

    @property
    def mode(self) -> str:
        return self.kind

    def form(self, data_tol: float = 1e-12) -> SeparableForm:
        d = self.dim
        if self.kind == "approx":
            lin = [LinearTerm(tuple((fac, 0) for fac in term)) for term in self.exact.terms]
            return mass_form(d, lin, data_tol)
        lin = []
        for term in self.exact.terms:
            for s in range(d):
                lin.append(LinearTerm(tuple(((fac.deriv, 1) if t == s else (fac, 0))
                                            for t, fac in enumerate(term))))
        return stiffness_form(d, lin, data_tol)

    def init_space(self, layout, cells, degree) -> MultiPatchSpace:
        if self.kind == "approx":
            return init_uniform_approx(self.domain, layout, cells, degree)
        return init_uniform_poisson(self.domain, layout, cells, degree)

    @cached_property
    def exact_energy_norm_sq(self) -> float:
        """``a(u*, u*)`` from 1D adaptive Simpson integrals."""
        terms = self.exact.terms
        total = 0.0
        orders = [(0,) * self.dim] if self.kind == "approx" else \
            [tuple(1 if t == s else 0 for t in range(self.dim)) for s in range(self.dim)]
        for ks in orders:
            for ta in terms:
                for tb in terms:
                    prod = 1.0
                    for t, k in enumerate(ks):
                        fa = ta[t].deriv if k else ta[t].value
                        fb = tb[t].deriv if k else tb[t].value
                        lo, hi = self.domain[t]
                        prod *= adaptive_simpson(lambda x, fa=fa, fb=fb: fa(x) * fb(x), lo, hi, tol=1e-12)
                    total += prod
        return total


# ---------------------------------------------------------------------------
# benchmark definitions

EPS_SIGN = 0.01
ALPHA = 5.0
N_TERMS = 10


def _f(value, deriv) -> Factor1D:
    return Factor1D(value, deriv)


def _approx1d(eps: float = EPS_SIGN) -> SeparableFunction:
    def value(x):
        s = np.sin(2 * x + 0.4)
        return s * s / np.sqrt(s * s + eps)

    def deriv(x):
        s = np.sin(2 * x + 0.4)
        c = np.cos(2 * x + 0.4)
        return 2 * c * s * (s * s + 2 * eps) / (s * s + eps) ** 1.5
    return SeparableFunction(((_f(value, deriv),),))


def _smooth_sine() -> SeparableFunction:
    return SeparableFunction(((_f(lambda x: np.sin(2 * x + 0.4), lambda x: 2 * np.cos(2 * x + 0.4)),),))


def _poisson1d(kappa: float) -> SeparableFunction:
    def value(x):
        return (x * x - 1) * np.tanh(kappa * np.sin(x - 0.3))

    def deriv(x):
        th = np.tanh(kappa * np.sin(x - 0.3))
        return 2 * x * th + (x * x - 1) * kappa * np.cos(x - 0.3) * (1 - th * th)
    return SeparableFunction(((_f(value, deriv),),))


def _approx2d(alpha: float = ALPHA, n: int = N_TERMS) -> SeparableFunction:
    terms = []
    for k in range(n + 1):
        c = (2 * alpha) ** k / factorial(k)

        def xv(x, k=k, c=c):
            g = np.cos(np.pi * x + 1)
            return c * np.exp(-alpha * g * g) * g ** k

        def xd(x, k=k, c=c):
            g = np.cos(np.pi * x + 1)
            dg = -np.pi * np.sin(np.pi * x + 1)
            low = k * g ** (k - 1) if k > 0 else 0.0
            return c * np.exp(-alpha * g * g) * (low - 2 * alpha * g ** (k + 1)) * dg

        def yv(y, k=k):
            h = 3 * y
            return np.exp(-alpha * h * h) * h ** k

        def yd(y, k=k):
            h = 3 * y
            low = k * h ** (k - 1) if k > 0 else 0.0
            return np.exp(-alpha * h * h) * (low - 2 * alpha * h ** (k + 1)) * 3
        terms.append((_f(xv, xd), _f(yv, yd)))
    return SeparableFunction(tuple(terms))


def _approx2d_reference(x, y, alpha: float = ALPHA, n: int = N_TERMS):
    g = np.cos(np.pi * x + 1)
    h = 3 * y
    return sum((2 * alpha) ** k / factorial(k) * np.exp(-alpha * (g * g + h * h)) * (g * h) ** k
               for k in range(n + 1))


def _bump(a: float, b: float, sign: float):
    """Factor ``(1 - x^2) * (1 - tanh(a (x - b)))`` (sign=-1) or ``(1 - x^2) tanh(a (x - b))`` (sign=+1)."""
    def value(x):
        th = np.tanh(a * (x - b))
        g = th if sign > 0 else 1 - th
        return (1 - x * x) * g

    def deriv(x):
        th = np.tanh(a * (x - b))
        g = th if sign > 0 else 1 - th
        dg = a * (1 - th * th) * (1 if sign > 0 else -1)
        return -2 * x * g + (1 - x * x) * dg
    return _f(value, deriv)


def _poisson2d_tanh() -> SeparableFunction:
    return SeparableFunction((
        (_bump(20, 0.3, -1), _bump(50, -0.3, -1)),
        (_bump(50, -0.7, +1), _bump(20, 0.6, -1)),
    ))


def _poisson2d_tanh_reference(x, y):
    v = (1 - np.tanh(20 * (x - 0.3))) * (1 - np.tanh(50 * (y + 0.3))) \
        + np.tanh(50 * (x + 0.7)) * (1 - np.tanh(20 * (y - 0.6)))
    return (1 - x * x) * (1 - y * y) * v


def _peak_factor(shift: float, scale: float, trig: str, sign: float):
    def env(x):
        return (x * x - 1) * np.exp(-scale * (x - shift) ** 2)

    def denv(x):
        e = np.exp(-scale * (x - shift) ** 2)
        return 2 * x * e + (x * x - 1) * e * (-2 * scale * (x - shift))

    if trig == "cos":
        return _f(lambda x: sign * env(x) * np.cos(x),
                  lambda x: sign * (denv(x) * np.cos(x) - env(x) * np.sin(x)))
    return _f(lambda x: sign * env(x) * np.sin(x),
              lambda x: sign * (denv(x) * np.sin(x) + env(x) * np.cos(x)))


def _poisson2d_peak() -> SeparableFunction:
    return SeparableFunction((
        (_peak_factor(-0.3, 3.0, "cos", 1.0), _peak_factor(0.5, 1.0, "cos", 1.0)),
        (_peak_factor(-0.3, 3.0, "sin", -1.0), _peak_factor(0.5, 1.0, "sin", 1.0)),
    ))


def _poisson2d_peak_reference(x, y):
    return (x * x - 1) * (y * y - 1) * np.exp(-3 * (x + 0.3) ** 2 - (y - 0.5) ** 2) * np.cos(x + y)


UNIT = (-1.0, 1.0)

PROBLEMS = {
    "approx1d": lambda: ProblemSpec("approx1d", "approx", (UNIT,), _approx1d(),
                                    lambda x: _approx1d().terms[0][0].value(x)),
    "approx1d-smooth": lambda: ProblemSpec("approx1d-smooth", "approx", (UNIT,), _smooth_sine(),
                                           lambda x: np.sin(2 * x + 0.4)),
    "poisson1d": lambda: ProblemSpec("poisson1d", "poisson", (UNIT,), _poisson1d(100.0),
                                     lambda x: (x * x - 1) * np.tanh(100 * np.sin(x - 0.3))),
    "poisson1d-smooth": lambda: ProblemSpec("poisson1d-smooth", "poisson", (UNIT,), _poisson1d(2.0),
                                            lambda x: (x * x - 1) * np.tanh(2 * np.sin(x - 0.3))),
    "approx2d": lambda: ProblemSpec("approx2d", "approx", (UNIT, UNIT), _approx2d(), _approx2d_reference),
    "poisson2d-tanh": lambda: ProblemSpec("poisson2d-tanh", "poisson", (UNIT, UNIT), _poisson2d_tanh(),
                                          _poisson2d_tanh_reference),
    "poisson2d-peak": lambda: ProblemSpec("poisson2d-peak", "poisson", (UNIT, UNIT), _poisson2d_peak(),
                                          _poisson2d_peak_reference),
}


def make_problem(name: str) -> ProblemSpec:
    """Build a benchmark by name (see ``PROBLEMS``)."""
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def degree_gate(problem: ProblemSpec, space: MultiPatchSpace) -> None:
    """Raise :class:`CapabilityError` when knot derivatives are unavailable.

    L2 approximation: degree >= 1 with several patches, >= 0 with one.
    Poisson: degree >= 2 with several patches, >= 1 with one.
    """
    p = min(min(pt.degrees) for pt in space.patches)
    multi = space.n_patches > 1
    need = (1 if multi else 0) if problem.kind == "approx" else (2 if multi else 1)
    if p < need:
        raise CapabilityError(
            f"{problem.kind} with {space.n_patches} patch(es) needs degree >= {need}, got {p}")


# ---------------------------------------------------------------------------
# error metrics


@dataclass(frozen=True)
class ErrorMetrics:
    energy: float
    l2: float
    available: bool = True


def _breaks(space: MultiPatchSpace, t: int) -> np.ndarray:
    lo, hi = space.domain[t]
    pts = np.concatenate([np.asarray(pt.knots[t]) for pt in space.patches])
    pts = pts[(pts > lo) & (pts < hi)]
    return np.unique(np.concatenate([[lo], pts, [hi]]))


def _composite_grid(br: np.ndarray, max_width: float, points: int):
    a, b = br[:-1], br[1:]
    nsub = np.maximum(1, np.ceil((b - a) / max_width).astype(int))
    edges = np.concatenate([np.linspace(lo, hi, n + 1)[:-1] for lo, hi, n in zip(a, b, nsub)] + [[br[-1]]])
    x, w = gauss_rule(points).mapped(edges[:-1], edges[1:])
    return x.ravel(), w.ravel()


def _error_1d(space, W, exact: SeparableFunction, order: int) -> float:
    br = _breaks(space, 0)
    Ws = space.split_weights(W)

    def integrand(cid, x):
        uh = np.zeros_like(x)
        for pt, Wp in zip(space.patches, Ws):
            uh += evaluate_spline(np.asarray(pt.knots[0]), pt.degrees[0], Wp, x, deriv=order)
        ue = exact(x[:, None], (order,))
        return ((uh - ue) ** 2)[:, None]

    a, b = br[:-1], br[1:]
    x, w = gauss_rule(12).mapped(a, b)
    coarse = float(np.sum(w.ravel() * integrand(None, x.ravel())[:, 0]))
    # squared differences carry roundoff of relative size ~1e-16 / error, so the
    # per-cell target is capped at a 1e-6 share of the total
    floor = 1e-6 * max(coarse, 1e-300) / a.size
    res, _ = adaptive_gauss_cells(integrand, a, b, rtol=1e-10, atol=floor, max_depth=16)
    return float(np.sqrt(max(res.sum(), 0.0)))


def _error_nd(space, W, exact: SeparableFunction, orders, max_width: float = 0.05, points: int = 20) -> float:
    grids, weights = zip(*[_composite_grid(_breaks(space, t), max_width, points) for t in range(space.dim)])
    diff = realise_grid(space, W, grids, orders) - exact.grid(grids, orders)
    wt = weights[0]
    for w in weights[1:]:
        wt = np.multiply.outer(wt, w)
    return float(np.sqrt(max(np.sum(wt * diff * diff), 0.0)))


def l2_error(problem: ProblemSpec, space: MultiPatchSpace, W) -> float:
    if space.dim == 1:
        return _error_1d(space, W, problem.exact, 0)
    return _error_nd(space, W, problem.exact, (0,) * space.dim)


def energy_error(problem: ProblemSpec, space: MultiPatchSpace, W) -> float:
    """Energy-norm error by direct quadrature of the squared (gradient) difference."""
    if problem.kind == "approx":
        return l2_error(problem, space, W)
    total = 0.0
    for s in range(space.dim):
        orders = tuple(1 if t == s else 0 for t in range(space.dim))
        if space.dim == 1:
            e = _error_1d(space, W, problem.exact, 1)
        else:
            e = _error_nd(space, W, problem.exact, orders)
        total += e * e
    return float(np.sqrt(total))


def energy_error_from_identity(problem: ProblemSpec, op, W) -> float:
    """``sqrt(a(u_h,u_h) - 2 l(u_h) + a(u*,u*))`` from assembled terms."""
    from .assembly import energy_terms
    quad, lin = energy_terms(op, W)
    return float(np.sqrt(max(quad - 2 * lin + problem.exact_energy_norm_sq, 0.0)))


def error_metrics(problem: ProblemSpec, space: MultiPatchSpace, W) -> ErrorMetrics:
    """Energy-norm and L2 errors of the realised ``W`` on ``space``."""
    if problem.exact is None:
        return ErrorMetrics(float("nan"), float("nan"), available=False)
    l2 = l2_error(problem, space, W)
    en = l2 if problem.kind == "approx" else energy_error(problem, space, W)
    return ErrorMetrics(en, l2, True)
