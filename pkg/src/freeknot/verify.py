"""Numerical checks of the B-spline boundedness, Hoelder and interchange inequalities.

Every check samples random knot windows, evaluates the left-hand side with an
exact Gauss rule on the (merged) break cells and divides by the right-hand side
with ``C_p`` replaced by its certified upper bound ``(p + 1) ** -0.5``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .bspline import eval_bspline, eval_dknot, eval_dknot_dx, eval_dx
from .quadrature import gauss_rule

PASS_SLACK = 1e-9
WIDTH_RANGE = (1.0, 10.0)


def c_bound(p: int) -> float:
    return (p + 1) ** -0.5


@dataclass(frozen=True)
class SubCheck:
    name: str
    samples: int
    max_ratio: float

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + PASS_SLACK


@dataclass(frozen=True)
class BoundReport:
    lemma: str
    p: int
    checks: tuple[SubCheck, ...] = field(default_factory=tuple)

    @property
    def samples(self) -> int:
        return sum(c.samples for c in self.checks)

    @property
    def max_ratio(self) -> float:
        return max((c.max_ratio for c in self.checks), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + PASS_SLACK


# ---------------------------------------------------------------------------
# sampling


def sample_window(rng: np.random.Generator, n: int, h_min: float, length: float | None = None) -> np.ndarray:
    """Sorted knots on ``[0, L]`` with all gaps ``>= h_min``.

    Drawn as sorted uniforms on ``[0, L - (n-1) h_min]`` shifted by ``i * h_min``,
    which has the same law as sorting uniforms on ``[0, L]`` and rejecting until
    the gap condition holds.
    """
    if length is None:
        length = rng.uniform(*WIDTH_RANGE)
    room = length - (n - 1) * h_min
    if room < 0:
        raise ValueError("window too short for the requested gap")
    return np.sort(rng.uniform(0.0, room, n)) + h_min * np.arange(n)


def _min_gap(t: np.ndarray) -> float:
    return float(np.min(np.diff(t)))


def sample_pair(rng: np.random.Generator, n: int, h_min: float):
    """Two windows with joint minimum gap ``>= h_min``: independent or a small perturbation."""
    length = rng.uniform(*WIDTH_RANGE)
    sigma = sample_window(rng, n, h_min, length)
    if rng.random() < 0.5:
        return sigma, sample_window(rng, n, h_min, length)
    while True:
        scale = 10.0 ** rng.uniform(-4, 0) * h_min
        tau = sigma + scale * rng.standard_normal(n)
        if _min_gap(tau) >= h_min:
            return sigma, tau


# ---------------------------------------------------------------------------
# exact L2 norms of piecewise polynomials


def _l2_norm(func: Callable, breaks: np.ndarray, degree: int) -> float:
    cells = np.unique(breaks)
    a, b = cells[:-1], cells[1:]
    a, b = a[b > a], b[b > a]
    x, w = gauss_rule(max(degree, 0) + 1).mapped(a, b)
    v = func(x.ravel()).reshape(x.shape)
    return float(np.sqrt(max(np.sum(w * v * v), 0.0)))


def _ratio(lhs: float, rhs: float) -> float:
    if rhs == 0.0:
        return 0.0 if lhs == 0.0 else np.inf
    return lhs / rhs


# ---------------------------------------------------------------------------
# boundedness


def boundedness_subchecks(p: int) -> list[str]:
    names = ["value"]
    if p >= 1:
        names += ["dx", "dknot"]
    if p >= 2:
        names.append("dknot_dx")
    return names


def check_boundedness(p: int, samples: int = 1000, h_min: float = 0.05, seed: int = 0) -> BoundReport:
    """Bounds on the L2 norms of ``B_p``, ``d_x B_p``, ``d_i B_p`` and ``d_i d_x B_p``."""
    rng = np.random.default_rng(seed)
    worst = {name: 0.0 for name in boundedness_subchecks(p)}
    counts = dict.fromkeys(worst, 0)
    cp, cq = c_bound(p), c_bound(p - 1) if p >= 1 else np.nan
    for _ in range(samples):
        tau = sample_window(rng, p + 2, h_min)
        h = _min_gap(tau)
        width = tau[-1] - tau[0]
        lhs = _l2_norm(lambda x: eval_bspline(p, tau, x), tau, p)
        worst["value"] = max(worst["value"], _ratio(lhs, cp * np.sqrt(width)))
        counts["value"] += 1
        if p >= 1:
            lhs = _l2_norm(lambda x: eval_dx(p, tau, x, 1), tau, p)
            worst["dx"] = max(worst["dx"], _ratio(lhs, np.sqrt(2 * p) * cq * h ** -0.5))
            counts["dx"] += 1
            for i in range(p + 2):
                lhs = _l2_norm(lambda x: eval_dknot(p, tau, i, x), tau, p)
                worst["dknot"] = max(worst["dknot"], _ratio(lhs, np.sqrt(2 / p) * cp * h ** -0.5))
                counts["dknot"] += 1
        if p >= 2:
            for i in range(p + 2):
                lhs = _l2_norm(lambda x: eval_dknot_dx(p, tau, i, x), tau, p)
                rhs = 2 * np.sqrt(2) / (p - 1) * cq * h ** -1.5
                worst["dknot_dx"] = max(worst["dknot_dx"], _ratio(lhs, rhs))
                counts["dknot_dx"] += 1
    return BoundReport("boundedness", p, tuple(SubCheck(k, counts[k], worst[k]) for k in worst))


# ---------------------------------------------------------------------------
# Hoelder continuity


def holder_subchecks(p: int) -> list[str]:
    """Sub-checks whose degree preconditions admit ``p``."""
    names = []
    if p == 0:
        names.append("value_p0")
    if p >= 1:
        names.append("value")
    if p == 1:
        names += ["dx_p1", "dknot_p1"]
    if p >= 2:
        names += ["dx", "dknot"]
    if p == 2:
        names.append("dknot_dx_p2")
    if p >= 3:
        names.append("dknot_dx")
    return names


def _holder_bound(name: str, p: int, h: float, dist: float) -> float:
    cp = c_bound(p)
    cq = c_bound(p - 1) if p >= 1 else np.nan
    if name == "value_p0":
        return 2 * c_bound(0) * dist ** 0.5
    if name == "value":
        return np.sqrt(2 * (p + 1) / p) * cp * h ** -0.5 * dist
    if name == "dx_p1":
        return 4 * c_bound(0) * h ** -1 * dist ** 0.5
    if name == "dx":
        return 2 * np.sqrt((p + 1) / (p - 1)) * cq * h ** -1.5 * dist
    if name == "dknot_p1":
        return 5 * c_bound(1) * h ** -1 * dist ** 0.5
    if name == "dknot":
        return 2 / p * np.sqrt((2 * p + 7) / (p - 1)) * cp * h ** -1.5 * dist
    if name == "dknot_dx_p2":
        return 12 * c_bound(1) * h ** -2 * dist ** 0.5
    if name == "dknot_dx":
        return 4 / (p - 1) * np.sqrt((p + 7) / (p - 2)) * cq * h ** -2.5 * dist
    raise KeyError(name)


def _holder_lhs(name: str, p: int, sigma, tau, i: int) -> float:
    breaks = np.concatenate([sigma, tau])
    if name.startswith("value"):
        f = lambda s: (lambda x: eval_bspline(p, s, x))
    elif name.startswith("dknot_dx"):
        f = lambda s: (lambda x: eval_dknot_dx(p, s, i, x))
    elif name.startswith("dknot"):
        f = lambda s: (lambda x: eval_dknot(p, s, i, x))
    else:
        f = lambda s: (lambda x: eval_dx(p, s, x, 1))
    fs, ft = f(sigma), f(tau)
    return _l2_norm(lambda x: fs(x) - ft(x), breaks, p)


def check_holder(p: int, samples: int = 1000, h_min: float = 0.05, seed: int = 0) -> BoundReport:
    """Hoelder/Lipschitz bounds for ``B_p`` and its derivatives over random window pairs."""
    rng = np.random.default_rng(seed)
    names = holder_subchecks(p)
    worst = dict.fromkeys(names, 0.0)
    counts = dict.fromkeys(names, 0)
    for _ in range(samples):
        sigma, tau = sample_pair(rng, p + 2, h_min)
        h = min(_min_gap(sigma), _min_gap(tau))
        dist = float(np.linalg.norm(sigma - tau))
        for name in names:
            indices = range(p + 2) if name.startswith("dknot") else (0,)
            for i in indices:
                lhs = _holder_lhs(name, p, sigma, tau, i)
                worst[name] = max(worst[name], _ratio(lhs, _holder_bound(name, p, h, dist)))
                counts[name] += 1
    return BoundReport("holder", p, tuple(SubCheck(k, counts[k], worst[k]) for k in names))


# ---------------------------------------------------------------------------
# differentiation under the integral


INTERCHANGE_TOL = 1e-5
INTERCHANGE_FLOOR = 1e-3


def _smooth_integral(f: Callable, g: Callable, t: np.ndarray, piece: float = 0.25, points: int = 16) -> float:
    """``int f g`` over the window, composite Gauss on sub-cells of the breaks."""
    a, b = t[:-1], t[1:]
    a, b = a[b > a], b[b > a]
    n = np.maximum(1, np.ceil((b - a) / piece).astype(int))
    edges = [np.linspace(lo, hi, k + 1) for lo, hi, k in zip(a, b, n)]
    lo = np.concatenate([e[:-1] for e in edges])
    hi = np.concatenate([e[1:] for e in edges])
    x, w = gauss_rule(points).mapped(lo, hi)
    xs = x.ravel()
    return float(np.sum(w.ravel() * f(xs) * g(xs)))


def random_smooth(rng: np.random.Generator) -> Callable:
    amp, freq, phase, shift = rng.uniform(0.5, 2), rng.uniform(0.2, 3), rng.uniform(0, 2 * np.pi), rng.uniform(-1, 1)
    return lambda x: amp * np.sin(freq * x + phase) + shift


def check_interchange(p: int, samples: int = 1000, h_min: float = 0.05, order: int = 0,
                      eps: float = 1e-6, seed: int = 0) -> BoundReport:
    """Central differences of ``int f d^k B_p`` against ``int f d_i d^k B_p``.

    ``order`` 0 needs ``p >= 1`` and ``order`` 1 needs ``p >= 2``. The ratio is
    ``|fd - exact| / (1e-5 * max(|exact|, 1e-3))``.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    if p < order + 1:
        raise ValueError(f"order {order} needs degree >= {order + 1}")
    rng = np.random.default_rng(seed)
    worst, count = 0.0, 0
    for _ in range(samples):
        tau = sample_window(rng, p + 2, h_min)
        f = random_smooth(rng)
        for i in range(p + 2):
            def integral(t):
                g = (lambda x: eval_bspline(p, t, x)) if order == 0 else (lambda x: eval_dx(p, t, x, 1))
                return _smooth_integral(f, g, t)
            plus, minus = tau.copy(), tau.copy()
            plus[i] += eps
            minus[i] -= eps
            fd = (integral(plus) - integral(minus)) / (2 * eps)
            d = (lambda x: eval_dknot(p, tau, i, x)) if order == 0 else (lambda x: eval_dknot_dx(p, tau, i, x))
            exact = _smooth_integral(f, d, tau)
            worst = max(worst, abs(fd - exact) / (INTERCHANGE_TOL * max(abs(exact), INTERCHANGE_FLOOR)))
            count += 1
    return BoundReport("interchange", p, (SubCheck(f"order{order}", count, worst),))


# ---------------------------------------------------------------------------
# reporting


def report_rows(reports: Iterable[BoundReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for c in rep.checks:
            rows.append({"lemma": rep.lemma, "p": rep.p, "check": c.name, "samples": c.samples,
                         "max_ratio": f"{c.max_ratio:.6e}", "pass": "yes" if c.passed else "no"})
    return rows


def format_table(reports: Iterable[BoundReport]) -> str:
    rows = report_rows(reports)
    cols = ["lemma", "p", "check", "samples", "max_ratio", "pass"]
    widths = {c: max([len(c)] + [len(str(r[c])) for r in rows]) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines += ["  ".join(str(r[c]).ljust(widths[c]) for c in cols) for r in rows]
    return "\n".join(lines)


def to_csv(reports: Iterable[BoundReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["lemma", "p", "check", "samples", "max_ratio", "pass"],
                            lineterminator="\n")
    writer.writeheader()
    writer.writerows(report_rows(reports))
    return buf.getvalue()
