"""Brute-force projection onto a small polyhedron by active-set enumeration.

Used as an independent oracle for the isotonic projection: every subset of the
inequality constraints is made active, the point is projected onto that affine
subspace, and the closest feasible candidate wins.
"""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .constraints import Chain, FeasibleSet, project

FEAS_TOL = 1e-10


def chain_inequalities(n: int, lower, upper, fixed, h_min: float):
    """``(G, g, E, e)`` with ``G x <= g`` and ``E x = e`` for one knot chain
    (equality rows are filled in by the caller's ``values``)."""
    rows, rhs = [], []
    for i in range(n - 1):
        if fixed[i] and fixed[i + 1]:
            continue
        r = np.zeros(n)
        r[i], r[i + 1] = 1.0, -1.0
        rows.append(r)
        rhs.append(-h_min)
    for i in range(n):
        if fixed[i]:
            continue
        if np.isfinite(lower[i]):
            r = np.zeros(n)
            r[i] = -1.0
            rows.append(r)
            rhs.append(-lower[i])
        if np.isfinite(upper[i]):
            r = np.zeros(n)
            r[i] = 1.0
            rows.append(r)
            rhs.append(upper[i])
    G = np.array(rows).reshape(-1, n)
    return G, np.array(rhs)


def project_polyhedron(y, G, g, E=None, e=None) -> np.ndarray:
    """``argmin |x - y|`` over ``{G x <= g, E x = e}`` by enumerating active sets."""
    y = np.asarray(y, dtype=float)
    n = y.size
    E = np.zeros((0, n)) if E is None else np.asarray(E, float).reshape(-1, n)
    e = np.zeros(0) if e is None else np.asarray(e, float)
    m = G.shape[0]
    best, best_d = None, np.inf
    for k in range(0, min(m, n) + 1):
        for S in combinations(range(m), k):
            A = np.vstack([E, G[list(S)]])
            b = np.concatenate([e, g[list(S)]])
            if A.shape[0]:
                lam, *_ = np.linalg.lstsq(A @ A.T, A @ y - b, rcond=None)
                x = y - A.T @ lam
                if np.max(np.abs(A @ x - b)) > 1e-9:
                    continue  # inconsistent active set
            else:
                x = y.copy()
            if m and np.max(G @ x - g) > FEAS_TOL:
                continue
            d = float(np.sum((x - y) ** 2))
            if d < best_d - 1e-15:
                best, best_d = x, d
    if best is None:
        raise ValueError("no feasible point found")
    return best


def project_chain_bruteforce(y, chain: Chain, h_min: float) -> np.ndarray:
    n = chain.index.size
    G, g = chain_inequalities(n, chain.lower, chain.upper, chain.fixed, h_min)
    E = np.eye(n)[chain.fixed]
    e = chain.values[chain.fixed]
    return project_polyhedron(y, G, g, E, e)


def project_bruteforce(fs: FeasibleSet, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    out = xi.copy()
    for ch in fs.chains:
        out[ch.index] = project_chain_bruteforce(xi[ch.index], ch, fs.h_min)
    return out


# ---------------------------------------------------------------------------
# random instances


def random_chain(rng: np.random.Generator, max_free: int = 6):
    """A feasible random chain with at most ``max_free`` free knots and a target point."""
    n = int(rng.integers(2, max_free + 1))
    h = float(rng.choice([0.0, 1e-6, rng.uniform(0.0, 0.2)]))
    base = np.sort(rng.uniform(-1, 1, n)) + h * np.arange(n)
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for i in range(n):
        if rng.random() < 0.3:
            lower[i] = base[i] - rng.uniform(0, 0.5)
        if rng.random() < 0.3:
            upper[i] = base[i] + rng.uniform(0, 0.5)
    fixed = np.zeros(n, dtype=bool)
    if rng.random() < 0.3:
        fixed[0] = True
    if rng.random() < 0.3:
        fixed[-1] = True
    chain = Chain(np.arange(n), lower, upper, fixed, base.copy())
    y = base + rng.normal(scale=float(rng.choice([0.05, 0.5, 2.0])), size=n)
    return FeasibleSet((chain,), h, n, "approx"), y


def compare_random(n_instances: int = 500, seed: int = 0, max_free: int = 6) -> dict:
    """Projection against the brute-force oracle; returns worst deviations."""
    from .constraints import min_slack
    rng = np.random.default_rng(seed)
    worst = {"oracle": 0.0, "idempotence": 0.0, "slack": np.inf}
    for _ in range(n_instances):
        fs, y = random_chain(rng, max_free)
        x = project(fs, y)
        ref = project_bruteforce(fs, y)
        worst["oracle"] = max(worst["oracle"], float(np.max(np.abs(x - ref))))
        worst["idempotence"] = max(worst["idempotence"], float(np.max(np.abs(project(fs, x) - x))))
        worst["slack"] = min(worst["slack"], min_slack(fs, x))
    worst["instances"] = n_instances
    return worst
