"""Uniform-mesh convergence studies (no knot optimisation)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .energy_opt import optimal_energy
from .problems import ProblemSpec, error_metrics

DEFAULT_SIZES = (16, 32, 64, 128, 256)


@dataclass(frozen=True)
class RatePoint:
    cells: int
    n_dofs: int
    l2: float
    energy: float


def uniform_errors(problem: ProblemSpec, degree: int, sizes: Sequence[int] = DEFAULT_SIZES) -> list[RatePoint]:
    """Galerkin errors on single-patch uniform spaces with ``cells`` knot spans."""
    out = []
    for c in sizes:
        space = problem.init_space(1, c, degree)
        _, W = optimal_energy(space, problem.form())
        m = error_metrics(problem, space, W)
        out.append(RatePoint(int(c), space.dim_weights, m.l2, m.energy))
    return out


def fitted_slope(sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(size)``."""
    x = np.log(np.asarray(sizes, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
