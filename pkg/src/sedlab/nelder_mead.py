"""Downhill simplex minimizer.

Standard reflection/expansion/contraction/shrink moves with coefficients
(1, 2, 0.5, 0.5), stopping when the simplex diameter falls below ``tol``
or after ``max_iter`` iterations.  Vertex ordering is stable, so on a
constant objective the initial point is returned unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericError

REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool


def nelder_mead(objective, x0, tol: float = 1e-9, max_iter: int = 2000,
                initial_step=None) -> NelderMeadResult:
    """Minimize ``objective`` from ``x0``; returns the best vertex found.

    ``initial_step`` sets the per-coordinate offsets of the starting
    simplex (default: 5% of each coordinate, 0.00025 where it is zero).
    The objective may return ``inf`` to mark infeasible points; ``nan``
    is treated the same way.
    """
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    dim = x0.shape[0]

    def f(x):
        val = float(objective(x))
        return np.inf if np.isnan(val) else val

    f0 = f(x0)
    if not np.isfinite(f0):
        raise NumericError("objective is not finite at the starting point")

    if initial_step is None:
        step = np.where(x0 != 0.0, 0.05 * np.abs(x0), 0.00025)
    else:
        step = np.broadcast_to(np.asarray(initial_step, dtype=np.float64), (dim,)).copy()

    vertices = [x0.copy()]
    values = [f0]
    for i in range(dim):
        v = x0.copy()
        v[i] += step[i]
        vertices.append(v)
        values.append(f(v))
    vertices = np.array(vertices)
    values = np.array(values)

    iterations = 0
    converged = False
    while iterations < max_iter:
        order = np.argsort(values, kind="stable")
        vertices = vertices[order]
        values = values[order]

        diameter = 0.0
        for i in range(dim + 1):
            for j in range(i + 1, dim + 1):
                diameter = max(diameter, float(np.max(np.abs(vertices[i] - vertices[j]))))
        if diameter < tol:
            converged = True
            break
        iterations += 1

        centroid = vertices[:-1].mean(axis=0)
        worst = vertices[-1]
        reflected = centroid + REFLECT * (centroid - worst)
        f_reflected = f(reflected)

        if f_reflected < values[0]:
            expanded = centroid + EXPAND * (centroid - worst)
            f_expanded = f(expanded)
            if f_expanded < f_reflected:
                vertices[-1], values[-1] = expanded, f_expanded
            else:
                vertices[-1], values[-1] = reflected, f_reflected
        elif f_reflected < values[-2]:
            vertices[-1], values[-1] = reflected, f_reflected
        else:
            if f_reflected < values[-1]:
                contracted = centroid + CONTRACT * (reflected - centroid)
            else:
                contracted = centroid + CONTRACT * (worst - centroid)
            f_contracted = f(contracted)
            if f_contracted < min(f_reflected, values[-1]):
                vertices[-1], values[-1] = contracted, f_contracted
            else:
                best = vertices[0]
                for i in range(1, dim + 1):
                    vertices[i] = best + SHRINK * (vertices[i] - best)
                    values[i] = f(vertices[i])

    order = np.argsort(values, kind="stable")
    best_idx = order[0]
    return NelderMeadResult(
        x=vertices[best_idx].copy(),
        fun=float(values[best_idx]),
        iterations=iterations,
        converged=converged,
    )


__all__ = ["NelderMeadResult", "nelder_mead"]
