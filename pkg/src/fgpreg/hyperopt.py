"""Log-marginal-likelihood evaluation and hyperparameter maximization.

The search is deterministic and derivative-free: a stage of per-parameter
logarithmic scans (parameters are swept one at a time in order, with the
not-yet-scanned ones held at their lower bound) locates a starting basin,
and a projected Nelder-Mead simplex refines it.  Candidate points are
clamped onto the bound box, so a coordinate can land exactly on 0; this is
how the nondegenerate boundary optima of the bilinear covariance family
are attained (a log-parameterized search cannot reach them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._linalg import logdet_chol, solve_chol, try_chol_spd
from .errors import InvalidInputError, OptimizationFailureError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LmlProblem:
    """A log-marginal-likelihood objective over hyperparameters.

    ``builder`` maps a parameter vector to the symmetric training
    covariance matrix; ``residual`` is the zero-mean data vector the
    Gaussian is evaluated on.  ``kind`` is "functional" or "standard";
    functional parameters with lower bound 0 get the exact value 0 added
    to their scan grid.
    """

    kind: str
    residual: np.ndarray
    builder: Callable[[np.ndarray], np.ndarray]
    bounds: tuple

    def __post_init__(self):
        object.__setattr__(self, "residual", np.asarray(self.residual, dtype=float))
        if self.kind not in ("functional", "standard"):
            raise InvalidInputError("kind must be 'functional' or 'standard'")
        if not self.bounds:
            raise InvalidInputError("bounds must be nonempty")
        for lo, hi in self.bounds:
            if lo < 0 or hi < lo:
                raise InvalidInputError("bounds must satisfy 0 <= lo <= hi")


@dataclass(frozen=True)
class OptResult:
    """Optimizer output: best parameters, value, and the evaluation trace."""

    theta_star: np.ndarray
    lml_star: float
    n_evals: int
    trace: tuple


def log_marginal_likelihood(problem: LmlProblem, params) -> float:
    """-(1/2) y' D^-1 y - (1/2) log det D - (m/2) log 2pi, or -inf if infeasible."""
    d_mat = np.asarray(problem.builder(np.asarray(params, dtype=float)), dtype=float)
    if not np.all(np.isfinite(d_mat)):
        return -np.inf
    factored = try_chol_spd(d_mat)
    if factored is None:
        return -np.inf
    factor, _ = factored
    y = problem.residual
    quad = float(y @ solve_chol(factor, y))
    return -0.5 * quad - 0.5 * logdet_chol(factor) - 0.5 * len(y) * LOG_2PI


def _grid_axis(problem: LmlProblem, index: int, grid_points: int, grid_span) -> list:
    lo, hi = problem.bounds[index]
    axis = [g for g in np.geomspace(grid_span[0], grid_span[1], grid_points)
            if lo <= g <= hi]
    if problem.kind == "functional" and lo == 0.0:
        axis = [0.0] + axis
    if not axis:
        axis = [lo]
    return axis


def _nelder_mead(f, x0: np.ndarray, bounds, max_evals: int, rel_tol: float):
    """Projected Nelder-Mead maximization; returns the evaluation list."""
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    clamp = lambda x: np.minimum(np.maximum(x, lo), hi)
    n = len(x0)
    simplex = [clamp(np.array(x0, dtype=float))]
    for i in range(n):
        vertex = np.array(x0, dtype=float)
        vertex[i] = vertex[i] * 1.05 if vertex[i] != 0.0 else 0.00025
        simplex.append(clamp(vertex))
    evals = [(tuple(x), f(x)) for x in simplex]
    simplex = np.array(simplex)
    values = np.array([v for _, v in evals])
    while len(evals) < max_evals:
        order = np.argsort(-values, kind="stable")
        simplex, values = simplex[order], values[order]
        diameter = np.max(np.abs(simplex[1:] - simplex[0]))
        if diameter < rel_tol * max(1.0, np.max(np.abs(simplex[0]))):
            break
        centroid = simplex[:-1].mean(axis=0)

        def probe(x):
            x = clamp(x)
            v = f(x)
            evals.append((tuple(x), v))
            return x, v

        xr, vr = probe(centroid + (centroid - simplex[-1]))
        if vr > values[0]:
            xe, ve = probe(centroid + 2.0 * (centroid - simplex[-1]))
            simplex[-1], values[-1] = (xe, ve) if ve > vr else (xr, vr)
        elif vr > values[-2]:
            simplex[-1], values[-1] = xr, vr
        else:
            xc, vc = probe(centroid + 0.5 * (simplex[-1] - centroid))
            if vc > values[-1]:
                simplex[-1], values[-1] = xc, vc
            else:
                for i in range(1, n + 1):
                    simplex[i], values[i] = probe(simplex[0] + 0.5 * (simplex[i] - simplex[0]))
    return evals


def optimize(problem: LmlProblem, grid_points: int = 25, grid_span=(1e-6, 1e3),
             max_refine_evals: int = 400, simplex_rel_tol: float = 1e-6) -> OptResult:
    """Two-stage deterministic LML maximization over the bound box.

    Ties within 1e-12 of the best value are broken toward the
    lexicographically smallest parameter vector.
    """
    objective = lambda x: log_marginal_likelihood(problem, x)
    current = np.array([b[0] for b in problem.bounds], dtype=float)
    trace = []
    for i in range(len(problem.bounds)):
        best_val, best_coord = -np.inf, current[i]
        for value in _grid_axis(problem, i, grid_points, grid_span):
            candidate = current.copy()
            candidate[i] = value
            lml = objective(candidate)
            trace.append((tuple(candidate), lml))
            if lml > best_val:
                best_val, best_coord = lml, value
        current[i] = best_coord
    trace.extend(_nelder_mead(objective, current, problem.bounds,
                              max_refine_evals, simplex_rel_tol))
    lml_star = max(v for _, v in trace)
    if not np.isfinite(lml_star):
        raise OptimizationFailureError("no feasible hyperparameters in the search range")
    candidates = sorted(x for x, v in trace if v >= lml_star - 1e-12)
    return OptResult(theta_star=np.array(candidates[0]), lml_star=lml_star,
                     n_evals=len(trace), trace=tuple(trace))
