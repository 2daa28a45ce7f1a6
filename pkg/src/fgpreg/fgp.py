"""Functional Gaussian-process regression through a linear PDE model.

Training pairs are (adjoint state, observed-minus-predicted output).  The
posterior of the unknown forcing functional on the FE basis is

    gbar      = K(basis, Phi) beta,        D beta = d - s,
    cov_g     = K(basis, basis) - K(basis, Phi) D^{-1} K(Phi, basis),

with D = K(Phi, Phi) + sigma^2 I.  The posterior state follows by pushing
(gbar, cov_g) through the inverse of the PDE operator with the boundary
values held fixed.

For the state covariance, :func:`solve_posterior` uses an algebraically
equivalent square-root form C = Z Z' so that the pointwise posterior
variance is an explicit sum of squares.  At sigma = 0 the factor Z is
built from an orthogonal projection, which keeps the variance at the
observation points at the round-off floor instead of the much larger
cancellation error of forming W cov_g W' directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import qr, solve_triangular, svd

from ._linalg import chol_spd, solve_chol, symmetrize
from .covariance import CovOperator, adjoint_gram_parts
from .errors import InvalidInputError, NumericalFailureError
from .fem1d import FeSpace, Field, eval_matrix, node_index, solve_dirichlet
from .problem import AdjointSet, BkModel


@dataclass(frozen=True)
class FgpFit:
    """Training-system solve: D beta = residual with D = K(Phi,Phi) + sigma^2 I."""

    beta: np.ndarray
    D: np.ndarray
    chol_D: tuple
    residual: np.ndarray
    sigma: float
    jitter: float

    @property
    def noise_total(self) -> float:
        """Effective diagonal shift sigma^2 + jitter applied to K(Phi,Phi)."""
        return self.sigma**2 + self.jitter


@dataclass(frozen=True)
class FgpPosterior:
    """Posterior mean/covariance of the state and of the forcing functional.

    ``mean_nodal`` lives on all mesh nodes; ``cov``/``std_nodal`` refer to
    ``eval_points`` (all mesh nodes by default).  ``cov`` is None when only
    the diagonal was requested.
    """

    space: FeSpace
    mean_nodal: np.ndarray
    cov: np.ndarray | None
    std_nodal: np.ndarray
    gbar: np.ndarray
    cov_g: np.ndarray
    eval_points: np.ndarray


def fit(op: CovOperator, adjoints: AdjointSet, residual: np.ndarray, sigma: float) -> FgpFit:
    """Factor D = K(Phi,Phi) + sigma^2 I and solve for beta."""
    residual = np.asarray(residual, dtype=float)
    if residual.shape != (len(adjoints),):
        raise InvalidInputError("residual length must match the number of adjoints")
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    t1, t2 = op.theta
    g_mass, g_stiff = adjoint_gram_parts(op.space, adjoints)
    D = t1 * g_mass + t2 * g_stiff + sigma**2 * np.eye(len(adjoints))
    try:
        chol_D, jitter = chol_spd(D, "training covariance")
    except NumericalFailureError as exc:
        raise NumericalFailureError(
            f"{exc} (theta={op.theta}, n_train={len(adjoints)})") from exc
    beta = solve_chol(chol_D, residual)
    return FgpFit(beta=beta, D=D + jitter * np.eye(len(D)), chol_D=chol_D,
                  residual=residual, sigma=float(sigma), jitter=jitter)


def posterior_functional(op: CovOperator, adjoints: AdjointSet,
                         fitted: FgpFit) -> tuple[np.ndarray, np.ndarray]:
    """Posterior of the functional on the FE basis: (gbar, cov_g)."""
    k_basis_basis = op.matrix
    if len(adjoints) == 0:
        return np.zeros(op.space.n_dof), k_basis_basis.copy()
    k_basis_phi = k_basis_basis @ adjoints.matrix
    gbar = k_basis_phi @ fitted.beta
    cov_g = k_basis_basis - k_basis_phi @ solve_chol(fitted.chol_D, k_basis_phi.T)
    return gbar, symmetrize(cov_g)


def _eval_interior(space: FeSpace, eval_points) -> tuple[np.ndarray, np.ndarray]:
    """Evaluation points (defaulting to all nodes) and V restricted to interior dofs."""
    if eval_points is None:
        pts = space.mesh.nodes.copy()
    else:
        pts = np.atleast_1d(np.asarray(eval_points, dtype=float))
    V = eval_matrix(space, pts)
    return pts, V[:, space.interior_dofs]


def _state_stats(space: FeSpace, factor_int: np.ndarray, eval_points,
                 diag_only: bool) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
    """Push an interior covariance factor through the PDE solve.

    ``factor_int`` has cov_g[interior, interior] = factor_int @ factor_int.T.
    Returns (eval points, cov or None, std) of the state.
    """
    pts, v_int = _eval_interior(space, eval_points)
    g = v_int @ solve_chol(space.stiffness_interior_chol, factor_int)
    var = np.einsum("ij,ij->i", g, g)
    std = np.sqrt(np.clip(var, 0.0, None))
    cov = None if diag_only else symmetrize(g @ g.T)
    return pts, cov, std


def posterior_state(model: BkModel, gbar: np.ndarray, cov_g: np.ndarray,
                    eval_points=None, diag_only: bool = False) -> FgpPosterior:
    """Posterior state from an assembled functional posterior.

    The mean solves the best-knowledge problem with load l - gbar and the
    original boundary values; the covariance is W cov_g W' where W maps an
    interior forcing perturbation through the inverse stiffness to the
    evaluation points (boundary dofs carry no uncertainty).
    """
    space = model.space
    mean = solve_dirichlet(space, model.load - gbar, model.b_left, model.b_right)
    ii = space.interior_dofs
    cov_int = cov_g[np.ix_(ii, ii)]
    pts, v_int = _eval_interior(space, eval_points)
    inner = solve_chol(space.stiffness_interior_chol,
                       solve_chol(space.stiffness_interior_chol, cov_int).T)
    half = v_int @ inner
    var = np.einsum("ij,ij->i", half, v_int)
    std = np.sqrt(np.clip(var, 0.0, None))
    cov = None if diag_only else symmetrize(half @ v_int.T)
    return FgpPosterior(space=space, mean_nodal=mean.coeffs, cov=cov,
                        std_nodal=std, gbar=gbar, cov_g=cov_g, eval_points=pts)


def solve_posterior(model: BkModel, op: CovOperator, adjoints: AdjointSet,
                    fitted: FgpFit, eval_points=None,
                    diag_only: bool = False) -> FgpPosterior:
    """End-to-end posterior state for a fitted functional GP.

    Algebraically identical to chaining :func:`posterior_functional` and
    :func:`posterior_state`, but the covariance square root is built
    directly from the operator factors (projection form when the total
    noise is zero), which preserves exact interpolation structure in the
    propagated variance.
    """
    space = model.space
    if space is not op.space:
        raise InvalidInputError("model and covariance operator use different spaces")
    gbar, cov_g = posterior_functional(op, adjoints, fitted)
    mean = solve_dirichlet(space, model.load - gbar, model.b_left, model.b_right)

    ii = space.interior_dofs
    k_int = op.matrix[np.ix_(ii, ii)]
    chol_k, _ = chol_spd(k_int, "covariance operator (interior)")
    lk = np.tril(chol_k[0])
    if len(adjoints) == 0:
        factor = lk
    else:
        q = lk.T @ adjoints.matrix[ii, :]
        if fitted.noise_total == 0.0:
            u = qr(q, mode="economic")[0]
            factor = lk - (lk @ u) @ u.T
        else:
            ld = np.tril(fitted.chol_D[0])
            b = solve_triangular(ld, q.T, lower=True).T
            u, s, _ = svd(b, full_matrices=False)
            shrink = 1.0 - np.sqrt(np.clip(1.0 - np.minimum(s, 1.0)**2, 0.0, None))
            factor = lk - (lk @ (u * shrink)) @ u.T
    pts, cov, std = _state_stats(space, factor, eval_points, diag_only)
    return FgpPosterior(space=space, mean_nodal=mean.coeffs, cov=cov,
                        std_nodal=std, gbar=gbar, cov_g=cov_g, eval_points=pts)


def predicted_outputs(posterior: FgpPosterior, points) -> np.ndarray:
    """Posterior mean outputs at observation points (which must be nodes)."""
    idx = [node_index(posterior.space.mesh, p) for p in np.atleast_1d(points)]
    return posterior.mean_nodal[np.asarray(idx, dtype=int)]


def output_gap(posterior: FgpPosterior, obs_points, data) -> np.ndarray:
    """Diagnostic d - sbar at the observation points.

    With noise sigma the gap equals sigma^2 * beta, and vanishes for
    noise-free data.
    """
    return np.asarray(data, dtype=float) - predicted_outputs(posterior, obs_points)
