"""Independent verification routes for the functional GP pipeline.

Two oracles are provided:

* a weight-space Bayesian linear regression in the covariance operator's
  eigenbasis, equivalent to the kernel-space formulas when the basis is
  untruncated;
* the KKT system of the equivalent constrained least-squares problem,
  whose solution coincides with the posterior mean state.

Both are meant for coarse meshes; the eigensolve is dense and cubic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, solve

from ._linalg import solve_chol, symmetrize, try_chol_spd
from .covariance import CovOperator, k_apply
from .errors import InvalidInputError, NumericalFailureError
from .fem1d import Field, node_index
from .problem import AdjointSet, BkModel


@dataclass(frozen=True)
class EigenBasis:
    """Mass-orthonormal eigenpairs of the covariance operator on interior dofs."""

    psis: tuple
    lambdas: np.ndarray


@dataclass(frozen=True)
class KktSolution:
    """Constrained least-squares optimum (state, forcing field, coefficients)."""

    u_o: Field
    q_o: Field
    beta_o: np.ndarray


def eigenbasis(op: CovOperator, n_modes: int) -> EigenBasis:
    """Solve k(psi, v) = lambda m(psi, v) on the homogeneous subspace.

    Returns the ``n_modes`` largest eigenvalues (descending) with
    eigenvectors normalized against the mass matrix.
    """
    space = op.space
    ii = space.interior_dofs
    if not 1 <= n_modes <= len(ii):
        raise InvalidInputError("n_modes must be between 1 and the interior dof count")
    k_int = op.matrix[np.ix_(ii, ii)]
    m_int = space.mass[np.ix_(ii, ii)]
    try:
        lam, vecs = eigh(k_int, m_int)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"generalized eigensolve failed: {exc}") from exc
    lam = lam[::-1][:n_modes]
    vecs = vecs[:, ::-1][:, :n_modes]
    psis = []
    for j in range(n_modes):
        coeffs = np.zeros(space.n_dof)
        coeffs[ii] = vecs[:, j]
        psis.append(Field(space=space, coeffs=coeffs))
    return EigenBasis(psis=tuple(psis), lambdas=lam)


def weight_space_predict(basis: EigenBasis, adjoints: AdjointSet, residual,
                         sigma: float, test_fields) -> tuple[np.ndarray, np.ndarray]:
    """Bayesian linear regression over eigenbasis weights.

    The prior weight variances are the operator eigenvalues.  Predictions
    use the small-system form: with L[i, j] = m(psi_i, phi_j) and
    S = sigma^2 I + L' Lambda L,

        mean(g(v)) = l(v)' Lambda L S^-1 y,
        var(g(v))  = l(v)' Lambda l(v) - l(v)' Lambda L S^-1 L' Lambda l(v).

    ``test_fields`` is a sequence of Field or an (n_dof x n_test) matrix of
    coefficient vectors.
    """
    residual = np.asarray(residual, dtype=float)
    space = basis.psis[0].space
    lam = basis.lambdas
    psi = np.column_stack([p.coeffs for p in basis.psis])
    phi = adjoints.matrix
    if isinstance(test_fields, np.ndarray):
        tests = test_fields
    else:
        tests = np.column_stack([f.coeffs for f in test_fields])
    mass = space.mass
    l_train = psi.T @ (mass @ phi)
    l_test = psi.T @ (mass @ tests)
    s_mat = symmetrize((l_train.T * lam) @ l_train) + sigma**2 * np.eye(len(adjoints))
    factored = try_chol_spd(s_mat)
    if factored is None:
        raise NumericalFailureError("weight-space system is not positive definite")
    factor, _ = factored
    cross = (l_test.T * lam) @ l_train
    means = cross @ solve_chol(factor, residual)
    var_prior = np.einsum("ji,ji->i", l_test * lam[:, None], l_test)
    var_reduction = np.einsum("ij,ji->i", cross, solve_chol(factor, cross.T))
    return means, var_prior - var_reduction


def _observation_rows(space, adjoints: AdjointSet) -> np.ndarray:
    """Indicator rows picking the adjoints' observation nodes (interior numbering)."""
    e_mat = np.zeros((len(adjoints), len(space.interior_dofs)))
    for row, p in enumerate(adjoints.points):
        e_mat[row, node_index(space.mesh, p) - 1] = 1.0
    return e_mat


def kkt_solve(model: BkModel, op: CovOperator, adjoints: AdjointSet,
              data, sigma: float) -> KktSolution:
    """Solve the symmetric saddle system of the constrained least squares.

    Unknowns are (q_interior, u_interior, beta); the stationarity
    conditions reduce to

        [ K    A    0      ] [q]   [0-block rhs ordering below]
        [ A    0    E'     ] [u] = ...
        [ 0    E    s^2 I  ] [b]

    with A the interior stiffness, K the interior operator Gram, E the
    observation rows, and s^2 the squared noise level.
    """
    space = model.space
    data = np.asarray(data, dtype=float)
    ii = space.interior_dofs
    n_int = len(ii)
    m_obs = len(adjoints)
    if data.shape != (m_obs,):
        raise InvalidInputError("data length must match the number of adjoints")
    e_mat = _observation_rows(space, adjoints)
    a_int = space.stiffness[np.ix_(ii, ii)]
    k_int = op.matrix[np.ix_(ii, ii)]
    b_vals = np.array([model.b_left, model.b_right])
    load_int = model.load[ii] - space.stiffness[np.ix_(ii, [0, space.n_dof - 1])] @ b_vals
    sig2 = sigma**2
    system = np.block([
        [k_int, a_int, np.zeros((n_int, m_obs))],
        [a_int, np.zeros((n_int, n_int)), e_mat.T],
        [np.zeros((m_obs, n_int)), e_mat, sig2 * np.eye(m_obs)],
    ])
    rhs = np.concatenate([load_int, np.zeros(n_int), data])
    try:
        sol = solve(system, rhs, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"KKT system solve failed: {exc}") from exc
    q_coeffs = np.zeros(space.n_dof)
    q_coeffs[ii] = sol[:n_int]
    u_coeffs = np.zeros(space.n_dof)
    u_coeffs[[0, space.n_dof - 1]] = b_vals
    u_coeffs[ii] = sol[n_int:2 * n_int]
    return KktSolution(u_o=Field(space=space, coeffs=u_coeffs),
                       q_o=Field(space=space, coeffs=q_coeffs),
                       beta_o=sol[2 * n_int:])


def kkt_residuals(model: BkModel, op: CovOperator, adjoints: AdjointSet,
                  data, sigma: float, sol: KktSolution) -> np.ndarray:
    """Relative residuals of the five stationarity conditions.

    The multiplier eliminations p = q and rho = beta make two of them
    identically zero; the remaining three are the adjoint-representation
    equation for q, the forced state equation, and the output constraint.
    """
    space = model.space
    ii = space.interior_dofs
    data = np.asarray(data, dtype=float)
    a_int = space.stiffness[np.ix_(ii, ii)]
    k_int = op.matrix[np.ix_(ii, ii)]
    e_mat = _observation_rows(space, adjoints)
    b_vals = np.array([model.b_left, model.b_right])
    load_int = model.load[ii] - space.stiffness[np.ix_(ii, [0, space.n_dof - 1])] @ b_vals
    q_i, u_i, beta = sol.q_o.coeffs[ii], sol.u_o.coeffs[ii], sol.beta_o

    def rel(residual, scale):
        denom = max(float(np.max(np.abs(scale))), 1e-300)
        return float(np.max(np.abs(residual))) / denom

    return np.array([
        0.0,                                             # k(q - p, .) with p = q
        rel(a_int @ q_i + e_mat.T @ beta, e_mat.T @ beta),
        0.0,                                             # sigma (beta - rho)
        rel(a_int @ u_i + k_int @ q_i - load_int, load_int),
        rel(e_mat @ u_i + sigma**2 * beta - data, data),
    ])
