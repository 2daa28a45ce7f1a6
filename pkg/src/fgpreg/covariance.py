"""Two-parameter bilinear covariance operator and Gram-matrix assembly.

The operator is k(v, w; theta) = theta1 * int(v w) + theta2 * int(v' w'),
evaluated exactly through the assembled mass and stiffness matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import symmetrize
from .errors import InvalidInputError
from .fem1d import FeSpace, Field
from .problem import AdjointSet


@dataclass(frozen=True)
class CovOperator:
    """Covariance operator with hyperparameters theta = (theta1, theta2)."""

    theta: tuple
    space: FeSpace

    def __post_init__(self):
        t1, t2 = (float(self.theta[0]), float(self.theta[1]))
        object.__setattr__(self, "theta", (t1, t2))
        if t1 < 0 or t2 < 0:
            raise InvalidInputError("covariance hyperparameters must be nonnegative")
        if t1 + t2 <= 0:
            raise InvalidInputError("covariance operator must be nondegenerate")

    @property
    def matrix(self) -> np.ndarray:
        """Operator Gram matrix on the nodal basis: theta1*M + theta2*A."""
        t1, t2 = self.theta
        return t1 * self.space.mass + t2 * self.space.stiffness


@dataclass(frozen=True)
class GramBundle:
    """Gram matrices of the operator against adjoints and the FE basis."""

    K_phi_phi: np.ndarray
    K_basis_phi: np.ndarray
    K_basis_basis: np.ndarray


def k_apply(op: CovOperator, v: Field, w: Field) -> float:
    """Evaluate k(v, w) = theta1 * v'Mw + theta2 * v'Aw."""
    if v.space is not op.space or w.space is not op.space:
        raise InvalidInputError("fields must live on the operator's space")
    t1, t2 = op.theta
    return float(t1 * (v.coeffs @ (op.space.mass @ w.coeffs))
                 + t2 * (v.coeffs @ (op.space.stiffness @ w.coeffs)))


def adjoint_gram_parts(space: FeSpace, adjoints: AdjointSet) -> tuple[np.ndarray, np.ndarray]:
    """Theta-independent adjoint Grams (Phi'M Phi, Phi'A Phi), symmetrized."""
    phi = adjoints.matrix
    if phi.size == 0:
        empty = np.zeros((len(adjoints), len(adjoints)))
        return empty, empty.copy()
    g_mass = symmetrize(phi.T @ (space.mass @ phi))
    g_stiff = symmetrize(phi.T @ (space.stiffness @ phi))
    return g_mass, g_stiff


def gram(op: CovOperator, adjoints: AdjointSet) -> GramBundle:
    """Assemble all Gram blocks of the operator for a set of adjoints."""
    for f in adjoints.fields:
        if f.space is not op.space:
            raise InvalidInputError("adjoints must live on the operator's space")
    t1, t2 = op.theta
    g_mass, g_stiff = adjoint_gram_parts(op.space, adjoints)
    k_phi_phi = t1 * g_mass + t2 * g_stiff
    k_basis_basis = op.matrix
    if len(adjoints):
        k_basis_phi = k_basis_basis @ adjoints.matrix
    else:
        k_basis_phi = np.zeros((op.space.n_dof, 0))
    return GramBundle(K_phi_phi=k_phi_phi, K_basis_phi=k_basis_phi,
                      K_basis_basis=k_basis_basis)
