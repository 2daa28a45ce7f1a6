"""1D linear finite elements on the interval (-1, 1).

Provides mesh construction (with exact embedding of required points),
assembly of the stiffness and mass matrices for piecewise-linear hat
functions, Dirichlet solves by lifting, the mass-matrix L2 norm, and
point evaluation of the nodal basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._linalg import chol_spd, solve_chol
from .errors import InvalidInputError

#: Two uniform nodes closer than this to a required point are replaced by it.
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Mesh:
    """Strictly increasing nodes spanning [-1, 1]."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or len(nodes) < 3:
            raise InvalidInputError("mesh needs at least 3 nodes")
        if nodes[0] != -1.0 or nodes[-1] != 1.0:
            raise InvalidInputError("mesh must span [-1, 1] exactly")
        if not np.all(np.diff(nodes) > 0):
            raise InvalidInputError("mesh nodes must be strictly increasing")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def build_mesh(n_elements: int, required_points=()) -> Mesh:
    """Uniform mesh on [-1, 1] with ``required_points`` embedded as nodes.

    The nodes are the union of the uniform grid with the required points;
    any uniform node within ``MERGE_TOL`` of a required point is replaced
    by that point, so each required point appears bitwise-exactly.
    """
    if n_elements < 2:
        raise InvalidInputError("n_elements must be at least 2")
    req = np.sort(np.asarray(required_points, dtype=float))
    if req.size:
        if not np.all((req > -1.0) & (req < 1.0)):
            raise InvalidInputError("required points must lie strictly inside (-1, 1)")
        if np.any(np.diff(req) < MERGE_TOL):
            raise InvalidInputError("required points must be pairwise distinct")
    uniform = np.linspace(-1.0, 1.0, n_elements + 1)
    keep = np.ones(len(uniform), dtype=bool)
    for p in req:
        keep &= np.abs(uniform - p) >= MERGE_TOL
    return Mesh(np.sort(np.concatenate([uniform[keep], req])))


def node_index(mesh: Mesh, x: float) -> int:
    """Index of the node bitwise equal to ``x``; error if ``x`` is not a node."""
    k = int(np.searchsorted(mesh.nodes, x))
    if k < len(mesh.nodes) and mesh.nodes[k] == x:
        return k
    raise InvalidInputError(f"point {x!r} is not a mesh node")


@dataclass
class FeSpace:
    """Assembled piecewise-linear finite-element space on a mesh.

    ``stiffness`` and ``mass`` are the full symmetric matrices over all
    degrees of freedom; ``interior_dofs`` excludes the two boundary nodes.
    Instances are immutable by convention; the interior stiffness Cholesky
    factor is cached on first use.
    """

    mesh: Mesh
    stiffness: np.ndarray
    mass: np.ndarray
    interior_dofs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.interior_dofs = np.arange(1, self.mesh.n_nodes - 1)

    @property
    def n_dof(self) -> int:
        return self.mesh.n_nodes

    @cached_property
    def stiffness_interior_chol(self):
        """Cholesky factor of the interior stiffness block."""
        ii = self.interior_dofs
        factor, jitter = chol_spd(self.stiffness[np.ix_(ii, ii)], "interior stiffness")
        if jitter != 0.0:
            raise InvalidInputError("interior stiffness block is not positive definite")
        return factor


@dataclass(frozen=True)
class Field:
    """A function in the FE space, stored as its nodal coefficient vector."""

    space: FeSpace
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", coeffs)
        if coeffs.shape != (self.space.n_dof,):
            raise InvalidInputError("coefficient vector length must equal n_dof")
        if not np.all(np.isfinite(coeffs)):
            raise InvalidInputError("coefficient vector has non-finite entries")


def assemble(mesh: Mesh) -> FeSpace:
    """Assemble stiffness and mass matrices with exact local integration.

    Per element of length h the local matrices are (1/h)[[1,-1],[-1,1]]
    and (h/6)[[2,1],[1,2]].
    """
    n = mesh.n_nodes
    h = np.diff(mesh.nodes)
    stiffness = np.zeros((n, n))
    mass = np.zeros((n, n))
    i = np.arange(n - 1)
    for matrix, diag, off in ((stiffness, 1.0 / h, -1.0 / h), (mass, h / 3.0, h / 6.0)):
        matrix[i, i] += diag
        matrix[i + 1, i + 1] += diag
        matrix[i, i + 1] = off
        matrix[i + 1, i] = off
    return FeSpace(mesh=mesh, stiffness=stiffness, mass=mass)


def solve_dirichlet(space: FeSpace, rhs: np.ndarray, b_left: float, b_right: float) -> Field:
    """Solve a(u, v_i) = rhs_i for interior i with u(-1)=b_left, u(1)=b_right.

    Uses lifting: the boundary values are imposed exactly and the interior
    symmetric positive-definite block is solved by Cholesky.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (space.n_dof,):
        raise InvalidInputError("rhs length must equal n_dof")
    ii = space.interior_dofs
    boundary = np.array([0, space.n_dof - 1])
    b_vals = np.array([b_left, b_right], dtype=float)
    reduced = rhs[ii] - space.stiffness[np.ix_(ii, boundary)] @ b_vals
    coeffs = np.empty(space.n_dof)
    coeffs[boundary] = b_vals
    coeffs[ii] = solve_chol(space.stiffness_interior_chol, reduced)
    return Field(space=space, coeffs=coeffs)


def l2_norm(space: FeSpace, nodal_values: np.ndarray) -> float:
    """L2(Omega) norm of the piecewise-linear interpolant of nodal values."""
    v = np.asarray(nodal_values, dtype=float)
    if v.shape != (space.n_dof,):
        raise InvalidInputError("vector length must equal n_dof")
    return float(np.sqrt(max(v @ (space.mass @ v), 0.0)))


def eval_matrix(space: FeSpace, points) -> np.ndarray:
    """Evaluation matrix V with V[i, j] = (hat function j)(points[i]).

    Each row holds the at most two nonzero hat-function values at the
    point; points that coincide bitwise with a node give unit rows.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    nodes = space.mesh.nodes
    if pts.size and (pts.min() < -1.0 or pts.max() > 1.0):
        raise InvalidInputError("evaluation points must lie inside [-1, 1]")
    V = np.zeros((len(pts), space.n_dof))
    for i, x in enumerate(pts):
        k = int(np.searchsorted(nodes, x))
        if k < len(nodes) and nodes[k] == x:
            V[i, k] = 1.0
            continue
        k -= 1
        h = nodes[k + 1] - nodes[k]
        V[i, k] = (nodes[k + 1] - x) / h
        V[i, k + 1] = (x - nodes[k]) / h
    return V
