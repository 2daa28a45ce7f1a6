"""Best-knowledge model, synthetic truth, observations, and adjoint states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import solve_chol
from .errors import InvalidInputError
from .fem1d import FeSpace, Field, node_index, solve_dirichlet


def chebyshev_points(m: int) -> np.ndarray:
    """Extended Chebyshev nodes on [-1, 1] whose endpoints are exactly +-1.

    x_i = -cos((2i-1)pi/(2m)) / cos(pi/(2m)) for i = 1..m, antisymmetrized
    so that the point set is bitwise odd about 0, with x_1 = -1 and
    x_m = +1 clamped exactly.
    """
    if m < 2:
        raise InvalidInputError("need at least 2 observation points")
    i = np.arange(1, m + 1)
    raw = -np.cos((2 * i - 1) * np.pi / (2 * m)) / np.cos(np.pi / (2 * m))
    pts = 0.5 * (raw - raw[::-1])
    pts[0], pts[-1] = -1.0, 1.0
    return pts


def true_state(x):
    """Manufactured truth: sin(pi x)/pi^2 + sin(4 pi x)/(4 pi^2)."""
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * x) / np.pi**2 + np.sin(4 * np.pi * x) / (4 * np.pi**2)


def true_source(x):
    """Source producing :func:`true_state` under -u'' = f."""
    x = np.asarray(x, dtype=float)
    return np.sin(np.pi * x) + 4 * np.sin(4 * np.pi * x)


def bk_source(x):
    """Deliberately incomplete source used by the best-knowledge model."""
    x = np.asarray(x, dtype=float)
    return 4 * np.sin(4 * np.pi * x)


@dataclass(frozen=True)
class BkModel:
    """Best-knowledge Poisson model -u'' = f with Dirichlet data."""

    space: FeSpace
    source_coeffs: np.ndarray
    load: np.ndarray
    b_left: float
    b_right: float


def make_bk_model(space: FeSpace, source, b_left: float = 0.0, b_right: float = 0.0) -> BkModel:
    """Build a :class:`BkModel`; ``source`` is a callable or a nodal vector."""
    if callable(source):
        source_coeffs = np.asarray(source(space.mesh.nodes), dtype=float)
    else:
        source_coeffs = np.asarray(source, dtype=float)
    if source_coeffs.shape != (space.n_dof,):
        raise InvalidInputError("source vector length must equal n_dof")
    if not (np.isfinite(b_left) and np.isfinite(b_right)):
        raise InvalidInputError("boundary data must be finite")
    load = space.mass @ source_coeffs
    return BkModel(space=space, source_coeffs=source_coeffs, load=load,
                   b_left=float(b_left), b_right=float(b_right))


def solve_bk(model: BkModel, points) -> tuple[Field, np.ndarray]:
    """Solve the best-knowledge model and read off outputs at ``points``.

    The points must be mesh nodes, so each output is an exact nodal value.
    """
    u = solve_dirichlet(model.space, model.load, model.b_left, model.b_right)
    idx = [node_index(model.space.mesh, p) for p in np.atleast_1d(points)]
    return u, u.coeffs[np.asarray(idx, dtype=int)]


@dataclass(frozen=True)
class ObservationSet:
    """Point observations d_i at strictly increasing locations."""

    points: np.ndarray
    data: np.ndarray
    noise_sigma: float
    rng_seed: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "data", data)
        if not np.all(np.diff(pts) > 0):
            raise InvalidInputError("observation points must be strictly increasing")
        if data.shape != pts.shape or not np.all(np.isfinite(data)):
            raise InvalidInputError("observation data must be finite, one per point")


def synthesize_observations(points, noise_sigma: float = 0.0, rng_seed: int = 0) -> ObservationSet:
    """Sample d_i = true_state(x_i) + sigma * xi_i with a seeded generator."""
    if noise_sigma < 0:
        raise InvalidInputError("noise_sigma must be nonnegative")
    pts = np.asarray(points, dtype=float)
    data = true_state(pts)
    if noise_sigma > 0:
        rng = np.random.default_rng(rng_seed)
        data = data + noise_sigma * rng.standard_normal(len(pts))
    return ObservationSet(points=pts, data=data, noise_sigma=float(noise_sigma),
                          rng_seed=int(rng_seed))


@dataclass(frozen=True)
class AdjointSet:
    """Adjoint states, one per interior observation point."""

    fields: tuple
    points: tuple

    def __len__(self) -> int:
        return len(self.fields)

    @property
    def matrix(self) -> np.ndarray:
        """Coefficient vectors stacked as columns (n_dof x n_adjoints)."""
        if not self.fields:
            return np.zeros((0, 0))
        return np.column_stack([f.coeffs for f in self.fields])


def solve_adjoints(space: FeSpace, interior_points) -> AdjointSet:
    """Solve a(v, phi_i) = -v(x_i) for each interior observation point.

    Each right-hand side is the negated unit coordinate vector of the
    point's node (the Dirac functional on the nodal basis); the adjoints
    carry homogeneous Dirichlet values.
    """
    pts = np.atleast_1d(np.asarray(interior_points, dtype=float))
    idx = []
    for p in pts:
        k = node_index(space.mesh, p)
        if k == 0 or k == space.n_dof - 1:
            raise InvalidInputError("adjoint points must be interior nodes")
        idx.append(k)
    if not idx:
        return AdjointSet(fields=(), points=())
    ii = space.interior_dofs
    rhs = np.zeros((len(ii), len(idx)))
    for j, k in enumerate(idx):
        rhs[k - 1, j] = -1.0
    sol = solve_chol(space.stiffness_interior_chol, rhs)
    fields = []
    for j in range(len(idx)):
        coeffs = np.zeros(space.n_dof)
        coeffs[ii] = sol[:, j]
        fields.append(Field(space=space, coeffs=coeffs))
    return AdjointSet(fields=tuple(fields), points=tuple(float(p) for p in pts))
