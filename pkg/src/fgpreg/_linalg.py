"""Dense symmetric linear-algebra helpers with a shared jitter policy."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NumericalFailureError

# Relative jitter ladder: start at 1e-12 * mean diagonal, escalate by 10x.
JITTER_LEVELS = (1e-12, 1e-11, 1e-10, 1e-9, 1e-8)


def chol_spd(mat: np.ndarray, context: str = "matrix"):
    """Cholesky-factor a symmetric matrix, adding scaled jitter if needed.

    Returns ``(factor, jitter)`` where ``factor`` is the scipy ``cho_factor``
    result and ``jitter`` is the diagonal shift that was required (0 when the
    plain factorization succeeds).  Raises :class:`NumericalFailureError`
    when the matrix stays indefinite at the largest jitter level.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size and not np.all(np.isfinite(mat)):
        raise NumericalFailureError(f"{context}: non-finite entries")
    try:
        return cho_factor(mat, lower=True), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = np.trace(mat) / max(len(mat), 1)
    eye = np.eye(len(mat))
    for level in JITTER_LEVELS:
        jitter = level * scale
        try:
            return cho_factor(mat + jitter * eye, lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalFailureError(
        f"{context}: not positive definite after jitter up to "
        f"{JITTER_LEVELS[-1]:g} * trace/n"
    )


def try_chol_spd(mat: np.ndarray):
    """Like :func:`chol_spd` but returns ``None`` instead of raising."""
    try:
        return chol_spd(mat)
    except NumericalFailureError:
        return None


def solve_chol(factor, rhs: np.ndarray) -> np.ndarray:
    """Solve with a factor produced by :func:`chol_spd`."""
    return cho_solve(factor, rhs)


def logdet_chol(factor) -> float:
    """log(det) of the factored matrix, via the Cholesky diagonal."""
    return 2.0 * float(np.sum(np.log(np.diag(factor[0]))))


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Average a nearly-symmetric matrix with its transpose."""
    return 0.5 * (mat + mat.T)
