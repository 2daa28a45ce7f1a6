"""Standard Gaussian-process regression baseline on pointwise data.

Uses the squared-exponential kernel and works directly on the observed
values (no PDE model).  The data mean is subtracted before training and
added back to the predictions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import chol_spd, solve_chol, symmetrize
from .errors import InvalidInputError


@dataclass(frozen=True)
class SeKernel:
    """Squared-exponential kernel with signal std zeta1 and length scale zeta2."""

    zeta: tuple

    def __post_init__(self):
        z1, z2 = (float(self.zeta[0]), float(self.zeta[1]))
        object.__setattr__(self, "zeta", (z1, z2))
        if z1 <= 0 or z2 <= 0:
            raise InvalidInputError("kernel parameters must be strictly positive")


@dataclass(frozen=True)
class SgpPosterior:
    """Predictive mean/covariance at test points plus training coefficients."""

    mean: np.ndarray
    cov: np.ndarray
    std: np.ndarray
    alpha: np.ndarray
    y_offset: float


def se_kernel(kernel: SeKernel, x: float, xp: float) -> float:
    """zeta1^2 * exp(-(x - xp)^2 / (2 zeta2^2))."""
    z1, z2 = kernel.zeta
    return float(z1**2 * np.exp(-0.5 * ((x - xp) / z2) ** 2))


def se_gram(kernel: SeKernel, xa, xb) -> np.ndarray:
    """Kernel matrix between two point sets."""
    z1, z2 = kernel.zeta
    xa = np.atleast_1d(np.asarray(xa, dtype=float))
    xb = np.atleast_1d(np.asarray(xb, dtype=float))
    return z1**2 * np.exp(-0.5 * ((xa[:, None] - xb[None, :]) / z2) ** 2)


def fit_predict(kernel: SeKernel, train_x, train_y, sigma: float, test_x) -> SgpPosterior:
    """GP regression: center the data, factor C = K + sigma^2 I, predict."""
    train_x = np.asarray(train_x, dtype=float)
    train_y = np.asarray(train_y, dtype=float)
    if train_x.shape != train_y.shape:
        raise InvalidInputError("training inputs and outputs must have equal length")
    if len(np.unique(train_x)) != len(train_x):
        raise InvalidInputError("training inputs must be distinct")
    if sigma < 0:
        raise InvalidInputError("sigma must be nonnegative")
    y_offset = float(train_y.mean())
    y0 = train_y - y_offset
    c = se_gram(kernel, train_x, train_x) + sigma**2 * np.eye(len(train_x))
    chol_c, _ = chol_spd(c, "standard-GP training covariance")
    alpha = solve_chol(chol_c, y0)
    k_star = se_gram(kernel, test_x, train_x)
    mean = k_star @ alpha + y_offset
    cov = se_gram(kernel, test_x, test_x) - k_star @ solve_chol(chol_c, k_star.T)
    cov = symmetrize(cov)
    std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return SgpPosterior(mean=mean, cov=cov, std=std, alpha=alpha, y_offset=y_offset)
