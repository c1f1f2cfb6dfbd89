"""RBF-kernel maximum mean discrepancy between two feature sets."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .exceptions import InsufficientDataError, InvalidInputError, ShapeError

MAX_ROWS = 4096
BLOCK = 512


@dataclass(frozen=True)
class KernelConfig:
    sigma: float = 1.0
    bandwidth_mode: str = "median_heuristic"

    def __post_init__(self):
        if self.bandwidth_mode not in ("fixed", "median_heuristic"):
            raise InvalidInputError(f"unknown bandwidth_mode {self.bandwidth_mode!r}")
        if self.bandwidth_mode == "fixed" and not (self.sigma > 0 and np.isfinite(self.sigma)):
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")


def _as_matrix(X, name):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-d matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


def rbf_kernel(x, y, sigma):
    """``exp(-|x - y|^2 / (2 sigma^2))`` for two vectors."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape:
        raise ShapeError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    d = x - y
    return float(np.exp(-(d @ d) / (2.0 * sigma * sigma)))


def median_bandwidth(points):
    """Median pairwise Euclidean distance over distinct unordered pairs.

    Falls back to the smallest nonzero distance when the median is zero and
    to 1 when every row is identical.
    """
    X = _as_matrix(points, "points")
    if X.shape[0] < 2:
        raise InsufficientDataError("median bandwidth needs at least 2 rows")
    d = pdist(X)
    med = float(np.median(d))
    if med > 0:
        return med
    nonzero = d[d > 0]
    if nonzero.size == 0:
        return 1.0
    return float(nonzero.min())


def _kernel_sum(A, B, sigma):
    # fixed block boundaries, reduced left to right
    total = 0.0
    gamma = 1.0 / (2.0 * sigma * sigma)
    for i in range(0, A.shape[0], BLOCK):
        a = A[i:i + BLOCK]
        for j in range(0, B.shape[0], BLOCK):
            total += float(np.exp(-gamma * cdist(a, B[j:j + BLOCK], "sqeuclidean")).sum())
    return total


def subsample_rows(X, max_rows=MAX_ROWS, seed=0):
    if X.shape[0] <= max_rows:
        return X
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(X.shape[0], size=max_rows, replace=False))
    return X[idx]


def resolve_sigma(sl, su, kcfg):
    if kcfg.bandwidth_mode == "fixed":
        return float(kcfg.sigma)
    both = np.vstack([sl, su])
    if both.shape[0] > 1024:
        both = subsample_rows(both, 1024, seed=0)
    return median_bandwidth(both)


def mmd(sl, su, kcfg=None, seed=0):
    """Biased (V-statistic) squared MMD between the rows of ``sl`` and ``su``.

    Inputs with more than 4096 rows are uniformly subsampled with ``seed``.
    """
    kcfg = kcfg or KernelConfig()
    sl = _as_matrix(sl, "sl")
    su = _as_matrix(su, "su")
    if sl.shape[1] != su.shape[1]:
        raise ShapeError(f"embedding dimension mismatch: {sl.shape[1]} vs {su.shape[1]}")
    sl = subsample_rows(sl, seed=seed)
    su = subsample_rows(su, seed=seed + 1)
    sigma = resolve_sigma(sl, su, kcfg)
    nl, nu = sl.shape[0], su.shape[0]
    kll = _kernel_sum(sl, sl, sigma) / (nl * nl)
    kuu = _kernel_sum(su, su, sigma) / (nu * nu)
    # canonical operand order keeps mmd(a, b) == mmd(b, a) bit for bit
    if (nl, sl.tobytes()) <= (nu, su.tobytes()):
        klu = _kernel_sum(sl, su, sigma) / (nl * nu)
    else:
        klu = _kernel_sum(su, sl, sigma) / (nl * nu)
    return kll + kuu - 2.0 * klu
