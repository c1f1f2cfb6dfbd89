"""Poincare-ball geometry at the origin.

Convention: the ball has curvature ``-c`` with ``c > 0`` and radius ``1/sqrt(c)``.
Scalars are handled as 1-d vectors.
"""
import numpy as np

from .exceptions import DomainError, InvalidInputError

BALL_EPS = 1e-9
ZERO_NORM = 1e-12


def _as_vector(v):
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if v.ndim != 1:
        raise InvalidInputError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("vector contains non-finite entries")
    return v


def check_curvature(c):
    c = float(c)
    if not np.isfinite(c) or c <= 0:
        raise InvalidInputError(f"curvature must be positive and finite, got {c}")
    return c


def validate_in_ball(v, c=1.0):
    """True iff ``sqrt(c) * |v| < 1 - BALL_EPS``."""
    v = _as_vector(v)
    c = check_curvature(c)
    return bool(np.sqrt(c) * np.linalg.norm(v) < 1.0 - BALL_EPS)


def _require_in_ball(v, c):
    if not validate_in_ball(v, c):
        raise DomainError(
            f"point with norm {np.linalg.norm(v):.17g} is not inside the ball of radius {1 / np.sqrt(c):.17g}"
        )


def metric_factor(v, c=1.0):
    """Conformal factor ``(2 / (1 - c|v|^2))^2`` of the ball metric."""
    v = _as_vector(v)
    c = check_curvature(c)
    _require_in_ball(v, c)
    kappa = -c
    return (2.0 / (1.0 + kappa * float(v @ v))) ** 2


def exp_map_origin(v, c=1.0):
    """Map a tangent vector at the origin into the ball."""
    v = _as_vector(v)
    c = check_curvature(c)
    norm = np.linalg.norm(v)
    if norm < ZERO_NORM:
        return np.zeros_like(v)
    sc_norm = np.sqrt(c) * norm
    y = np.tanh(sc_norm) * v / sc_norm
    # tanh saturates to 1.0 for large inputs; pull back inside the guard band
    limit = (1.0 - 2 * BALL_EPS) / np.sqrt(c)
    y_norm = np.linalg.norm(y)
    if y_norm >= limit:
        y = y * (limit / y_norm)
    return y


def exp_map_origin_rows(X, c=1.0):
    """Row-wise :func:`exp_map_origin` for a 2-d array."""
    X = np.asarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError("matrix contains non-finite entries")
    c = check_curvature(c)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    sc = np.sqrt(c) * norms
    safe = np.where(norms < ZERO_NORM, 1.0, sc)
    scale = np.where(norms < ZERO_NORM, 0.0, np.tanh(safe) / safe)
    Y = X * scale
    limit = (1.0 - 2 * BALL_EPS) / np.sqrt(c)
    y_norms = np.linalg.norm(Y, axis=1, keepdims=True)
    over = y_norms >= limit
    if np.any(over):
        Y = np.where(over, Y * (limit / np.where(over, y_norms, 1.0)), Y)
    return Y


def log_map_origin(y, c=1.0):
    """Inverse of :func:`exp_map_origin` on the ball interior."""
    y = _as_vector(y)
    c = check_curvature(c)
    _require_in_ball(y, c)
    norm = np.linalg.norm(y)
    if norm < ZERO_NORM:
        return np.zeros_like(y)
    sc_norm = np.sqrt(c) * norm
    return np.arctanh(sc_norm) * y / sc_norm
