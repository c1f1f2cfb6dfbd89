"""State and action features for the selection agent, projected into the Poincare ball."""
from dataclasses import dataclass

import numpy as np

from .discrepancy import KernelConfig, mmd
from .exceptions import ConfigError, InsufficientDataError, InvalidInputError, ShapeError
from .hypgeo import check_curvature, exp_map_origin, exp_map_origin_rows


@dataclass(frozen=True)
class AgentState:
    mmd_hyp: float
    budget_ratio: float
    mmd_raw: float = 0.0

    def vector(self):
        return np.array([self.mmd_hyp, self.budget_ratio])


@dataclass(frozen=True, eq=False)
class ActionFeatures:
    mi_hyp: float
    hist_hyp: np.ndarray
    candidate_id: int
    mi_raw: float = 0.0

    def vector(self):
        return np.concatenate([[self.mi_hyp], self.hist_hyp])


def _check_distribution(P):
    if P.shape[-1] < 2:
        raise ConfigError("marginal index needs at least 2 classes")
    if not np.all(np.isfinite(P)) or np.any(P < -1e-12) or np.any(np.abs(P.sum(axis=-1) - 1) > 1e-6):
        raise InvalidInputError("input is not a probability distribution")


def marginal_index(probs):
    """One minus the gap between the two largest class probabilities."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ShapeError("expected a single probability vector")
    return float(marginal_index_rows(p[None, :])[0])


def marginal_index_rows(P):
    P = np.asarray(P, dtype=np.float64)
    _check_distribution(P)
    top2 = np.sort(P, axis=1)[:, -2:]
    return np.clip(1.0 - (top2[:, 1] - top2[:, 0]), 0.0, 1.0)


def _cosine_matrix(A, B):
    na = np.linalg.norm(A, axis=1, keepdims=True)
    nb = np.linalg.norm(B, axis=1, keepdims=True)
    sims = (A / np.where(na > 0, na, 1.0)) @ (B / np.where(nb > 0, nb, 1.0)).T
    # zero-norm vectors already give 0 because their normalized rows are 0
    return np.clip(sims, -1.0, 1.0)


def similarity_histograms(cand_embs, unlabeled_embs, n_bins=10):
    """Row ``i``: normalized histogram of cos(cand_i, u) over all unlabeled ``u``.

    Bins split [-1, 1] into ``n_bins`` equal half-open intervals; the last
    bin also takes +1.
    """
    C = np.atleast_2d(np.asarray(cand_embs, dtype=np.float64))
    U = np.atleast_2d(np.asarray(unlabeled_embs, dtype=np.float64))
    if n_bins < 2:
        raise ConfigError("n_bins must be >= 2")
    if U.shape[0] == 0 or U.size == 0:
        raise InsufficientDataError("unlabeled set is empty")
    if C.shape[1] != U.shape[1]:
        raise ShapeError(f"embedding dimension mismatch: {C.shape[1]} vs {U.shape[1]}")
    sims = _cosine_matrix(C, U)
    bins = np.minimum(np.floor((sims + 1.0) * (n_bins / 2.0)).astype(np.int64), n_bins - 1)
    flat = bins + np.arange(C.shape[0])[:, None] * n_bins
    counts = np.bincount(flat.ravel(), minlength=C.shape[0] * n_bins).reshape(C.shape[0], n_bins)
    return counts / U.shape[0]


def representativeness_histogram(x_emb, unlabeled_embs, n_bins=10):
    x = np.asarray(x_emb, dtype=np.float64)
    return similarity_histograms(x[None, :], unlabeled_embs, n_bins)[0]


def build_state(sl_embs, su_embs, spent, budget, kcfg=None, c=1.0, seed=0):
    if budget < 1:
        raise ConfigError("budget must be >= 1")
    if not 0 <= spent <= budget:
        raise ConfigError(f"spent={spent} outside [0, {budget}]")
    raw = mmd(sl_embs, su_embs, kcfg or KernelConfig(), seed=seed)
    # the biased statistic can dip a hair below zero from round-off
    raw = max(raw, 0.0)
    return AgentState(float(exp_map_origin([raw], c)[0]), spent / budget, raw)


def build_actions(probs, cand_embs, unlabeled_embs, candidate_ids, n_bins=10, c=1.0):
    """Action features for many candidates at once, ordered as ``candidate_ids``."""
    c = check_curvature(c)
    mi = marginal_index_rows(probs)
    hist = similarity_histograms(cand_embs, unlabeled_embs, n_bins)
    mi_hyp = exp_map_origin_rows(mi[:, None], c)[:, 0]
    hist_hyp = exp_map_origin_rows(hist, c)
    return [
        ActionFeatures(float(mi_hyp[i]), hist_hyp[i], int(cid), float(mi[i]))
        for i, cid in enumerate(candidate_ids)
    ]


def build_action(x, ar, unlabeled_embs, n_bins=10, c=1.0, candidate_id=0):
    """Action features for a single candidate sample ``x`` under recognizer ``ar``."""
    X = np.asarray(x, dtype=np.float64)[None]
    probs, emb = ar.proba_and_embed(X)
    return build_actions(probs, emb, unlabeled_embs, [candidate_id], n_bins, c)[0]


def action_matrix(actions):
    return np.array([a.vector() for a in actions])
