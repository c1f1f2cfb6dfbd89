"""Pool-based active-learning environment, episode driver and baseline selectors."""
import copy
import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone

from .agent import ISSMAgent, Transition
from .discrepancy import KernelConfig
from .exceptions import InsufficientDataError, InvalidInputError, ProtocolError
from .featurize import build_actions, build_state, marginal_index_rows
from .recognizer import SkeletonRecognizer, evaluate_accuracy

log = logging.getLogger(__name__)


class PoolEnvironment:
    """Labeled / unlabeled / reward pools over a dataset plus the current recognizer.

    Sample ids are row indices into ``dataset``. ``budget`` counts labels
    acquired from the unlabeled pool; the initial labeled and reward sets are
    not charged against it. ``eval_set``, when given, is a held-out dataset
    used only for reporting.
    """

    def __init__(self, dataset, labeled, unlabeled, reward, budget, recognizer=None,
                 kernel=None, curvature=1.0, n_bins=10, seed=0, eval_set=None):
        self.dataset = dataset
        self.labeled = sorted(int(i) for i in labeled)
        self.unlabeled = sorted(int(i) for i in unlabeled)
        self.reward_set = sorted(int(i) for i in reward)
        sets = [set(self.labeled), set(self.unlabeled), set(self.reward_set)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ProtocolError("labeled, unlabeled and reward sets must be disjoint")
        if not self.labeled:
            raise InsufficientDataError("initial labeled set is empty")
        if not self.reward_set:
            raise InsufficientDataError("reward set is empty")
        if budget < 1:
            raise InvalidInputError("budget must be >= 1")
        if np.any(dataset.labels[self.labeled + self.reward_set] < 0):
            raise InvalidInputError("labeled and reward samples need labels")
        self.budget = int(budget)
        self.spent = 0
        self.template = recognizer if recognizer is not None else SkeletonRecognizer(random_state=seed)
        if getattr(self.template, "n_classes", None) is None:
            self.template = clone(self.template).set_params(n_classes=dataset.n_classes)
        self.kernel = kernel or KernelConfig()
        self.curvature = curvature
        self.n_bins = n_bins
        self.seed = seed
        self.eval_set = eval_set
        self.training_audit = []
        self.last_accuracy = None
        self._retrain()
        self.initial_accuracy = self.last_accuracy

    def _retrain(self):
        idx = np.array(self.labeled)
        self.training_audit.append(tuple(self.labeled))
        self.recognizer = clone(self.template).fit(self.dataset.X[idx], self.dataset.labels[idx])
        pool = np.array(self.labeled + self.unlabeled)
        probs, emb = self.recognizer.proba_and_embed(self.dataset.X[pool])
        self._probs = dict(zip(pool.tolist(), probs))
        self._emb = dict(zip(pool.tolist(), emb))
        self._candidates = None
        rw = np.array(self.reward_set)
        self.last_accuracy = evaluate_accuracy(self.recognizer, self.dataset.X[rw], self.dataset.labels[rw])

    @property
    def terminal(self):
        return self.spent >= self.budget or not self.unlabeled

    def embeddings(self, ids):
        return np.array([self._emb[i] for i in ids]).reshape(len(ids), -1)

    def probabilities(self, ids):
        return np.array([self._probs[i] for i in ids]).reshape(len(ids), -1)

    def state(self):
        su = self.unlabeled if self.unlabeled else self.labeled
        return build_state(self.embeddings(self.labeled), self.embeddings(su), self.spent,
                           self.budget, self.kernel, self.curvature, seed=self.seed)

    def candidates(self):
        """Action features for every unlabeled sample, in ascending id order."""
        if not self.unlabeled:
            return []
        if self._candidates is None:
            ids = self.unlabeled
            emb = self.embeddings(ids)
            self._candidates = build_actions(self.probabilities(ids), emb, emb, ids, self.n_bins, self.curvature)
        return list(self._candidates)

    def batch_size_for(self, batch_n):
        return min(batch_n, self.budget - self.spent, len(self.unlabeled))

    def step(self, selected_ids, batch_n):
        """Label ``selected_ids``, retrain, and return ``(reward, next_state, terminal)``."""
        selected = [int(i) for i in selected_ids]
        expected = self.batch_size_for(batch_n)
        if not selected and expected > 0:
            raise ProtocolError("empty selection while budget remains")
        if len(set(selected)) != len(selected):
            raise ProtocolError("duplicate ids in selection")
        pool = set(self.unlabeled)
        for i in selected:
            if i not in pool:
                raise ProtocolError(f"id {i} is not in the unlabeled pool")
        if len(selected) != expected:
            raise ProtocolError(f"expected {expected} selections, got {len(selected)}")
        chosen = set(selected)
        self.labeled = sorted(self.labeled + selected)
        self.unlabeled = [i for i in self.unlabeled if i not in chosen]
        self.spent += len(selected)
        before = self.last_accuracy
        self._retrain()
        return self.last_accuracy - before, self.state(), self.terminal

    def test_accuracy(self):
        if self.eval_set is None:
            return self.last_accuracy
        return evaluate_accuracy(self.recognizer, self.eval_set.X, self.eval_set.labels)

    def copy(self):
        return copy.deepcopy(self)


# -- baseline selectors ----------------------------------------------------

def uniform_select(env, n, seed=0):
    rng = np.random.default_rng(seed)
    pool = np.array(env.unlabeled)
    return sorted(rng.choice(pool, size=n, replace=False).tolist())


def top_margin(mi, ids, n):
    order = np.lexsort((np.asarray(ids), -np.asarray(mi)))
    return [np.asarray(ids)[i].item() for i in order[:n]]


def margin_select(env, n):
    ids = env.unlabeled
    return top_margin(marginal_index_rows(env.probabilities(ids)), ids, n)


def kcenter_greedy(unlabeled_embs, labeled_embs, ids, n, seed=0):
    """Greedy k-center: repeatedly add the point farthest from all current centers."""
    U = np.asarray(unlabeled_embs, dtype=np.float64)
    ids = np.asarray(ids)
    if U.shape[0] == 0:
        raise InsufficientDataError("no unlabeled points")
    picked = []
    if labeled_embs is not None and len(labeled_embs):
        L = np.asarray(labeled_embs, dtype=np.float64)
        d2 = ((U[:, None, :] - L[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    else:
        first = int(np.random.default_rng(seed).integers(U.shape[0]))
        picked.append(first)
        d2 = ((U - U[first]) ** 2).sum(axis=1)
    mins = np.sqrt(d2)
    taken = np.zeros(U.shape[0], dtype=bool)
    taken[picked] = True
    while len(picked) < n:
        masked = np.where(taken, -np.inf, mins)
        best = np.flatnonzero(masked == masked.max())
        choice = best[np.argmin(ids[best])]
        picked.append(int(choice))
        taken[choice] = True
        mins = np.minimum(mins, np.sqrt(((U - U[choice]) ** 2).sum(axis=1)))
    return [ids[i].item() for i in picked]


def coreset_select(env, n, seed=0):
    ids = env.unlabeled
    return kcenter_greedy(env.embeddings(ids), env.embeddings(env.labeled), ids, n, seed)


BASELINES = ("uniform", "margin", "coreset")


# -- episodes ----------------------------------------------------------------

@dataclass
class EpisodeLog:
    method: str
    seed: int
    initial_accuracy: float
    initial_test_accuracy: float
    records: list = field(default_factory=list)

    @property
    def rewards(self):
        return [r["reward"] for r in self.records]

    @property
    def final_accuracy(self):
        return self.records[-1]["accuracy"] if self.records else self.initial_accuracy

    @property
    def final_test_accuracy(self):
        return self.records[-1]["test_accuracy"] if self.records else self.initial_test_accuracy

    def test_curve(self):
        return [self.initial_test_accuracy] + [r["test_accuracy"] for r in self.records]

    def auc(self):
        """Normalized trapezoidal area under the held-out accuracy curve."""
        curve = np.array(self.test_curve())
        if len(curve) < 2:
            return float(curve[0])
        return float(np.sum((curve[1:] + curve[:-1]) / 2.0) / (len(curve) - 1))

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "spent", "mmd", "reward", "accuracy", "selected_ids", "millis", "test_accuracy"])
        for r in self.records:
            writer.writerow([
                r["iter"], r["spent"], repr(r["mmd"]), repr(r["reward"]), repr(r["accuracy"]),
                ";".join(str(i) for i in r["selected_ids"]),
                "" if r["millis"] is None else r["millis"], repr(r["test_accuracy"]),
            ])
        return buf.getvalue()

    def summary(self):
        return {
            "method": self.method,
            "seed": self.seed,
            "iterations": len(self.records),
            "initial_accuracy": self.initial_accuracy,
            "final_accuracy": self.final_test_accuracy,
            "final_reward_set_accuracy": self.final_accuracy,
            "auc_of_accuracy_curve": self.auc(),
        }

    def write(self, csv_path, json_path=None):
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv())
        if json_path is not None:
            with open(json_path, "w") as fh:
                json.dump(self.summary(), fh, indent=2, sort_keys=True)


def run_episode(env, agent=None, mode="frozen", batch_n=20, method=None, seed=0,
                record_timing=False, updates_per_step=10, transitions="first",
                max_next_candidates=None):
    """Drive ``env`` to termination and log every iteration.

    ``agent`` is an :class:`ISSMAgent` or a baseline name. In ``train`` mode
    the agent explores, stores one transition per iteration (or one per
    selected sample with ``transitions="all"``) and runs
    ``updates_per_step`` TD updates after each environment step. Stored
    next-state candidates are a seeded subsample of at most
    ``max_next_candidates`` rows when that is set. ``frozen`` mode is greedy
    and leaves the agent untouched.
    """
    if mode not in ("train", "frozen"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if transitions not in ("first", "all"):
        raise InvalidInputError(f"unknown transitions mode {transitions!r}")
    if isinstance(agent, str):
        method = method or agent
    else:
        method = method or "issm"
    if mode == "train" and not isinstance(agent, ISSMAgent):
        raise InvalidInputError("train mode needs an ISSMAgent")
    episode = EpisodeLog(method, seed, env.last_accuracy, env.test_accuracy())
    rng = np.random.default_rng(seed)
    state = env.state()
    it = 0
    while not env.terminal:
        start = time.perf_counter()
        n = env.batch_size_for(batch_n)
        actions = None
        if isinstance(agent, ISSMAgent):
            actions = env.candidates()
            selected = agent.select_batch(state, actions, n, explore=(mode == "train"))
        elif agent == "uniform":
            selected = uniform_select(env, n, seed=int(rng.integers(2**31)))
        elif agent == "margin":
            selected = margin_select(env, n)
        elif agent == "coreset":
            selected = coreset_select(env, n, seed=int(rng.integers(2**31)))
        else:
            raise InvalidInputError(f"unknown selector {agent!r}")
        prev_state = state
        reward, state, terminal = env.step(selected, batch_n)
        if mode == "train":
            by_id = {a.candidate_id: a for a in actions}
            next_actions = [] if terminal else env.candidates()
            if max_next_candidates and len(next_actions) > max_next_candidates:
                keep = np.sort(rng.choice(len(next_actions), max_next_candidates, replace=False))
                next_actions = [next_actions[i] for i in keep]
            if next_actions:
                next_actions = np.vstack([a.vector() for a in next_actions])
            picks = selected if transitions == "all" else selected[:1]
            for cid in picks:
                agent.remember(Transition(prev_state, by_id[cid], reward, state, next_actions, terminal))
            agent.learn(updates_per_step)
        it += 1
        episode.records.append({
            "iter": it,
            "spent": env.spent,
            "mmd": prev_state.mmd_raw,
            "reward": reward,
            "accuracy": env.last_accuracy,
            "selected_ids": list(selected),
            "millis": round((time.perf_counter() - start) * 1000) if record_timing else None,
            "test_accuracy": env.test_accuracy(),
        })
    return episode


def rollout(env, agent, batch_n, explore=False, max_steps=None, max_next_candidates=None, seed=0):
    """Collect one transition per iteration without updating ``agent``."""
    rng = np.random.default_rng(seed)
    out = []
    state = env.state()
    while not env.terminal and (max_steps is None or len(out) < max_steps):
        actions = env.candidates()
        n = env.batch_size_for(batch_n)
        selected = agent.select_batch(state, actions, n, explore=explore)
        by_id = {a.candidate_id: a for a in actions}
        prev = state
        reward, state, terminal = env.step(selected, batch_n)
        nxt = [] if terminal else env.candidates()
        if max_next_candidates and len(nxt) > max_next_candidates:
            keep = np.sort(rng.choice(len(nxt), max_next_candidates, replace=False))
            nxt = [nxt[i] for i in keep]
        out.append(Transition(prev, by_id[selected[0]], reward, state, nxt, terminal))
    return out
