"""Q-network sample selector trained with Double DQN."""
import json
from collections import deque
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import InsufficientDataError, InvalidInputError, ShapeError
from .nncore import Adam, DenseNet

CHECKPOINT_TAG = "issm_agent_v1"


def _vec(x):
    if hasattr(x, "vector"):
        return x.vector()
    return np.asarray(x, dtype=np.float64).ravel()


def _mat(xs, width=None):
    if isinstance(xs, np.ndarray) and xs.ndim == 2:
        return xs.astype(np.float64, copy=False)
    rows = [_vec(a) for a in xs]
    if not rows:
        return np.zeros((0, width or 0))
    return np.vstack(rows)


@dataclass
class Transition:
    """One ``(s, a, r, s')`` tuple plus the candidate actions available in ``s'``.

    States and actions may be given as feature objects or raw vectors; they
    are stored as float arrays.
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    next_actions: np.ndarray
    terminal: bool

    def __post_init__(self):
        self.state = _vec(self.state)
        self.action = _vec(self.action)
        self.next_state = _vec(self.next_state)
        self.next_actions = _mat(self.next_actions, len(self.action))
        self.reward = float(self.reward)
        self.terminal = bool(self.terminal)
        if not self.terminal and self.next_actions.shape[0] == 0:
            raise InvalidInputError("non-terminal transition needs at least one next candidate")


class ReplayBuffer:
    """FIFO ring of transitions with seeded uniform sampling."""

    def __init__(self, capacity=10_000, seed=0):
        if capacity < 1:
            raise InvalidInputError("capacity must be >= 1")
        self.capacity = capacity
        self.entries = deque(maxlen=capacity)
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return len(self.entries)

    def push(self, transition):
        self.entries.append(transition)

    def sample(self, k):
        if len(self.entries) == 0:
            raise InsufficientDataError("cannot sample from an empty replay buffer")
        if k > len(self.entries):
            raise InsufficientDataError(f"requested {k} transitions, buffer holds {len(self.entries)}")
        idx = self.rng.choice(len(self.entries), size=k, replace=False)
        return [self.entries[i] for i in idx]


def greedy_order(q, ids):
    """Indices sorting by descending ``q``, ties broken by ascending id."""
    return np.lexsort((np.asarray(ids), -np.asarray(q)))


class ISSMAgent(BaseEstimator):
    """Scores state-action pairs with an MLP and picks the top candidates.

    The online network is trained on the squared TD error against a Double
    DQN target: the online network chooses the bootstrap action, the target
    network values it. The target is refreshed from the online weights every
    ``sync_period`` updates.
    """

    def __init__(self, state_dim=2, action_dim=11, hidden=(64, 32), gamma=0.9,
                 learning_rate=1e-4, eps_start=1.0, eps_end=0.05, eps_decay_steps=100,
                 sync_period=50, replay_capacity=10_000, batch_size=32, random_state=0):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = hidden
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_steps = eps_decay_steps
        self.sync_period = sync_period
        self.replay_capacity = replay_capacity
        self.batch_size = batch_size
        self.random_state = random_state

    # -- setup -----------------------------------------------------------
    def initialize(self):
        """Build fresh networks, optimizer and replay buffer."""
        if not 0 <= self.gamma < 1:
            raise InvalidInputError("gamma must lie in [0, 1)")
        if self.sync_period < 1:
            raise InvalidInputError("sync_period must be >= 1")
        seeds = np.random.SeedSequence(self.random_state).spawn(3)
        sizes = [self.state_dim + self.action_dim, *self.hidden, 1]
        self.online_ = DenseNet(sizes, seed=int(seeds[0].generate_state(1)[0]))
        self.target_ = self.online_.copy()
        self.optimizer_ = Adam(lr=self.learning_rate)
        self.buffer_ = ReplayBuffer(self.replay_capacity, seed=int(seeds[1].generate_state(1)[0]))
        self.explore_rng_ = np.random.default_rng(seeds[2])
        self.n_updates_ = 0
        self.n_select_steps_ = 0
        return self

    def _ensure(self):
        if not hasattr(self, "online_"):
            self.initialize()

    def sync_target(self):
        self._ensure()
        self.target_ = self.online_.copy()

    def epsilon(self, step=None):
        step = self.n_select_steps_ if step is None else step
        if self.eps_decay_steps <= 0:
            return self.eps_end
        frac = min(1.0, step / self.eps_decay_steps)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    # -- scoring ---------------------------------------------------------
    def _net(self, which):
        self._ensure()
        if which == "online":
            return self.online_
        if which == "target":
            return self.target_
        raise InvalidInputError(f"unknown network {which!r}")

    def _inputs(self, state, actions):
        s = _vec(state)
        A = _mat(actions, self.action_dim)
        if s.shape[0] != self.state_dim or A.shape[1] != self.action_dim:
            raise ShapeError(
                f"expected state dim {self.state_dim} and action dim {self.action_dim}, "
                f"got {s.shape[0]} and {A.shape[1]}")
        return np.hstack([np.broadcast_to(s, (A.shape[0], s.shape[0])), A])

    def q_values(self, state, actions, which="online"):
        """Q for one state paired with each row of ``actions``."""
        X = self._inputs(state, actions)
        return self._net(which).forward(X)[:, 0]

    def q_value(self, state, action, which="online"):
        return float(self.q_values(state, [_vec(action)], which)[0])

    def select_batch(self, state, candidates, n, explore=False, ids=None):
        """Ids of ``n`` distinct candidates.

        Greedy picks take the highest online Q (lowest id on ties). With
        ``explore``, each slot is instead a uniform draw from the remaining
        candidates with probability epsilon.
        """
        if len(candidates) == 0:
            raise InsufficientDataError("no candidates to select from")
        if not 1 <= n <= len(candidates):
            raise InvalidInputError(f"n={n} outside [1, {len(candidates)}]")
        if ids is None:
            ids = [a.candidate_id for a in candidates]
        ids = np.asarray(ids)
        q = self.q_values(state, candidates)
        order = list(greedy_order(q, ids))
        if not explore:
            return [ids[i].item() for i in order[:n]]
        eps = self.epsilon()
        self.n_select_steps_ += 1
        remaining = set(range(len(ids)))
        picked = []
        for _ in range(n):
            if self.explore_rng_.random() < eps:
                pool = sorted(remaining)
                choice = pool[int(self.explore_rng_.integers(len(pool)))]
            else:
                choice = next(i for i in order if i in remaining)
            remaining.discard(choice)
            picked.append(choice)
        return [ids[i].item() for i in picked]

    # -- learning --------------------------------------------------------
    def td_target(self, tr):
        """``r + gamma * Q_target(s', argmax_a Q_online(s', a))``; ``r`` if terminal."""
        if tr.terminal:
            return tr.reward
        if tr.next_actions.shape[0] == 0:
            raise InvalidInputError("non-terminal transition without next candidates")
        q_next = self.q_values(tr.next_state, tr.next_actions, "online")
        best = int(np.argmax(q_next))
        bootstrap = self.q_values(tr.next_state, tr.next_actions[best:best + 1], "target")[0]
        return tr.reward + self.gamma * float(bootstrap)

    def td_targets(self, batch):
        """Vectorized :meth:`td_target` over a batch (two network calls in total)."""
        self._ensure()
        targets = np.array([tr.reward for tr in batch])
        live = [k for k, tr in enumerate(batch) if not tr.terminal]
        if not live:
            return targets
        blocks, bounds = [], [0]
        for k in live:
            tr = batch[k]
            if tr.next_actions.shape[0] == 0:
                raise InvalidInputError("non-terminal transition without next candidates")
            blocks.append(self._inputs(tr.next_state, tr.next_actions))
            bounds.append(bounds[-1] + tr.next_actions.shape[0])
        X = np.vstack(blocks)
        q_online = self.online_.forward(X)[:, 0]
        chosen = np.array([lo + int(np.argmax(q_online[lo:hi])) for lo, hi in zip(bounds[:-1], bounds[1:])])
        bootstrap = self.target_.forward(X[chosen])[:, 0]
        targets[live] += self.gamma * bootstrap
        return targets

    def td_update(self, batch):
        """One optimizer step on the mean squared TD error; returns the pre-update loss."""
        if not batch:
            raise InsufficientDataError("empty batch")
        self._ensure()
        targets = self.td_targets(batch)
        X = np.vstack([np.concatenate([tr.state, tr.action]) for tr in batch])
        if X.shape[1] != self.state_dim + self.action_dim:
            raise ShapeError("transition feature width does not match the network")
        q = self.online_.forward(X)[:, 0]
        err = q - targets
        loss = float(np.mean(err ** 2))
        grads = self.online_.backward((2.0 * err / len(batch))[:, None])
        self.optimizer_.step(self.online_, grads)
        self.n_updates_ += 1
        if self.n_updates_ % self.sync_period == 0:
            self.sync_target()
        return loss

    def remember(self, transition):
        self._ensure()
        self.buffer_.push(transition)

    def learn(self, n_updates=1):
        """Run replayed TD updates once the buffer holds a full batch."""
        self._ensure()
        losses = []
        for _ in range(n_updates):
            if len(self.buffer_) < min(self.batch_size, self.buffer_.capacity):
                break
            losses.append(self.td_update(self.buffer_.sample(self.batch_size)))
        return losses

    def fit(self, transitions, n_updates=100):
        """Load ``transitions`` into replay and run ``n_updates`` TD updates."""
        self._ensure()
        for tr in transitions:
            self.remember(tr)
        self.learn(n_updates)
        return self

    # -- persistence -----------------------------------------------------
    def to_dict(self):
        self._ensure()
        params = self.get_params()
        params["hidden"] = list(params["hidden"])
        return {
            "format": CHECKPOINT_TAG,
            "hyperparameters": params,
            "online": self.online_.to_dict(),
            "target": self.target_.to_dict(),
            "counters": {"updates": self.n_updates_, "select_steps": self.n_select_steps_},
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != CHECKPOINT_TAG:
            raise InvalidInputError(f"unsupported agent checkpoint {data.get('format')!r}")
        params = dict(data["hyperparameters"])
        params["hidden"] = tuple(params["hidden"])
        agent = cls(**params).initialize()
        agent.online_ = DenseNet.from_dict(data["online"])
        agent.target_ = DenseNet.from_dict(data["target"])
        agent.n_updates_ = data["counters"]["updates"]
        agent.n_select_steps_ = data["counters"]["select_steps"]
        return agent

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
