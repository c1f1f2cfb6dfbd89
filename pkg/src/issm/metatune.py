"""First-order meta tuning of the selection agent.

Each meta-iteration splits an initial labeled set into a virtual-train and a
virtual-test part, adapts a copy of the meta parameters on a virtual-train
episode, rolls the adapted agent out for ``horizon_h`` steps on the
virtual-test part, and moves the meta parameters against the gradient of
the summed TD error measured at the adapted parameters.
"""
from dataclasses import dataclass

import numpy as np
from sklearn.base import clone

from .agent import ISSMAgent, Transition
from .exceptions import ConfigError, InsufficientDataError, InvalidInputError, ShapeError
from .nncore import Adam


@dataclass(frozen=True)
class MetaConfig:
    horizon_h: int = 10
    meta_lr_beta: float = 1e-3
    inner_steps: int = 5
    inner_lr: float = 1e-3
    split_fraction: float = 0.3

    def __post_init__(self):
        if self.horizon_h < 1 or self.inner_steps < 1:
            raise ConfigError("horizon_h and inner_steps must be >= 1")
        if self.meta_lr_beta < 0 or self.inner_lr < 0:
            raise ConfigError("learning rates must be non-negative")
        if not 0 < self.split_fraction < 1:
            raise ConfigError("split_fraction must lie in (0, 1)")


def split_virtual(ids, labels, cfg, seed=0):
    """Seeded disjoint (virtual_train, virtual_test) partition of ``ids``.

    Stratified by class when every class has at least two members.
    """
    ids = np.asarray(ids)
    labels = np.asarray(labels)
    n = len(ids)
    n_train = int(round(cfg.split_fraction * n))
    if n < 2 or n_train < 1 or n_train > n - 1:
        raise InsufficientDataError(f"cannot split {n} samples with fraction {cfg.split_fraction}")
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() >= 2:
        train = []
        quota = {}
        # largest-remainder allocation of the train share across classes
        raw = counts * n_train / n
        base = np.floor(raw).astype(int)
        extra = n_train - base.sum()
        order = np.lexsort((classes, -(raw - base)))
        base[order[:extra]] += 1
        for c, k in zip(classes, base):
            quota[c] = min(int(k), int(counts[classes == c][0]) - 1)
        for c in classes:
            members = np.flatnonzero(labels == c)
            train.extend(rng.permutation(members)[:quota[c]].tolist())
        train = np.array(sorted(train))
    else:
        train = np.sort(rng.permutation(n)[:n_train])
    test = np.setdiff1d(np.arange(n), train)
    return ids[train], ids[test]


def _agent_from(template, params):
    agent = clone(template).initialize()
    agent.online_.set_params([p.copy() for p in params])
    agent.target_ = agent.online_.copy()
    return agent


class MetaParams:
    """Meta initialization ``theta_mt`` plus the last adapted copy ``theta_mt_star``."""

    def __init__(self, template, params=None):
        self.template = template
        if params is None:
            params = clone(template).initialize().online_.params()
        self.theta_mt = [p.copy() for p in params]
        self.theta_mt_star = None

    def agent(self, which="meta"):
        params = self.theta_mt if which == "meta" else self.theta_mt_star
        if params is None:
            raise InvalidInputError("no adapted parameters yet")
        return _agent_from(self.template, params)


def inner_update(meta, episode, cfg):
    """Adapt a copy of ``theta_mt`` with ``cfg.inner_steps`` TD updates on ``episode``.

    Each step is one :meth:`ISSMAgent.td_update` over the whole episode with a
    fresh Adam optimizer at ``cfg.inner_lr``. ``theta_mt`` is never touched.
    """
    if not episode:
        raise InsufficientDataError("virtual-train episode is empty")
    agent = meta.agent("meta")
    agent.optimizer_ = Adam(lr=cfg.inner_lr)
    agent.sync_period = max(agent.sync_period, cfg.inner_steps + 1)
    for _ in range(cfg.inner_steps):
        agent.td_update(list(episode))
    meta.theta_mt_star = [p.copy() for p in agent.online_.params()]
    return meta.theta_mt_star


def _td_terms(net, episode, gamma, state_dim):
    """Per-step prediction and bootstrap target under a single parameter set."""
    X = np.vstack([np.concatenate([tr.state, tr.action]) for tr in episode])
    next_inputs = []
    for t, tr in enumerate(episode):
        if tr.terminal:
            next_inputs.append(None)
        elif t + 1 < len(episode):
            next_inputs.append(np.concatenate([episode[t + 1].state, episode[t + 1].action]))
        else:
            # trajectory ends mid-episode: bootstrap with the greedy next action
            cands = np.hstack([np.broadcast_to(tr.next_state, (len(tr.next_actions), len(tr.next_state))),
                               tr.next_actions])
            q_next = net.copy().forward(cands)[:, 0]
            next_inputs.append(cands[int(np.argmax(q_next))])
    boot = np.zeros(len(episode))
    live = [t for t, x in enumerate(next_inputs) if x is not None]
    if live:
        boot[live] = net.copy().forward(np.vstack([next_inputs[t] for t in live]))[:, 0]
    rewards = np.array([tr.reward for tr in episode])
    targets = rewards + gamma * boot
    q = net.forward(X)[:, 0]
    return q, targets


def meta_loss(theta_star, episode, horizon_h, template, return_grad=False):
    """Summed squared TD error over an ``horizon_h``-step trajectory under ``theta_star``.

    Both Q terms use the same parameters; the bootstrap term is held constant
    for the gradient.
    """
    if len(episode) != horizon_h:
        raise InvalidInputError(f"episode has {len(episode)} transitions, expected {horizon_h}")
    agent = _agent_from(template, theta_star)
    net = agent.online_
    q, targets = _td_terms(net, episode, agent.gamma, agent.state_dim)
    err = q - targets
    loss = float(np.sum(err ** 2))
    if not return_grad:
        return loss
    grads = net.backward((2.0 * err)[:, None])
    return loss, grads


def meta_update(meta, grads, beta):
    """``theta_mt <- theta_mt - beta * grad`` with the gradient taken at ``theta_mt_star``."""
    if len(grads) != len(meta.theta_mt):
        raise ShapeError("gradient list does not match the meta parameters")
    for p, g in zip(meta.theta_mt, grads):
        if np.shape(g) != p.shape:
            raise ShapeError(f"gradient shape {np.shape(g)} does not match {p.shape}")
    if beta == 0:
        return meta.theta_mt
    meta.theta_mt = [p - beta * g for p, g in zip(meta.theta_mt, grads)]
    return meta.theta_mt


def td_loss(params, episode, template):
    """Mean squared TD error of ``episode`` under ``params`` (same-network bootstrap)."""
    agent = _agent_from(template, params)
    q, targets = _td_terms(agent.online_, episode, agent.gamma, agent.state_dim)
    return float(np.mean((q - targets) ** 2))


def steps_to_threshold(params, episode, template, threshold, lr, max_steps=1000, eval_episode=None):
    """Full-episode TD updates on ``episode`` from ``params`` until the loss is <= ``threshold``.

    Without ``eval_episode`` the loss is the mean squared Double DQN error that
    :meth:`ISSMAgent.td_update` minimizes, with the target network refreshed
    after every step. With it, the loss is :func:`td_loss` on ``eval_episode``,
    i.e. how well the adapted parameters carry over to unseen transitions.
    Returns the number of updates taken, or ``max_steps`` when the threshold is
    never reached.
    """
    agent = _agent_from(template, params)
    agent.optimizer_ = Adam(lr=lr)
    agent.sync_period = max_steps + 2
    for step in range(max_steps):
        if eval_episode is not None and td_loss(agent.online_.params(), eval_episode, template) <= threshold:
            return step
        train_loss = agent.td_update(list(episode))
        if eval_episode is None and train_loss <= threshold:
            return step
        agent.sync_target()
    return max_steps


class MetaTuner:
    """Runs meta-iterations over a task source.

    ``task`` must provide ``virtual_train_episode(agent, iteration)`` and
    ``virtual_test_episode(agent, horizon, iteration)``, each returning a list
    of :class:`Transition`.
    """

    def __init__(self, template, cfg=None, init_params=None):
        self.cfg = cfg or MetaConfig()
        self.meta = MetaParams(template, init_params)
        self.losses = []

    def step(self, task, iteration):
        cfg = self.cfg
        train_ep = task.virtual_train_episode(self.meta.agent("meta"), iteration)
        theta_star = inner_update(self.meta, train_ep, cfg)
        adapted = _agent_from(self.meta.template, theta_star)
        test_ep = task.virtual_test_episode(adapted, cfg.horizon_h, iteration)
        loss, grads = meta_loss(theta_star, test_ep, cfg.horizon_h, self.meta.template, return_grad=True)
        meta_update(self.meta, grads, cfg.meta_lr_beta)
        self.losses.append(loss)
        return loss

    def run(self, task, n_iterations):
        for it in range(n_iterations):
            self.step(task, it)
        return self.meta


class PoolMetaTask:
    """Meta-learning tasks carved out of an initial labeled set of a dataset.

    Each iteration re-splits ``initial_ids`` into virtual-train and
    virtual-test parts; both parts are turned into small active-learning
    pools (labeled seed, reward set, unlabeled remainder).
    """

    def __init__(self, dataset, initial_ids, cfg, batch_n=5, labeled_fraction=0.2,
                 reward_fraction=0.25, env_kwargs=None, max_next_candidates=None, seed=0):
        self.dataset = dataset
        self.initial_ids = np.asarray(initial_ids)
        self.cfg = cfg
        self.batch_n = batch_n
        self.labeled_fraction = labeled_fraction
        self.reward_fraction = reward_fraction
        self.env_kwargs = dict(env_kwargs or {})
        self.max_next_candidates = max_next_candidates
        self.seed = seed

    def _seed(self, iteration, stream):
        return int(np.random.SeedSequence([self.seed, iteration, stream]).generate_state(1)[0])

    def split(self, iteration):
        return split_virtual(self.initial_ids, self.dataset.labels[self.initial_ids], self.cfg,
                             seed=self._seed(iteration, 0))

    def make_env(self, ids, iteration, stream):
        from .alsim import PoolEnvironment
        from .datagen import split_pools

        sub = self.dataset.subset(ids)
        n = len(ids)
        n_lab = max(1, int(round(self.labeled_fraction * n)))
        n_rwd = max(1, int(round(self.reward_fraction * n)))
        seed = self._seed(iteration, stream)
        lab, unl, rwd = split_pools(sub, n_lab, n_rwd, seed=seed)
        lab, unl, rwd = (np.asarray(ids)[x] for x in (lab, unl, rwd))
        kwargs = dict(self.env_kwargs)
        kwargs.setdefault("seed", seed)
        return PoolEnvironment(self.dataset, lab, unl, rwd, budget=max(1, len(unl)), **kwargs)

    def virtual_train_episode(self, agent, iteration):
        from .alsim import rollout

        vtr, _ = self.split(iteration)
        env = self.make_env(vtr, iteration, 1)
        return rollout(env, agent, self.batch_n, explore=False,
                       max_next_candidates=self.max_next_candidates, seed=self._seed(iteration, 3))

    def virtual_test_episode(self, agent, horizon, iteration):
        from .alsim import rollout

        _, vte = self.split(iteration)
        env = self.make_env(vte, iteration, 2)
        episode = rollout(env, agent, self.batch_n, explore=False, max_steps=horizon,
                          max_next_candidates=self.max_next_candidates, seed=self._seed(iteration, 4))
        if len(episode) != horizon:
            raise InsufficientDataError(
                f"virtual-test pool supports only {len(episode)} steps, horizon is {horizon}")
        return episode
