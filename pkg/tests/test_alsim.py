from types import SimpleNamespace

import numpy as np
import pytest
from sklearn.base import BaseEstimator, ClassifierMixin

from issm.agent import ISSMAgent
from issm.alsim import (EpisodeLog, PoolEnvironment, kcenter_greedy, rollout, run_episode,
                        top_margin, uniform_select)
from issm.datagen import Dataset
from issm.exceptions import InvalidInputError, ProtocolError
from issm.recognizer import SkeletonRecognizer


class ScriptedRecognizer(ClassifierMixin, BaseEstimator):
    """Predicts class 0 for the first ``schedule[n_train]`` rows it sees, class 1 after."""

    def __init__(self, schedule=None, n_classes=None):
        self.schedule = schedule
        self.n_classes = n_classes

    def fit(self, X, y):
        self.n_train_ = len(X)
        return self

    def predict(self, X):
        k = self.schedule[self.n_train_]
        return np.where(np.arange(len(X)) < k, 0, 1)

    def proba_and_embed(self, X):
        X = np.asarray(X, dtype=float)
        return np.tile([0.5, 0.5], (len(X), 1)), X


def scripted_env(schedule, budget=10):
    n = 100
    X = np.random.default_rng(0).normal(size=(n, 2))
    ds = Dataset(ids=list(range(n)), labels=np.zeros(n, dtype=int), features=X)
    return PoolEnvironment(ds, labeled=range(10), unlabeled=range(10, 50), reward=range(50, 100),
                           budget=budget, recognizer=ScriptedRecognizer(schedule, n_classes=2))


def fast_template():
    return SkeletonRecognizer(hidden=(8,), epochs=3, random_state=0)


def small_env(dataset, pools, budget=10, holdout=None, seed=0):
    L, U, R = pools
    return PoolEnvironment(dataset, L, U, R, budget=budget, recognizer=fast_template(),
                           seed=seed, eval_set=holdout)


def small_agent():
    return ISSMAgent(hidden=(8,), batch_size=2, learning_rate=1e-3, random_state=0).initialize()


def test_reward_is_accuracy_delta():
    env = scripted_env({10: 29, 15: 31, 20: 31})
    assert env.last_accuracy == pytest.approx(0.58)
    reward, _, _ = env.step(list(range(10, 15)), 5)
    assert reward == pytest.approx(0.04, abs=1e-12)
    assert env.last_accuracy == pytest.approx(0.62)
    reward, _, terminal = env.step(list(range(15, 20)), 5)
    assert reward == 0.0 and terminal


def test_budget_ten_batch_five_two_iterations(small_dataset, small_pools):
    ep = run_episode(small_env(small_dataset, small_pools), "margin", batch_n=5)
    assert len(ep.records) == 2
    assert [r["spent"] for r in ep.records] == [5, 10]


def test_last_batch_truncated(small_dataset, small_pools):
    ep = run_episode(small_env(small_dataset, small_pools, budget=7), "uniform", batch_n=5)
    assert [len(r["selected_ids"]) for r in ep.records] == [5, 2]


def test_protocol_errors(small_dataset, small_pools):
    env = small_env(small_dataset, small_pools)
    L, U, R = small_pools
    with pytest.raises(ProtocolError):
        env.step([], 5)
    with pytest.raises(ProtocolError):
        env.step([int(U[0])] * 5, 5)
    with pytest.raises(ProtocolError):
        env.step([int(R[0])] + [int(u) for u in U[:4]], 5)
    with pytest.raises(ProtocolError):
        env.step([int(u) for u in U[:3]], 5)
    with pytest.raises(ProtocolError):
        PoolEnvironment(small_dataset, L, list(U) + [int(R[0])], R, budget=5)


def test_telescoping_and_disjointness(small_dataset, small_pools, small_holdout):
    L, U, R = small_pools
    for method in ("uniform", "margin", "coreset"):
        env = small_env(small_dataset, small_pools, budget=12, holdout=small_holdout)
        ep = run_episode(env, method, batch_n=5, seed=3)
        assert sum(ep.rewards) == pytest.approx(ep.final_accuracy - ep.initial_accuracy, abs=1e-12)
        picked = [i for r in ep.records for i in r["selected_ids"]]
        assert len(picked) == len(set(picked)) == 12
        assert set(picked) <= set(U.tolist())
        assert set(env.labeled) == set(L.tolist()) | set(picked)


def test_reward_set_never_trained_on(small_dataset, small_pools):
    env = small_env(small_dataset, small_pools, budget=10)
    run_episode(env, small_agent(), batch_n=5)
    reward = set(env.reward_set)
    assert len(env.training_audit) == 3
    assert all(not (set(ids) & reward) for ids in env.training_audit)


def test_frozen_agent_unchanged(small_dataset, small_pools):
    agent = small_agent()
    before = agent.to_dict()
    run_episode(small_env(small_dataset, small_pools), agent, mode="frozen", batch_n=5)
    after = agent.to_dict()
    assert before == after


def test_train_mode_updates(small_dataset, small_pools):
    agent = small_agent()
    before = agent.online_.flat().copy()
    run_episode(small_env(small_dataset, small_pools), agent, mode="train", batch_n=5,
                transitions="all", updates_per_step=2, max_next_candidates=10)
    assert len(agent.buffer_) == 10
    assert agent.n_updates_ > 0
    assert not np.array_equal(before, agent.online_.flat())
    with pytest.raises(InvalidInputError):
        run_episode(small_env(small_dataset, small_pools), "uniform", mode="train")


def test_deterministic_replay_from_copy(small_dataset, small_pools):
    env = small_env(small_dataset, small_pools, budget=10)
    twin = env.copy()
    a = run_episode(env, "uniform", batch_n=5, seed=9)
    b = run_episode(twin, "uniform", batch_n=5, seed=9)
    assert a.to_csv() == b.to_csv()


def test_rollout_leaves_agent_alone(small_dataset, small_pools):
    agent = small_agent()
    before = agent.online_.flat().copy()
    trs = rollout(small_env(small_dataset, small_pools), agent, batch_n=5, max_next_candidates=4)
    assert len(trs) == 2 and trs[-1].terminal and not trs[0].terminal
    assert trs[0].next_actions.shape == (4, 11)
    np.testing.assert_array_equal(before, agent.online_.flat())


def test_coreset_one_dimensional():
    # labeled {0}, unlabeled {1, 5, 6}; ids equal positions
    U = np.array([[1.0], [5.0], [6.0]])
    assert kcenter_greedy(U, np.array([[0.0]]), [1, 5, 6], 1) == [6]
    # after 6: both 1 and 5 sit at distance 1, the lower id wins
    assert kcenter_greedy(U, np.array([[0.0]]), [1, 5, 6], 2) == [6, 1]


def test_coreset_tie_lowest_id():
    U = np.array([[-2.0], [2.0]])
    assert kcenter_greedy(U, np.array([[0.0]]), [8, 5], 1) == [5]


def test_margin_top_and_ties():
    assert top_margin([0.8, 0.3, 0.8], [0, 1, 2], 2) == [0, 2]
    assert top_margin([0.8, 0.3, 0.8], [4, 1, 2], 1) == [2]


def test_uniform_frequencies():
    env = SimpleNamespace(unlabeled=list(range(100, 110)))
    n, trials = 3, 10_000
    counts = dict.fromkeys(env.unlabeled, 0)
    for t in range(trials):
        for i in uniform_select(env, n, seed=t):
            counts[i] += 1
    p = n / len(env.unlabeled)
    sd = np.sqrt(trials * p * (1 - p))
    assert all(abs(c - trials * p) < 3 * sd for c in counts.values())


def test_uniform_whole_pool_and_seeded():
    env = SimpleNamespace(unlabeled=[4, 8, 15, 16])
    assert uniform_select(env, 4, seed=1) == [4, 8, 15, 16]
    assert uniform_select(env, 2, seed=7) == uniform_select(env, 2, seed=7)


def test_episode_csv_columns(small_dataset, small_pools):
    ep = run_episode(small_env(small_dataset, small_pools), "margin", batch_n=5, record_timing=True)
    lines = ep.to_csv().splitlines()
    assert lines[0] == "iter,spent,mmd,reward,accuracy,selected_ids,millis,test_accuracy"
    assert len(lines) == 3
    assert lines[1].split(",")[6] != ""
    plain = run_episode(small_env(small_dataset, small_pools), "margin", batch_n=5)
    assert plain.to_csv().splitlines()[1].split(",")[6] == ""


def test_auc():
    ep = EpisodeLog("x", 0, 0.5, 0.5, [{"test_accuracy": 0.7}, {"test_accuracy": 0.9}])
    assert ep.auc() == pytest.approx((0.6 + 0.8) / 2)
