"""Experiment orchestration shared by the command line and the acceptance suite."""
import logging

import numpy as np

from .agent import ISSMAgent
from .alsim import PoolEnvironment, rollout, run_episode
from .config import derive_seed
from .datagen import SyntheticSpec, generate, generate_holdout, load_feature_file, split_pools
from .discrepancy import KernelConfig
from .metatune import MetaConfig, MetaTuner, PoolMetaTask, steps_to_threshold
from .recognizer import SkeletonRecognizer

log = logging.getLogger(__name__)


def build_dataset(cfg):
    """Return ``(dataset, eval_set)``; ``eval_set`` is None for feature files."""
    ds_cfg = cfg["dataset"]
    if ds_cfg["feature_file"] is not None:
        return load_feature_file(ds_cfg["feature_file"], ds_cfg["format"]), None
    spec = SyntheticSpec(**ds_cfg["synthetic"])
    dataset = generate(spec)
    holdout = generate_holdout(spec, ds_cfg["holdout_per_class"]) if ds_cfg["holdout_per_class"] else None
    return dataset, holdout


def recognizer_template(cfg, n_classes, seed):
    rec = cfg["recognizer"]
    return SkeletonRecognizer(hidden=tuple(rec["hidden"]), epochs=rec["epochs"],
                              learning_rate=rec["learning_rate"], batch_size=rec["batch_size"],
                              n_classes=n_classes, random_state=seed)


def effective_budget(cfg, dataset):
    pools = cfg["pools"]
    pool_size = len(dataset) - pools["init_labeled_n"] - pools["reward_n"]
    if pools["budget"] > pool_size:
        log.warning("budget %d exceeds the unlabeled pool (%d); clamping", pools["budget"], pool_size)
        return max(pool_size, 1)
    return pools["budget"]


def make_env(cfg, dataset, eval_set, split_seed, env_seed):
    pools = cfg["pools"]
    labeled, unlabeled, reward = split_pools(dataset, pools["init_labeled_n"], pools["reward_n"], seed=split_seed)
    ker = cfg["kernel"]
    return PoolEnvironment(
        dataset, labeled, unlabeled, reward, budget=effective_budget(cfg, dataset),
        recognizer=recognizer_template(cfg, dataset.n_classes, env_seed),
        kernel=KernelConfig(sigma=ker["sigma"], bandwidth_mode=ker["bandwidth_mode"]),
        curvature=cfg["agent"]["curvature"], n_bins=cfg["agent"]["n_bins"], seed=env_seed,
        eval_set=eval_set,
    )


def steps_per_episode(cfg, dataset):
    return int(np.ceil(effective_budget(cfg, dataset) / cfg["pools"]["batch_n"]))


def make_agent(cfg, total_select_steps, seed):
    ag = cfg["agent"]
    return ISSMAgent(
        state_dim=2, action_dim=1 + ag["n_bins"], hidden=tuple(ag["hidden"]), gamma=ag["gamma"],
        learning_rate=ag["learning_rate"], eps_start=ag["eps_start"], eps_end=ag["eps_end"],
        eps_decay_steps=int(round(ag["eps_decay_fraction"] * total_select_steps)),
        sync_period=ag["sync_period"], replay_capacity=ag["replay_capacity"],
        batch_size=ag["batch_size"], random_state=seed,
    ).initialize()


def train_agent(cfg, dataset, eval_set, init_params=None, on_episode=None):
    """Train one agent over ``train_episodes`` episodes for every configured seed."""
    ag = cfg["agent"]
    seeds = cfg["seeds"]
    total = steps_per_episode(cfg, dataset) * ag["train_episodes"] * len(seeds)
    agent = make_agent(cfg, total, derive_seed(seeds[0], "agent"))
    if init_params is not None:
        agent.online_.set_params(init_params)
        agent.sync_target()
    logs = []
    for seed in seeds:
        for k in range(ag["train_episodes"]):
            env = make_env(cfg, dataset, eval_set, derive_seed(seed, "train-split", k),
                           derive_seed(seed, "train-env", k))
            episode = run_episode(
                env, agent, mode="train", batch_n=cfg["pools"]["batch_n"], method="issm-train",
                seed=derive_seed(seed, "exploration", k), record_timing=cfg["log_timing"],
                updates_per_step=ag["updates_per_step"], transitions=ag["transitions"],
                max_next_candidates=ag["max_next_candidates"],
            )
            logs.append((seed, k, episode))
            if on_episode is not None:
                on_episode(seed, k, episode)
    return agent, logs


def evaluate_method(cfg, dataset, eval_set, method, seed, agent=None):
    env = make_env(cfg, dataset, eval_set, derive_seed(seed, "eval-split"), derive_seed(seed, "eval-env"))
    selector = agent if method == "issm" else method
    episode = run_episode(env, selector, mode="frozen", batch_n=cfg["pools"]["batch_n"], method=method,
                          seed=derive_seed(seed, "baseline", 0), record_timing=cfg["log_timing"])
    episode.seed = seed
    return episode


def compare(cfg, dataset, eval_set, agent=None, methods=None):
    """Frozen-deployment episodes for every method and seed.

    Returns ``(episode_rows, summary_rows, logs)``.
    """
    methods = methods or cfg["methods"]
    rows, logs = [], []
    for method in methods:
        for seed in cfg["seeds"]:
            ep = evaluate_method(cfg, dataset, eval_set, method, seed, agent)
            logs.append(ep)
            rows.append({"method": method, "seed": seed, "final_accuracy": ep.final_test_accuracy,
                         "auc": ep.auc()})
    summary = []
    for method in methods:
        acc = np.array([r["final_accuracy"] for r in rows if r["method"] == method])
        auc = np.array([r["auc"] for r in rows if r["method"] == method])
        summary.append({
            "method": method, "n": len(acc),
            "final_accuracy_mean": float(np.mean(acc)),
            "final_accuracy_sd": float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0,
            "auc_mean": float(np.mean(auc)),
            "auc_sd": float(np.std(auc, ddof=1)) if len(auc) > 1 else 0.0,
        })
    return rows, summary, logs


def meta_config(cfg):
    m = cfg["meta"]
    return MetaConfig(horizon_h=m["horizon_h"], meta_lr_beta=m["meta_lr_beta"], inner_steps=m["inner_steps"],
                      inner_lr=m["inner_lr"], split_fraction=m["split_fraction"])


def meta_task(cfg, dataset, seed):
    """Virtual-train / virtual-test tasks drawn from a stratified initial subset."""
    m = cfg["meta"]
    initial, _, _ = split_pools(dataset, min(m["initial_n"], len(dataset)), 0,
                                seed=derive_seed(seed, "meta-initial"))
    ker = cfg["kernel"]
    env_kwargs = {
        "kernel": KernelConfig(sigma=ker["sigma"], bandwidth_mode=ker["bandwidth_mode"]),
        "curvature": cfg["agent"]["curvature"], "n_bins": cfg["agent"]["n_bins"],
        "recognizer": recognizer_template(cfg, dataset.n_classes, derive_seed(seed, "meta-recognizer")),
    }
    return PoolMetaTask(dataset, initial, meta_config(cfg), batch_n=m["batch_n"], env_kwargs=env_kwargs,
                        max_next_candidates=cfg["agent"]["max_next_candidates"],
                        seed=derive_seed(seed, "meta-task"))


def run_metatune(cfg, dataset, init_params=None, on_iteration=None):
    seed = cfg["seeds"][0]
    template = make_agent(cfg, 1, derive_seed(seed, "meta-agent"))
    tuner = MetaTuner(template, meta_config(cfg), init_params)
    task = meta_task(cfg, dataset, seed)
    for it in range(cfg["meta"]["iterations"]):
        loss = tuner.step(task, it)
        if on_iteration is not None:
            on_iteration(it, loss)
    return tuner


def adaptation_episodes(cfg, dataset, seed):
    """Virtual-train and virtual-test episodes of a fresh task, collected with uniform random picks.

    Returns ``(train_episode, test_episode)``; the test episode has ``horizon_h`` steps.
    """
    task = meta_task(cfg, dataset, derive_seed(seed, "adapt-task"))
    vtr, vte = task.split(0)
    roller = make_agent(cfg, 1, derive_seed(seed, "adapt-roller")).set_params(eps_start=1.0, eps_end=1.0)
    nxt = cfg["agent"]["max_next_candidates"]
    train = rollout(task.make_env(vtr, 0, 1), roller, task.batch_n, explore=True,
                    max_next_candidates=nxt, seed=derive_seed(seed, "adapt-next", 1))
    test = rollout(task.make_env(vte, 0, 2), roller, task.batch_n, explore=True,
                   max_steps=cfg["meta"]["horizon_h"], max_next_candidates=nxt,
                   seed=derive_seed(seed, "adapt-next", 2))
    return train, test


def adaptation_steps(cfg, dataset, meta_params, seeds, threshold, max_steps=1000):
    """Inner steps until the held-out TD loss is <= ``threshold``, from ``meta_params`` and from random inits.

    Each seed draws a fresh task. Both starting points adapt on the same
    virtual-train episode with the configured inner learning rate and are
    scored on the same virtual-test episode. Returns ``(seed, meta_steps,
    random_steps)`` tuples.
    """
    lr = cfg["meta"]["inner_lr"]
    template = make_agent(cfg, 1, 0)
    out = []
    for seed in seeds:
        train, test = adaptation_episodes(cfg, dataset, seed)
        fresh = make_agent(cfg, 1, derive_seed(seed, "adapt-init")).online_.params()
        out.append((seed,
                    steps_to_threshold(meta_params, train, template, threshold, lr, max_steps, test),
                    steps_to_threshold(fresh, train, template, threshold, lr, max_steps, test)))
    return out
