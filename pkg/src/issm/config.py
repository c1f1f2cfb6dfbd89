"""Experiment configuration: schema, defaults, validation and seed streams."""
import copy
import hashlib
import json
import zlib

import numpy as np
import yaml

DEFAULTS = {
    "dataset": {
        "synthetic": {
            "class_count": 8, "samples_per_class": 250, "joints": 8, "dims": 3, "frames": 24,
            "class_separation": 0.5, "noise_sigma": 2.0, "seed": 3,
        },
        "feature_file": None,
        "format": None,
        "holdout_per_class": 100,
    },
    "pools": {"init_labeled_n": 40, "reward_n": None, "budget": 200, "batch_n": 20},
    "agent": {
        "gamma": 0.9, "eps_start": 1.0, "eps_end": 0.05, "eps_decay_fraction": 0.6,
        "sync_period": 50, "replay_capacity": 10000, "batch_size": 32, "hidden": [64, 32],
        "learning_rate": 1e-4, "n_bins": 10, "curvature": 1.0, "train_episodes": 10,
        "updates_per_step": 10, "transitions": "first", "max_next_candidates": None,
        "checkpoint": None,
    },
    "recognizer": {"epochs": 30, "hidden": [64, 32], "learning_rate": 1e-2, "batch_size": 32},
    "kernel": {"bandwidth_mode": "median_heuristic", "sigma": 1.0},
    "meta": {
        "enabled": False, "horizon_h": 10, "meta_lr_beta": 1e-3, "inner_steps": 5,
        "inner_lr": 1e-3, "split_fraction": 0.3, "iterations": 200, "initial_n": 300,
        "batch_n": 5, "init_checkpoint": None,
    },
    "seeds": [0],
    "methods": ["issm", "uniform", "margin"],
    "log_timing": False,
}

METHODS = ("issm", "uniform", "margin", "coreset")
SYNTHETIC_INT = ("class_count", "samples_per_class", "joints", "dims", "frames", "seed")


class ConfigValidationError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _merge(defaults, user, path, problems):
    out = copy.deepcopy(defaults)
    if not isinstance(user, dict):
        problems.append(f"{path or 'config'}: expected a mapping")
        return out
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            problems.append(f"{where}: unknown key")
        elif isinstance(defaults[key], dict) and key != "synthetic":
            out[key] = _merge(defaults[key], value, where, problems)
        elif key == "synthetic":
            out[key] = None if value is None else _merge(defaults[key], value, where, problems)
        else:
            out[key] = value
    return out


def _positive_int(value, where, problems, minimum=1):
    if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
        problems.append(f"{where}: expected an integer >= {minimum}, got {value!r}")
        return False
    return True


def _number(value, where, problems, lo=None, hi=None, lo_open=False, hi_open=False):
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not np.isfinite(value):
        problems.append(f"{where}: expected a number, got {value!r}")
        return False
    bad = (lo is not None and (value < lo or (lo_open and value == lo))) or \
          (hi is not None and (value > hi or (hi_open and value == hi)))
    if bad:
        problems.append(f"{where}: {value!r} out of range")
        return False
    return True


def validate(cfg):
    problems = []
    ds = cfg["dataset"]
    if ds["feature_file"] is None and ds["synthetic"] is None:
        problems.append("dataset: need either synthetic or feature_file")
    if ds["feature_file"] is not None and ds["format"] not in (None, "csv", "jsonl"):
        problems.append("dataset.format: expected csv or jsonl")
    if ds["feature_file"] is None and ds["synthetic"] is not None:
        syn = ds["synthetic"]
        for k in SYNTHETIC_INT:
            _positive_int(syn[k], f"dataset.synthetic.{k}", problems, minimum=0 if k == "seed" else 1)
        _number(syn["class_separation"], "dataset.synthetic.class_separation", problems, lo=0)
        _number(syn["noise_sigma"], "dataset.synthetic.noise_sigma", problems, lo=0)
    _positive_int(ds["holdout_per_class"], "dataset.holdout_per_class", problems, minimum=0)

    pools = cfg["pools"]
    _positive_int(pools["init_labeled_n"], "pools.init_labeled_n", problems)
    if pools["reward_n"] is not None:
        _positive_int(pools["reward_n"], "pools.reward_n", problems)
    _positive_int(pools["budget"], "pools.budget", problems)
    _positive_int(pools["batch_n"], "pools.batch_n", problems)

    ag = cfg["agent"]
    _number(ag["gamma"], "agent.gamma", problems, lo=0, hi=1, hi_open=True)
    _number(ag["eps_start"], "agent.eps_start", problems, lo=0, hi=1)
    _number(ag["eps_end"], "agent.eps_end", problems, lo=0, hi=1)
    _number(ag["eps_decay_fraction"], "agent.eps_decay_fraction", problems, lo=0, hi=1)
    for k in ("sync_period", "replay_capacity", "batch_size", "train_episodes", "n_bins"):
        _positive_int(ag[k], f"agent.{k}", problems, minimum=2 if k == "n_bins" else 1)
    _positive_int(ag["updates_per_step"], "agent.updates_per_step", problems, minimum=0)
    _number(ag["learning_rate"], "agent.learning_rate", problems, lo=0)
    _number(ag["curvature"], "agent.curvature", problems, lo=0, lo_open=True)
    if ag["transitions"] not in ("first", "all"):
        problems.append("agent.transitions: expected 'first' or 'all'")
    if ag["max_next_candidates"] is not None:
        _positive_int(ag["max_next_candidates"], "agent.max_next_candidates", problems)
    for block in ("agent", "recognizer"):
        hidden = cfg[block]["hidden"]
        if not isinstance(hidden, list) or not hidden or not all(isinstance(h, int) and h >= 1 for h in hidden):
            problems.append(f"{block}.hidden: expected a non-empty list of positive integers")

    rec = cfg["recognizer"]
    _positive_int(rec["epochs"], "recognizer.epochs", problems)
    _positive_int(rec["batch_size"], "recognizer.batch_size", problems)
    _number(rec["learning_rate"], "recognizer.learning_rate", problems, lo=0)

    ker = cfg["kernel"]
    if ker["bandwidth_mode"] not in ("fixed", "median_heuristic"):
        problems.append("kernel.bandwidth_mode: expected fixed or median_heuristic")
    _number(ker["sigma"], "kernel.sigma", problems, lo=0, lo_open=True)

    meta = cfg["meta"]
    if not isinstance(meta["enabled"], bool):
        problems.append("meta.enabled: expected true or false")
    for k in ("horizon_h", "inner_steps", "iterations", "initial_n", "batch_n"):
        _positive_int(meta[k], f"meta.{k}", problems)
    _number(meta["meta_lr_beta"], "meta.meta_lr_beta", problems, lo=0)
    _number(meta["inner_lr"], "meta.inner_lr", problems, lo=0)
    _number(meta["split_fraction"], "meta.split_fraction", problems, lo=0, hi=1, lo_open=True, hi_open=True)

    seeds = cfg["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        problems.append("seeds: expected a non-empty list of non-negative integers")
    methods = cfg["methods"]
    if not isinstance(methods, list) or not methods or any(m not in METHODS for m in methods):
        problems.append(f"methods: expected a non-empty subset of {list(METHODS)}")
    if not isinstance(cfg["log_timing"], bool):
        problems.append("log_timing: expected true or false")
    return problems


def resolve(user_cfg, seed_override=None):
    """Merge ``user_cfg`` over the defaults and validate; raise with every problem found."""
    problems = []
    cfg = _merge(DEFAULTS, user_cfg or {}, "", problems)
    if seed_override is not None:
        cfg["seeds"] = [int(seed_override)]
    problems.extend(validate(cfg))
    if problems:
        raise ConfigValidationError(problems)
    if cfg["pools"]["reward_n"] is None:
        cfg["pools"]["reward_n"] = max(10, int(round(0.15 * cfg["pools"]["init_labeled_n"])))
    return cfg


def load(path, seed_override=None):
    """Read a YAML config, or the ``config`` block of a run manifest."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if isinstance(data, dict) and "manifest" in data:
        data = data["config"]
    return resolve(data, seed_override)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()


def derive_seed(base, stream, *index):
    """Stable 32-bit seed for a named random stream."""
    key = [int(base), zlib.crc32(stream.encode())] + [int(i) for i in index]
    return int(np.random.SeedSequence(key).generate_state(1)[0])
