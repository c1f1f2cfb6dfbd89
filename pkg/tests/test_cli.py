import csv
import json
import os

import numpy as np
import pytest
import yaml

from issm import config as config_mod
from issm.cli import main
from issm.config import ConfigValidationError, derive_seed, resolve

TINY = {
    "dataset": {
        "synthetic": {"class_count": 3, "samples_per_class": 20, "joints": 3, "dims": 3, "frames": 6,
                      "class_separation": 1.0, "noise_sigma": 1.0, "seed": 1},
        "holdout_per_class": 5,
    },
    "pools": {"init_labeled_n": 6, "reward_n": 12, "budget": 10, "batch_n": 5},
    "agent": {"hidden": [8], "train_episodes": 1, "batch_size": 4, "updates_per_step": 2,
              "max_next_candidates": 8},
    "recognizer": {"epochs": 2, "hidden": [8]},
    "meta": {"horizon_h": 2, "iterations": 2, "initial_n": 40, "batch_n": 3, "split_fraction": 0.5},
}


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def with_changes(**blocks):
    cfg = json.loads(json.dumps(TINY))
    for block, values in blocks.items():
        if isinstance(values, dict):
            cfg.setdefault(block, {}).update(values)
        else:
            cfg[block] = values
    return cfg


def run(tmp_path, command, cfg, out="out", extra=()):
    out_dir = tmp_path / out
    code = main([command, "--config", write_cfg(tmp_path, cfg, f"{out}.yaml"), "--out", str(out_dir), *extra])
    return code, out_dir


def files_under(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs)


def test_train_produces_three_artifacts(tmp_path):
    code, out = run(tmp_path, "train", TINY)
    assert code == 0
    assert files_under(out) == ["agent.json", os.path.join("logs", "train_seed0_ep0.csv"), "manifest.json"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0]
    assert manifest["config_sha256"] == config_mod.config_hash(manifest["config"])


def test_train_deterministic(tmp_path):
    _, a = run(tmp_path, "train", TINY, "a")
    _, b = run(tmp_path, "train", TINY, "b")
    for name in ("agent.json", os.path.join("logs", "train_seed0_ep0.csv")):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_validation_error_exit_two_and_no_output(tmp_path, capsys):
    cfg = with_changes(pools={"batch_n": 0}, agent={"gamma": 1.5, "bogus": 1})
    code, out = run(tmp_path, "train", cfg)
    assert code == 2
    assert not out.exists()
    err = capsys.readouterr().err
    assert "pools.batch_n" in err and "agent.gamma" in err and "agent.bogus: unknown key" in err


def test_unreadable_config_exit_one(tmp_path):
    assert main(["train", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "o")]) == 1


def test_metatune_disabled_is_usage_error(tmp_path):
    code, _ = run(tmp_path, "metatune", TINY)
    assert code == 1


def test_metatune_outputs(tmp_path):
    code, out = run(tmp_path, "metatune", with_changes(meta={"enabled": True}))
    assert code == 0
    rows = list(csv.reader((out / "meta_loss.csv").read_text().splitlines()))
    assert rows[0] == ["iteration", "meta_loss"] and len(rows) == 3


def test_metatune_beta_zero_keeps_initialization(tmp_path):
    _, trained = run(tmp_path, "train", TINY, "t")
    cfg = with_changes(meta={"enabled": True, "iterations": 1, "meta_lr_beta": 0.0},
                       agent={"checkpoint": str(trained / "agent.json")})
    code, out = run(tmp_path, "metatune", cfg)
    assert code == 0
    meta = json.loads((out / "meta.json").read_text())["network"]
    agent = json.loads((trained / "agent.json").read_text())["online"]
    assert meta["layers"] == agent["layers"]


def test_compare_missing_checkpoint(tmp_path):
    code, _ = run(tmp_path, "compare", with_changes(methods=["issm", "uniform"]))
    assert code == 1


def test_compare_rows_and_means(tmp_path):
    code, out = run(tmp_path, "compare", with_changes(methods=["uniform", "margin"], seeds=[0, 1, 2]))
    assert code == 0
    rows = list(csv.DictReader((out / "comparison.csv").read_text().splitlines()))
    episodes = [r for r in rows if r["kind"] == "episode"]
    summaries = [r for r in rows if r["kind"] == "summary"]
    assert len(episodes) == 6 and len(summaries) == 2
    for s in summaries:
        vals = [float(r["final_accuracy"]) for r in episodes if r["method"] == s["method"]]
        assert float(s["final_accuracy"]) == pytest.approx(np.mean(vals), abs=1e-12)
    assert (out / "comparison.txt").read_text().startswith("method")


def test_compare_with_trained_agent(tmp_path):
    _, trained = run(tmp_path, "train", TINY, "t")
    cfg = with_changes(methods=["issm", "coreset"], agent={"checkpoint": str(trained / "agent.json")})
    code, out = run(tmp_path, "compare", cfg)
    assert code == 0
    assert (out / "logs" / "issm_seed0.csv").exists()


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    code, first = run(tmp_path, "compare", with_changes(methods=["uniform", "margin"], seeds=[0, 1]))
    assert code == 0
    second = tmp_path / "again"
    assert main(["compare", "--config", str(first / "manifest.json"), "--out", str(second)]) == 0
    assert files_under(first) == files_under(second)
    for name in files_under(first):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_seed_override(tmp_path):
    code, out = run(tmp_path, "train", TINY, extra=("--seed-override", "7"))
    assert code == 0
    assert (out / "logs" / "train_seed7_ep0.csv").exists()


def test_budget_clamped_with_warning(tmp_path, caplog):
    cfg = with_changes(pools={"budget": 500})
    with caplog.at_level("WARNING"):
        code, out = run(tmp_path, "train", cfg)
    assert code == 0
    assert "clamping" in caplog.text
    lines = (out / "logs" / "train_seed0_ep0.csv").read_text().splitlines()
    spent = [int(line.split(",")[1]) for line in lines[1:]]
    pool = 3 * 20 - 6 - 12
    assert spent[-1] == pool and len(spent) == int(np.ceil(pool / 5))


def test_generate_data(tmp_path):
    code, out = run(tmp_path, "generate-data", TINY)
    assert code == 0
    assert files_under(out) == ["features.csv", "holdout_features.csv", "manifest.json", "sequences.jsonl"]
    assert len((out / "features.csv").read_text().splitlines()) == 61


def test_resolve_defaults_reward_n():
    cfg = resolve({"pools": {"init_labeled_n": 200}})
    assert cfg["pools"]["reward_n"] == 30
    assert resolve({})["pools"]["reward_n"] == max(10, round(0.15 * 40))


def test_resolve_reports_every_problem():
    with pytest.raises(ConfigValidationError) as info:
        resolve({"seeds": [], "methods": ["magic"], "nope": 1})
    assert len(info.value.problems) == 3


def test_derive_seed_streams():
    assert derive_seed(0, "a") == derive_seed(0, "a")
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert derive_seed(0, "a", 1) != derive_seed(0, "a", 2)


def test_adaptation_steps_shared_episodes():
    from issm.experiment import adaptation_episodes, adaptation_steps, build_dataset, make_agent

    cfg = resolve(with_changes(meta={"enabled": True}))
    dataset, _ = build_dataset(cfg)
    train, test = adaptation_episodes(cfg, dataset, 0)
    assert len(test) == cfg["meta"]["horizon_h"]
    again, _ = adaptation_episodes(cfg, dataset, 0)
    assert [t.reward for t in again] == [t.reward for t in train]
    params = make_agent(cfg, 1, 5).online_.params()
    assert adaptation_steps(cfg, dataset, params, [0, 1], threshold=1e9) == [(0, 0, 0), (1, 0, 0)]
    (_, meta, rnd), = adaptation_steps(cfg, dataset, params, [0], threshold=-1.0, max_steps=3)
    assert meta == rnd == 3
