"""Command line entry point: ``issm {train,metatune,compare,generate-data}``."""
import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys

import numpy as np
import scipy
import sklearn
import yaml

from . import __version__
from .agent import ISSMAgent
from .config import ConfigValidationError, config_hash, load
from .datagen import write_feature_csv, write_sequence_jsonl
from .exceptions import UsageError
from .experiment import build_dataset, compare, run_metatune, train_agent
from .recognizer import pool_batch

log = logging.getLogger("issm")


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(out, command, cfg, files):
    manifest = {
        "manifest": 1,
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "seeds": cfg["seeds"],
        "versions": {
            "issm": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__,
        },
        "outputs": {os.path.relpath(f, out): _sha256(f) for f in sorted(files)},
    }
    path = os.path.join(out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_train(cfg, out):
    dataset, eval_set = build_dataset(cfg)
    init = None
    if cfg["meta"]["init_checkpoint"]:
        with open(cfg["meta"]["init_checkpoint"]) as fh:
            init = _meta_params(json.load(fh))
    logs_dir = os.path.join(out, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    files = []

    def on_episode(seed, k, episode):
        path = os.path.join(logs_dir, f"train_seed{seed}_ep{k}.csv")
        episode.write(path)
        files.append(path)
        log.info("seed %d episode %d: final accuracy %.4f", seed, k, episode.final_accuracy)

    agent, _ = train_agent(cfg, dataset, eval_set, init_params=init, on_episode=on_episode)
    ckpt = os.path.join(out, "agent.json")
    agent.save(ckpt)
    files.append(ckpt)
    write_manifest(out, "train", cfg, files)


def _meta_params(data):
    from .nncore import DenseNet

    return DenseNet.from_dict(data["network"]).params()


def cmd_metatune(cfg, out):
    if not cfg["meta"]["enabled"]:
        raise UsageError("meta tuning is disabled in the config (meta.enabled: false)")
    dataset, _ = build_dataset(cfg)
    init = None
    if cfg["agent"]["checkpoint"]:
        init = ISSMAgent.load(cfg["agent"]["checkpoint"]).online_.params()
    rows = []
    tuner = run_metatune(cfg, dataset, init_params=init,
                         on_iteration=lambda it, loss: rows.append((it, loss)))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "meta_loss"])
    for it, loss in rows:
        writer.writerow([it, repr(loss)])
    loss_path = os.path.join(out, "meta_loss.csv")
    _write(loss_path, buf.getvalue())
    net = tuner.meta.agent("meta").online_
    ckpt = os.path.join(out, "meta.json")
    with open(ckpt, "w") as fh:
        json.dump({"network": net.to_dict(), "meta_config": cfg["meta"]}, fh)
    write_manifest(out, "metatune", cfg, [loss_path, ckpt])


def cmd_compare(cfg, out):
    agent = None
    if "issm" in cfg["methods"]:
        path = cfg["agent"]["checkpoint"] or os.path.join(out, "agent.json")
        if not os.path.exists(path):
            raise UsageError(f"issm requested but no agent checkpoint at {path}")
        agent = ISSMAgent.load(path)
    dataset, eval_set = build_dataset(cfg)
    rows, summary, logs = compare(cfg, dataset, eval_set, agent)
    logs_dir = os.path.join(out, "logs")
    os.makedirs(logs_dir, exist_ok=True)
    files = []
    for ep in logs:
        base = os.path.join(logs_dir, f"{ep.method}_seed{ep.seed}")
        ep.write(base + ".csv", base + ".json")
        files += [base + ".csv", base + ".json"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["kind", "method", "seed", "final_accuracy", "final_accuracy_sd", "auc", "auc_sd"])
    for r in rows:
        writer.writerow(["episode", r["method"], r["seed"], repr(r["final_accuracy"]), "", repr(r["auc"]), ""])
    for s in summary:
        writer.writerow(["summary", s["method"], "", repr(s["final_accuracy_mean"]),
                         repr(s["final_accuracy_sd"]), repr(s["auc_mean"]), repr(s["auc_sd"])])
    table = os.path.join(out, "comparison.csv")
    _write(table, buf.getvalue())
    lines = [f"{'method':<10} {'n':>3} {'final accuracy':>20} {'AUC':>20}"]
    for s in summary:
        lines.append(f"{s['method']:<10} {s['n']:>3} "
                     f"{s['final_accuracy_mean']:>11.4f} ± {s['final_accuracy_sd']:.4f} "
                     f"{s['auc_mean']:>11.4f} ± {s['auc_sd']:.4f}")
    report = "\n".join(lines) + "\n"
    text = os.path.join(out, "comparison.txt")
    _write(text, report)
    print(report, end="")
    write_manifest(out, "compare", cfg, files + [table, text])


def cmd_generate_data(cfg, out):
    dataset, eval_set = build_dataset(cfg)
    files = []
    feats = os.path.join(out, "features.csv")
    write_feature_csv(feats, dataset.ids, dataset.labels, pool_batch(dataset.X))
    files.append(feats)
    if dataset.frames is not None:
        seqs = os.path.join(out, "sequences.jsonl")
        write_sequence_jsonl(seqs, dataset)
        files.append(seqs)
    if eval_set is not None:
        hold = os.path.join(out, "holdout_features.csv")
        write_feature_csv(hold, eval_set.ids, eval_set.labels, pool_batch(eval_set.X))
        files.append(hold)
    write_manifest(out, "generate-data", cfg, files)


COMMANDS = {
    "train": cmd_train,
    "metatune": cmd_metatune,
    "compare": cmd_compare,
    "generate-data": cmd_generate_data,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="issm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config or a run manifest")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed-override", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config, args.seed_override)
    except ConfigValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (OSError, yaml.YAMLError) as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 1
    try:
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args.out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc} ({exc.filename})", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
