"""Synthetic skeleton sequences, feature-file ingestion and pool splitting."""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, InsufficientDataError, IntegrityError, ParseError


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 2
    samples_per_class: int = 10
    joints: int = 4
    dims: int = 3
    frames: int = 16
    class_separation: float = 6.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("class_count", "samples_per_class", "joints", "dims", "frames"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.class_separation < 0:
            raise ConfigError("class_separation must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass
class Dataset:
    """Labeled collection of samples.

    Exactly one of ``frames`` (``n x T x p x d``) or ``features`` (``n x m``)
    is set. ``labels`` uses -1 for unlabeled rows.
    """

    ids: list
    labels: np.ndarray
    frames: np.ndarray = None
    features: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.frames is None) == (self.features is None):
            raise ValueError("exactly one of frames or features must be given")
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = len(self.X)
        if len(self.ids) != n or len(self.labels) != n:
            raise ValueError("ids, labels and samples must have equal length")

    @property
    def X(self):
        return self.frames if self.frames is not None else self.features

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self):
        known = self.labels[self.labels >= 0]
        return int(known.max()) + 1 if known.size else 0

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            ids=[self.ids[i] for i in idx],
            labels=self.labels[idx],
            frames=None if self.frames is None else self.frames[idx],
            features=None if self.features is None else self.features[idx],
            meta=dict(self.meta),
        )


def _class_templates(spec, rng):
    T, p, d = spec.frames, spec.joints, spec.dims
    t = np.arange(T)[:, None, None] / T
    templates = []
    for _ in range(spec.class_count):
        freq = rng.uniform(0.3, 1.5, size=(1, p, d))
        phase = rng.uniform(0.0, 2 * np.pi, size=(1, p, d))
        offset = rng.normal(0.0, 0.5, size=(1, p, d))
        templates.append(spec.class_separation * (np.sin(2 * np.pi * freq * t + phase) + offset))
    return templates


def _draw(spec, per_class, stream):
    root = np.random.SeedSequence(spec.seed)
    template_seq, *class_seqs = root.spawn(spec.class_count + 1)
    templates = _class_templates(spec, np.random.default_rng(template_seq))
    frames, labels = [], []
    for c, seq in enumerate(class_seqs):
        rng = np.random.default_rng(seq.spawn(stream + 1)[stream])
        noise = rng.normal(0.0, 1.0, size=(per_class,) + templates[c].shape) * spec.noise_sigma
        frames.append(templates[c][None] + noise)
        labels.append(np.full(per_class, c))
    return np.concatenate(frames), np.concatenate(labels)


def generate(spec):
    """Per-class sinusoidal joint trajectories plus Gaussian jitter.

    Each class gets a template whose per-joint frequency, phase and offset
    are drawn once from ``spec.seed``; amplitude scales with
    ``class_separation``. Samples add i.i.d. noise of scale ``noise_sigma``.
    """
    frames, labels = _draw(spec, spec.samples_per_class, stream=0)
    ids = list(range(len(labels)))
    return Dataset(ids=ids, labels=labels, frames=frames, meta={"source": "synthetic"})


def generate_holdout(spec, per_class, stream=1):
    """Fresh samples from the same class templates as :func:`generate`."""
    if stream < 1:
        raise ConfigError("holdout stream must be >= 1; stream 0 is the main dataset")
    frames, labels = _draw(spec, per_class, stream=stream)
    ids = [f"holdout{stream}-{i}" for i in range(len(labels))]
    return Dataset(ids=ids, labels=labels, frames=frames, meta={"source": "synthetic-holdout"})


def _parse_label(raw, line):
    if raw is None or raw == "":
        return -1
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ParseError(f"label {raw!r} is not an integer", line) from None


def _finish(ids, labels, rows, path):
    seen = set()
    for i in ids:
        if i in seen:
            raise IntegrityError(f"duplicate id {i!r} in {path}")
        seen.add(i)
    if not rows:
        raise InsufficientDataError(f"{path} contains no rows")
    return Dataset(ids=ids, labels=np.array(labels), features=np.array(rows, dtype=np.float64),
                   meta={"source": str(path)})


def _check_row(vec, width, line):
    if width is not None and len(vec) != width:
        raise ParseError(f"expected {width} features, found {len(vec)}", line)
    if not all(math.isfinite(v) for v in vec):
        raise ParseError("non-finite feature value", line)


def load_feature_file(path, format=None):
    """Read precomputed embeddings from CSV (``id,label,f0..``) or JSONL."""
    fmt = format or ("jsonl" if str(path).endswith((".jsonl", ".json")) else "csv")
    ids, labels, rows = [], [], []
    width = None
    if fmt == "csv":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[:2] != ["id", "label"]:
                raise ParseError("header must start with id,label", 1)
            width = len(header) - 2
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != width + 2:
                    raise ParseError(f"expected {width + 2} columns, found {len(row)}", line)
                try:
                    vec = [float(v) for v in row[2:]]
                except ValueError:
                    raise ParseError("feature value is not a number", line) from None
                _check_row(vec, width, line)
                ids.append(row[0])
                labels.append(_parse_label(row[1], line))
                rows.append(vec)
    elif fmt == "jsonl":
        with open(path) as fh:
            for line, text in enumerate(fh, start=1):
                if not text.strip():
                    continue
                try:
                    obj = json.loads(text)
                    vec = [float(v) for v in obj["features"]]
                    sid = str(obj["id"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ParseError(f"malformed record ({exc})", line) from None
                _check_row(vec, width, line)
                width = len(vec)
                ids.append(sid)
                labels.append(_parse_label(obj.get("label"), line))
                rows.append(vec)
    else:
        raise ConfigError(f"unknown feature file format {fmt!r}")
    return _finish(ids, labels, rows, path)


def write_feature_csv(path, ids, labels, features):
    features = np.asarray(features, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "label"] + [f"f{j}" for j in range(features.shape[1])])
        for sid, lab, row in zip(ids, labels, features):
            writer.writerow([sid, "" if lab < 0 else int(lab)] + [repr(float(v)) for v in row])


def write_feature_jsonl(path, ids, labels, features):
    with open(path, "w") as fh:
        for sid, lab, row in zip(ids, labels, np.asarray(features, dtype=np.float64)):
            obj = {"id": str(sid), "label": None if lab < 0 else int(lab), "features": [float(v) for v in row]}
            fh.write(json.dumps(obj) + "\n")


def write_sequence_jsonl(path, dataset):
    with open(path, "w") as fh:
        for sid, lab, fr in zip(dataset.ids, dataset.labels, dataset.frames):
            obj = {"id": str(sid), "label": None if lab < 0 else int(lab), "frames": fr.tolist()}
            fh.write(json.dumps(obj) + "\n")


def _stratified_take(labels, idx, n, rng):
    """Pick ``n`` of ``idx`` spreading picks as evenly as possible over classes."""
    if n == 0:
        return np.array([], dtype=np.int64)
    by_class = {}
    for i in idx:
        by_class.setdefault(int(labels[i]), []).append(i)
    for c in by_class:
        by_class[c] = list(rng.permutation(by_class[c]))
    classes = sorted(by_class)
    order = list(rng.permutation(classes))
    taken = []
    depth = 0
    while len(taken) < n:
        progressed = False
        for c in order:
            if depth < len(by_class[c]) and len(taken) < n:
                taken.append(by_class[c][depth])
                progressed = True
        if not progressed:
            break
        depth += 1
    return np.array(sorted(taken), dtype=np.int64)


def split_pools(dataset, init_labeled_n, reward_n, seed=0):
    """Disjoint (labeled, unlabeled, reward) index arrays covering the dataset.

    Labeled and reward picks are class-stratified when labels are known; the
    remainder becomes the unlabeled pool.
    """
    n = len(dataset)
    if init_labeled_n < 0 or reward_n < 0 or init_labeled_n + reward_n > n:
        raise InsufficientDataError(
            f"cannot take {init_labeled_n} labeled + {reward_n} reward samples from {n}")
    rng = np.random.default_rng(seed)
    all_idx = np.arange(n)
    labels = dataset.labels
    if np.all(labels >= 0):
        labeled = _stratified_take(labels, all_idx, init_labeled_n, rng)
        rest = np.setdiff1d(all_idx, labeled)
        reward = _stratified_take(labels, rest, reward_n, rng)
    else:
        perm = rng.permutation(n)
        labeled = np.sort(perm[:init_labeled_n])
        reward = np.sort(perm[init_labeled_n:init_labeled_n + reward_n])
    unlabeled = np.setdiff1d(all_idx, np.concatenate([labeled, reward]))
    return labeled, unlabeled, reward
