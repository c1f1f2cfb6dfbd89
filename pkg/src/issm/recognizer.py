"""Action recognizer: temporal pooling followed by a small dense classifier."""
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import InsufficientDataError, InvalidInputError, ShapeError
from .nncore import Adam, DenseNet


def pool_features(x):
    """Per-coordinate temporal mean and population std of one ``T x p x d`` sequence."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"expected a T x p x d sequence, got shape {x.shape}")
    if x.shape[0] == 0:
        raise InvalidInputError("empty sequence")
    return np.concatenate([x.mean(axis=0).ravel(), x.std(axis=0).ravel()])


def pool_batch(X):
    """:func:`pool_features` over a batch ``n x T x p x d``; 2-d input passes through."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        return X
    if X.ndim == 3:
        return pool_features(X)[None, :]
    if X.ndim != 4:
        raise ShapeError(f"expected sequences or feature rows, got shape {X.shape}")
    if X.shape[1] == 0:
        raise InvalidInputError("empty sequence")
    n = X.shape[0]
    return np.concatenate([X.mean(axis=1).reshape(n, -1), X.std(axis=1).reshape(n, -1)], axis=1)


class TemporalPooling(TransformerMixin, BaseEstimator):
    """Stateless transformer wrapping :func:`pool_batch`."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return pool_batch(X)


class SkeletonRecognizer(ClassifierMixin, BaseEstimator):
    """Dense softmax classifier over pooled skeleton features.

    ``X`` may be a batch of sequences (``n x T x p x d``), which is pooled, or
    a matrix of precomputed features (``n x m``), which is used as is.
    ``transform`` returns penultimate-layer embeddings.
    """

    def __init__(self, hidden=(64, 32), epochs=30, learning_rate=1e-2, batch_size=32,
                 n_classes=None, random_state=0):
        self.hidden = hidden
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.n_classes = n_classes
        self.random_state = random_state

    def _features(self, X):
        F = pool_batch(X)
        if hasattr(self, "mean_") and F.shape[1] != self.mean_.shape[0]:
            raise ShapeError(f"expected {self.mean_.shape[0]} pooled features, got {F.shape[1]}")
        if not np.all(np.isfinite(F)):
            raise InvalidInputError("non-finite input features")
        return F

    def fit(self, X, y):
        F = self._features(X)
        y = np.asarray(y, dtype=np.int64)
        if F.shape[0] == 0:
            raise InsufficientDataError("cannot train on an empty labeled set")
        if len(y) != F.shape[0]:
            raise ShapeError("X and y have different lengths")
        n_classes = self.n_classes if self.n_classes is not None else int(y.max()) + 1
        if y.min() < 0 or y.max() >= n_classes:
            raise InvalidInputError(f"labels must lie in [0, {n_classes})")
        self.classes_ = np.arange(n_classes)
        self.mean_ = F.mean(axis=0)
        scale = F.std(axis=0)
        self.scale_ = np.where(scale > 1e-12, scale, 1.0)
        Z = (F - self.mean_) / self.scale_
        sizes = [Z.shape[1], *self.hidden, n_classes]
        acts = ["relu"] * len(self.hidden) + ["softmax"]
        rng = np.random.default_rng(self.random_state)
        net = DenseNet(sizes, acts, seed=int(rng.integers(2**31)))
        opt = Adam(lr=self.learning_rate)
        onehot = np.eye(n_classes)[y]
        n = Z.shape[0]
        bs = max(1, min(self.batch_size, n))
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, bs):
                b = order[start:start + bs]
                probs = net.forward(Z[b])
                grads = net.backward((probs - onehot[b]) / len(b), from_logits=True)
                opt.step(net, grads)
        self.net_ = net
        self.n_features_in_ = F.shape[1]
        self.feature_dim_ = self.hidden[-1] if self.hidden else n_classes
        self.epochs_trained_ = self.epochs
        return self

    def _standardized(self, X):
        check_is_fitted(self, "net_")
        return (self._features(X) - self.mean_) / self.scale_

    def predict_proba(self, X):
        return self.net_.copy().forward(self._standardized(X))

    def transform(self, X):
        """Penultimate-layer activations."""
        _, hidden = self.net_.copy().forward(self._standardized(X), return_hidden=-2)
        return hidden

    def proba_and_embed(self, X):
        return self.net_.copy().forward(self._standardized(X), return_hidden=-2)

    def predict(self, X):
        # argmax returns the first maximum, i.e. the lowest class id on ties
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self):
        check_is_fitted(self, "net_")
        return {
            "recognizer": {
                "class_count": int(len(self.classes_)),
                "feature_dim": int(self.feature_dim_),
                "pooling": "temporal_mean_std",
                "mean": self.mean_.tolist(),
                "scale": self.scale_.tolist(),
                "params": self.get_params(),
            },
            "network": self.net_.to_dict(),
        }

    @classmethod
    def from_dict(cls, data):
        head = data["recognizer"]
        params = dict(head["params"])
        params["hidden"] = tuple(params["hidden"])
        model = cls(**params)
        model.net_ = DenseNet.from_dict(data["network"])
        model.classes_ = np.arange(head["class_count"])
        model.mean_ = np.array(head["mean"])
        model.scale_ = np.array(head["scale"])
        model.n_features_in_ = len(model.mean_)
        model.feature_dim_ = head["feature_dim"]
        model.epochs_trained_ = params["epochs"]
        return model


def train_recognizer(X, y, template=None):
    """Fit a fresh copy of ``template`` (never mutates it)."""
    from sklearn.base import clone

    model = clone(template) if template is not None else SkeletonRecognizer()
    return model.fit(X, y)


def evaluate_accuracy(model, X, y):
    y = np.asarray(y)
    if len(y) == 0:
        raise InsufficientDataError("accuracy needs a nonempty evaluation set")
    return float(np.mean(model.predict(X) == y))
