"""Dense feed-forward network with exact backprop and an Adam optimizer.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of
shape ``(n, fan_in)`` maps to ``X @ W + b``. A 1-d input is treated as a
batch of one and the output is returned 1-d.
"""
import json

import numpy as np

from .exceptions import InvalidInputError, NumericOverflowError, ShapeError, UsageError

FORMAT_TAG = "nncore_v1"
ACTIVATIONS = ("relu", "identity", "softmax")


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def glorot_uniform(rng, fan_in, fan_out):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


class DenseNet:
    """Stack of affine layers, each followed by an activation.

    Parameters
    ----------
    sizes : sequence of int
        Layer widths including the input, e.g. ``(13, 64, 32, 1)``.
    activations : sequence of str, optional
        One per layer. Defaults to relu on hidden layers and identity on the
        output.
    seed : int
        Seed for the Glorot-uniform initialization. Biases start at zero.
    """

    def __init__(self, sizes, activations=None, seed=0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeError(f"invalid layer sizes {sizes}")
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["identity"]
        activations = list(activations)
        if len(activations) != n_layers:
            raise ShapeError("need one activation per layer")
        for i, act in enumerate(activations):
            if act not in ACTIVATIONS:
                raise InvalidInputError(f"unknown activation {act!r}")
            if act == "softmax" and i != n_layers - 1:
                raise InvalidInputError("softmax is only allowed on the final layer")
        rng = np.random.default_rng(seed)
        self.weights = [glorot_uniform(rng, a, b) for a, b in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(b) for b in sizes[1:]]
        self.activations = activations
        self.n_forward = 0
        self._version = 0
        self._cache = None

    @property
    def sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def param_count(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def params(self):
        """Parameters in ``[W0, b0, W1, b1, ...]`` order."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend([W, b])
        return out

    def set_params(self, params):
        params = list(params)
        if len(params) != 2 * len(self.weights):
            raise ShapeError("parameter list length does not match the network")
        for i in range(len(self.weights)):
            W, b = np.asarray(params[2 * i], dtype=np.float64), np.asarray(params[2 * i + 1], dtype=np.float64)
            if W.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeError(f"layer {i}: parameter shape mismatch")
            self.weights[i] = W.copy()
            self.biases[i] = b.copy()
        self.touch()

    def touch(self):
        """Mark parameters as modified so cached activations go stale."""
        self._version += 1

    def copy(self):
        other = DenseNet.__new__(DenseNet)
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other.activations = list(self.activations)
        other.n_forward = 0
        other._version = 0
        other._cache = None
        return other

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params()])

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.weights[0].shape[0]:
            raise ShapeError(f"input shape {x.shape} does not match input width {self.weights[0].shape[0]}")
        return X, single

    def forward(self, x, return_hidden=None):
        """Evaluate the network and cache activations for :meth:`backward`.

        ``return_hidden=k`` additionally returns the post-activation output of
        layer ``k`` (``-2`` is the penultimate layer).
        """
        X, single = self._check_input(x)
        self.n_forward += 1
        acts = [X]
        pre = []
        h = X
        with np.errstate(over="ignore", invalid="ignore"):
            for W, b, act in zip(self.weights, self.biases, self.activations):
                z = h @ W + b
                pre.append(z)
                if act == "relu":
                    h = np.maximum(z, 0.0)
                elif act == "softmax":
                    h = softmax(z)
                else:
                    h = z
                acts.append(h)
        if not np.all(np.isfinite(h)):
            raise NumericOverflowError("non-finite activations in forward pass")
        self._cache = (self._version, single, acts, pre)
        out = h[0] if single else h
        if return_hidden is None:
            return out
        hidden = acts[1:][return_hidden]
        return out, (hidden[0] if single else hidden)

    __call__ = forward

    def backward(self, loss_grad, from_logits=False):
        """Reverse-mode gradients for the most recent :meth:`forward` call.

        ``loss_grad`` is dL/d(output) with the same shape as the output. With
        ``from_logits=True`` it is taken as the gradient with respect to the
        final pre-activation instead (the usual softmax-cross-entropy shortcut).
        Returns gradients in :meth:`params` order.
        """
        if self._cache is None:
            raise UsageError("backward called before forward")
        version, single, acts, pre = self._cache
        if version != self._version:
            raise UsageError("stale forward cache: parameters changed since forward")
        g = np.asarray(loss_grad, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"loss_grad shape {g.shape} does not match output {acts[-1].shape}")
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            act = self.activations[i]
            if act == "relu":
                g = g * (pre[i] > 0)
            elif act == "softmax" and not (from_logits and i == len(self.weights) - 1):
                s = acts[i + 1]
                g = s * (g - (g * s).sum(axis=1, keepdims=True))
            grads[2 * i] = acts[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.weights[i].T
        return grads

    def to_dict(self):
        return {
            "format": FORMAT_TAG,
            "layers": [
                {
                    "shape": list(W.shape),
                    "activation": act,
                    "weights": W.ravel().tolist(),
                    "bias": b.tolist(),
                }
                for W, b, act in zip(self.weights, self.biases, self.activations)
            ],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != FORMAT_TAG:
            raise InvalidInputError(f"unsupported checkpoint format {data.get('format')!r}")
        layers = data["layers"]
        sizes = [layers[0]["shape"][0]] + [layer["shape"][1] for layer in layers]
        net = cls(sizes, [layer["activation"] for layer in layers])
        params = []
        for layer in layers:
            params.append(np.array(layer["weights"], dtype=np.float64).reshape(layer["shape"]))
            params.append(np.array(layer["bias"], dtype=np.float64))
        net.set_params(params)
        return net

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class Adam:
    """Adaptive-moment optimizer with bias correction."""

    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise InvalidInputError("learning rate must be non-negative")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = None
        self.v = None

    def reset(self):
        self.step_count = 0
        self.m = None
        self.v = None

    def step(self, net, grads):
        params = net.params()
        if len(grads) != len(params):
            raise ShapeError("gradient list does not match the network parameters")
        for p, g in zip(params, grads):
            if np.shape(g) != p.shape:
                raise ShapeError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lr == 0:
                continue
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        net.touch()
        return net

    def state_dict(self):
        return {
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
            "step_count": self.step_count,
        }
