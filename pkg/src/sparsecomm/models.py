"""Desk-scale datasets and models with flat parameter vectors."""

import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, FormatError, NumericalError
from .rng import DATA, INIT, make_rng

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray  # (n, m) float64
    labels: np.ndarray  # (n,) int64
    n_classes: int

    def __post_init__(self):
        n = self.labels.shape[0]
        if n < 1:
            raise DomainError("dataset is empty")
        if self.features.shape[0] != n:
            raise DimensionError("features and labels disagree on n")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise DomainError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self):
        return self.labels.shape[0]

    @property
    def m(self):
        return self.features.shape[1]

    def subset(self, limit):
        if limit is None or limit >= self.n:
            return self
        return Dataset(self.features[:limit], self.labels[:limit], self.n_classes)


def _read(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw, expected_magic, ndim, path):
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{path}: truncated header at offset {len(raw)}")
    (magic,) = struct.unpack_from(">I", raw, 0)
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    size = math.prod(dims)
    if len(raw) < header + size:
        raise FormatError(f"{path}: truncated payload at offset {len(raw)}, expected {header + size} bytes")
    data = np.frombuffer(raw, dtype=np.uint8, count=size, offset=header)
    return data.reshape(dims)


def load_idx_labels(path):
    return _parse_idx(_read(path), IDX_LABELS, 1, path).astype(np.int64)


def load_idx(images_path, labels_path):
    """Load an IDX image/label pair (optionally gzipped), pixels scaled to [0, 1]."""
    images = _parse_idx(_read(images_path), IDX_IMAGES, 3, images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(
            f"{images_path}: {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels, int(labels.max()) + 1 if labels.size else 1)


def synth_dataset(seed, n, m, C, separation=4.0):
    """Gaussian class-conditional features around fixed random class means.

    Class means are drawn once from N(0, I) and rescaled to norm
    ``separation / sqrt(2)`` so two random classes sit about ``separation``
    noise standard deviations apart.
    """
    if min(n, m, C) < 1:
        raise DomainError("n, m and C must be positive")
    rng = make_rng(seed, DATA)
    means = rng.standard_normal((C, m))
    means *= (separation / math.sqrt(2.0)) / np.linalg.norm(means, axis=1, keepdims=True)
    labels = rng.integers(0, C, size=n) if C > 1 else np.zeros(n, dtype=np.int64)
    features = means[labels] + rng.standard_normal((n, m))
    return Dataset(features, labels.astype(np.int64), C)


def _softmax_xent(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    n = labels.shape[0]
    loss = float(np.mean(np.log(total[:, 0]) - shifted[np.arange(n), labels]))
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits


class MLP:
    """Fully connected network with a softmax cross-entropy head.

    ``sizes=(m, C)`` is multinomial logistic regression.  Parameters are
    stored flat, layer by layer, as ``W`` (fan_in x fan_out, row-major)
    followed by ``b``.
    """

    def __init__(self, sizes, activation="relu"):
        if len(sizes) < 2:
            raise DomainError("need at least input and output sizes")
        if activation not in ("relu", "tanh"):
            raise DomainError(f"unsupported activation {activation!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self._shapes = []
        offset = 0
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            w = (offset, offset + fan_in * fan_out, (fan_in, fan_out))
            offset = w[1]
            b = (offset, offset + fan_out, (fan_out,))
            offset = b[1]
            self._shapes.append((w, b))
        self.dim = offset

    def __repr__(self):
        return f"MLP({'-'.join(map(str, self.sizes))}, {self.activation})"

    def unflatten(self, params):
        if params.shape != (self.dim,):
            raise DimensionError(f"expected {self.dim} parameters, got {params.shape}")
        return [
            (params[w0:w1].reshape(ws), params[b0:b1])
            for (w0, w1, ws), (b0, b1, _) in self._shapes
        ]

    def init_params(self, seed):
        """Xavier-uniform weights, zero biases."""
        rng = make_rng(seed, INIT)
        params = np.zeros(self.dim)
        for (w0, w1, (fan_in, fan_out)), _ in self._shapes:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[w0:w1] = rng.uniform(-limit, limit, size=fan_in * fan_out)
        return params

    def _act(self, z):
        return np.maximum(z, 0.0) if self.activation == "relu" else np.tanh(z)

    def _act_grad(self, z, h):
        return (z > 0).astype(z.dtype) if self.activation == "relu" else 1.0 - h * h

    def logits(self, params, X):
        h = X
        layers = self.unflatten(params)
        for i, (W, b) in enumerate(layers):
            h = h @ W + b
            if i < len(layers) - 1:
                h = self._act(h)
        return h

    def loss(self, params, X, y):
        return _softmax_xent(self.logits(params, X), y)[0]

    def accuracy(self, params, X, y):
        return float(np.mean(np.argmax(self.logits(params, X), axis=1) == y))

    def grad(self, params, X, y):
        """Mean cross-entropy over the batch and its gradient w.r.t. ``params``."""
        if X.shape[0] == 0:
            raise DomainError("empty batch")
        layers = self.unflatten(params)
        pre, post = [], [X]
        h = X
        for i, (W, b) in enumerate(layers):
            z = h @ W + b
            pre.append(z)
            h = self._act(z) if i < len(layers) - 1 else z
            post.append(h)
        loss, delta = _softmax_xent(post[-1], y)
        if not math.isfinite(loss):
            raise NumericalError(f"non-finite loss {loss}")
        g = np.empty(self.dim)
        for i in range(len(layers) - 1, -1, -1):
            (w0, w1, _), (b0, b1, _) = self._shapes[i]
            g[w0:w1] = (post[i].T @ delta).ravel()
            g[b0:b1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ layers[i][0].T) * self._act_grad(pre[i - 1], post[i])
        return loss, g


def logistic_regression(m, C):
    return MLP((m, C))


def grad(model, params, batch):
    X, y = batch
    return model.grad(params, X, y)
