"""Small numpy MLP classifier used as the experiment backend.

One ReLU hidden layer, softmax output, Adam on minibatches, retrained from
scratch each time it is asked to fit a labeled set. Training runs until the
labeled-set accuracy reaches a threshold (0.99 by default) or an epoch cap,
which stands in for the train-to-(near-)completion protocol the selectors
are evaluated under. Everything is float64 and seeded, so identical
(config, data, seed) triples produce bit-identical parameter trajectories.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .embeddings import PredictionRecord

# Predicted probabilities are clamped at this floor inside the loss only;
# gradients use the raw softmax outputs.
PROB_FLOOR = 1e-12

_CHECKPOINT_MAGIC = b"BALMLP01"


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    num_classes: int
    hidden_dim: int = 128
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    train_acc_threshold: float = 0.99
    max_epochs: int = 300
    minibatch_size: int = 64
    rng_seed: int = 0

    def validate(self):
        if self.input_dim < 1 or self.num_classes < 2 or self.hidden_dim < 1:
            raise ValueError("input_dim/hidden_dim must be >= 1 and num_classes >= 2")
        if self.learning_rate <= 0 or self.minibatch_size < 1 or self.max_epochs < 1:
            raise ValueError("learning_rate, minibatch_size and max_epochs must be positive")
        if not 0.0 < self.train_acc_threshold <= 1.0:
            raise ValueError("train_acc_threshold must lie in (0, 1]")
        return self

    def with_seed(self, seed):
        return replace(self, rng_seed=int(seed))


@dataclass
class MlpParams:
    """Network parameters plus the Adam moment buffers that trained them."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    rng_seed: int = 0
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_t: int = 0

    def arrays(self):
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def all_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays().values())

    @property
    def input_dim(self):
        return self.w1.shape[0]

    @property
    def hidden_dim(self):
        return self.w1.shape[1]

    @property
    def num_classes(self):
        return self.w2.shape[1]


@dataclass
class TrainResult:
    params: MlpParams
    epochs_run: int
    final_train_accuracy: float
    reached_threshold: bool


def init_params(config, rng=None):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for each layer's weights and biases."""
    config.validate()
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    bound1 = 1.0 / np.sqrt(config.input_dim)
    bound2 = 1.0 / np.sqrt(config.hidden_dim)
    return MlpParams(
        w1=rng.uniform(-bound1, bound1, size=(config.input_dim, config.hidden_dim)),
        b1=rng.uniform(-bound1, bound1, size=config.hidden_dim),
        w2=rng.uniform(-bound2, bound2, size=(config.hidden_dim, config.num_classes)),
        b2=rng.uniform(-bound2, bound2, size=config.num_classes),
        rng_seed=config.rng_seed,
    )


def _as_batch(x, input_dim):
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != input_dim:
        raise ValueError(f"input shape {np.shape(x)} incompatible with input_dim {input_dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("model input contains non-finite entries")
    return arr, squeeze


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params, x):
    """Softmax probabilities and hidden activations; accepts one row or a batch."""
    X, squeeze = _as_batch(x, params.input_dim)
    hidden = np.maximum(X @ params.w1 + params.b1, 0.0)
    probs = _softmax(hidden @ params.w2 + params.b2)
    if squeeze:
        return probs[0], hidden[0]
    return probs, hidden


def _check_labels(y, n, num_classes):
    labels = np.asarray(y)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match {n} rows")
    if labels.size and not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels out of range for {num_classes} classes")
    return labels


def loss_and_grad(params, x, y):
    """Mean cross-entropy and its gradients via backprop.

    The loss clamps probabilities at 1e-12 before the log; the gradient is
    the exact softmax cross-entropy gradient of the unclamped loss, which for
    one example and the last layer reduces to the (p_i - 1[y == i]) z blocks.
    """
    X, _ = _as_batch(x, params.input_dim)
    n = X.shape[0]
    labels = _check_labels(y, n, params.num_classes)
    pre = X @ params.w1 + params.b1
    hidden = np.maximum(pre, 0.0)
    probs = _softmax(hidden @ params.w2 + params.b2)

    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, PROB_FLOOR))))

    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    dhidden = (dlogits @ params.w2.T) * (pre > 0.0)
    grads = {
        "w1": X.T @ dhidden,
        "b1": dhidden.sum(axis=0),
        "w2": hidden.T @ dlogits,
        "b2": dlogits.sum(axis=0),
    }
    return loss, grads


def adam_step(params, grads, config):
    """One in-place Adam update with bias-corrected moments."""
    if not params.adam_m:
        params.adam_m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        params.adam_v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
    params.adam_t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    corr1 = 1.0 - b1**params.adam_t
    corr2 = 1.0 - b2**params.adam_t
    for name, value in params.arrays().items():
        g = grads[name]
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        value -= config.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + config.adam_eps)


def _accuracy(probs, labels):
    return float(np.mean(np.argmax(probs, axis=1) == labels))


def train_from_scratch(config, x, y):
    """Fit a fresh network on the labeled set.

    Minibatches are reshuffled every epoch from the config seed; training
    stops once full-labeled-set accuracy reaches train_acc_threshold or after
    max_epochs. Returns the trained parameters plus how training ended.
    """
    config.validate()
    X, _ = _as_batch(x, config.input_dim)
    n = X.shape[0]
    if n < 1:
        raise ValueError("training set is empty")
    labels = _check_labels(y, n, config.num_classes)

    rng = np.random.default_rng(config.rng_seed)
    params = init_params(config, rng)
    epochs = 0
    acc = _accuracy(forward(params, X)[0], labels)
    while acc < config.train_acc_threshold and epochs < config.max_epochs:
        perm = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = perm[start : start + config.minibatch_size]
            _, grads = loss_and_grad(params, X[idx], labels[idx])
            adam_step(params, grads, config)
        epochs += 1
        if not params.all_finite():
            raise FloatingPointError(f"non-finite parameters after epoch {epochs}")
        acc = _accuracy(forward(params, X)[0], labels)
    return TrainResult(
        params=params,
        epochs_run=epochs,
        final_train_accuracy=acc,
        reached_threshold=acc >= config.train_acc_threshold,
    )


def forward_pool(params, features):
    """Batch forward over pool rows, returning (probs, hidden) matrices."""
    X, squeeze = _as_batch(features, params.input_dim)
    if squeeze:
        raise ValueError("forward_pool expects a 2-d feature matrix")
    return forward(params, X)


def predict_pool(params, features, ids=None):
    """PredictionRecords for pool rows; ids default to row positions."""
    probs, hidden = forward_pool(params, features)
    n = probs.shape[0]
    if ids is None:
        ids = range(n)
    else:
        ids = list(ids)
        if len(ids) != n:
            raise ValueError(f"got {len(ids)} ids for {n} rows")
    return [
        PredictionRecord(example_id=int(i), probs=probs[r], features=hidden[r])
        for r, i in enumerate(ids)
    ]


def test_accuracy(params, x, y):
    """Accuracy on a held-out set; an empty test set is an error."""
    X = np.asarray(x, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("test set must be a nonempty (n, d) matrix")
    labels = _check_labels(y, X.shape[0], params.num_classes)
    probs, _ = forward_pool(params, X)
    return _accuracy(probs, labels)


def save_params(path, params):
    """Write an inference checkpoint.

    Layout (all little-endian): the 8-byte magic b"BALMLP01"; four int64
    header fields input_dim, hidden_dim, num_classes, rng_seed; then the
    float64 entries of w1, b1, w2, b2 concatenated flat in C order.
    """
    header = struct.pack(
        "<4q", params.input_dim, params.hidden_dim, params.num_classes, params.rng_seed
    )
    with open(path, "wb") as fh:
        fh.write(_CHECKPOINT_MAGIC)
        fh.write(header)
        for name in ("w1", "b1", "w2", "b2"):
            fh.write(np.ascontiguousarray(params.arrays()[name], dtype="<f8").tobytes())


def load_params(path):
    """Read a checkpoint written by save_params."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    off = len(_CHECKPOINT_MAGIC)
    d_in, hidden, classes, seed = struct.unpack_from("<4q", blob, off)
    off += struct.calcsize("<4q")
    shapes = [("w1", (d_in, hidden)), ("b1", (hidden,)), ("w2", (hidden, classes)), ("b2", (classes,))]
    expected = off + sum(int(np.prod(s)) for _, s in shapes) * 8
    if len(blob) != expected:
        raise ValueError(f"{path}: checkpoint size {len(blob)} does not match header (expected {expected})")
    arrays = {}
    for name, shape in shapes:
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        off += count * 8
    return MlpParams(rng_seed=int(seed), **arrays)
