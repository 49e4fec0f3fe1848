"""Dense numerical core: small MLP classifiers, a fixed-output-layer two-layer
net for the clusterable-data analysis, mini-batch SGD, and the kernel-based
step-size/stopping-time schedule.

Everything is plain numpy, float64, and deterministic given the seeds.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateCentersError,
    NumericError,
    ShapeError,
    TrainingDivergedError,
    ValidationError,
)

CHECKPOINT_SCHEMA_VERSION = 1

FULL = None  # sentinel for full-batch training in TrainConfig.batch_size


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_prime(z):
    return (z > 0.0).astype(z.dtype)


def _tanh_prime(z):
    return 1.0 - np.tanh(z) ** 2


ACTIVATIONS = {
    "relu": (_relu, _relu_prime),
    "tanh": (np.tanh, _tanh_prime),
}


@dataclass
class TrainConfig:
    """Knobs for one training run. ``batch_size=None`` means full batch."""

    learning_rate: float
    batch_size: int | None = None
    max_epochs: int = 10
    seed: int = 0
    l2_coefficient: float = 0.0
    loss: str = "cross_entropy"
    class_weights: tuple | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.max_epochs < 1:
            raise ValidationError("max_epochs must be >= 1")
        if self.l2_coefficient < 0:
            raise ValidationError("l2_coefficient must be >= 0")
        if self.loss not in ("cross_entropy", "squared"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1 or None for full batch")


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


class MlpClassifier:
    """Fully connected softmax classifier.

    ``layer_dims`` runs input -> hidden widths -> number of classes; an empty
    hidden list gives a linear softmax model. Weights are stored as
    (fan_in, fan_out) matrices so a batch forward pass is ``X @ W + b``.
    """

    def __init__(self, layer_dims, weights, biases, activation="relu", seed=0,
                 epochs_trained=0):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2:
            raise ValidationError("layer_dims needs at least input and output dims")
        if layer_dims[-1] < 2:
            raise ValidationError("output dim (number of classes) must be >= 2")
        if activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {activation!r}")
        if len(weights) != len(layer_dims) - 1 or len(biases) != len(layer_dims) - 1:
            raise ShapeError("one weight matrix and bias vector per layer expected")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (layer_dims[i], layer_dims[i + 1]) or b.shape != (layer_dims[i + 1],):
                raise ShapeError(
                    f"layer {i}: expected {(layer_dims[i], layer_dims[i + 1])} weights, "
                    f"got {w.shape}"
                )
        self.layer_dims = layer_dims
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = activation
        self.seed = int(seed)
        self.epochs_trained = int(epochs_trained)

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def num_classes(self):
        return self.layer_dims[-1]

    @classmethod
    def initialize(cls, layer_dims, activation="relu", seed=0):
        """He-style scaled Gaussian init; biases start at zero."""
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            scale = math.sqrt(2.0 / fan_in)
            weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(layer_dims, weights, biases, activation=activation, seed=seed)

    def copy(self):
        return copy.deepcopy(self)

    def _forward_cached(self, X):
        """Returns (pre-activations per layer, hidden activations per layer, probs)."""
        act, _ = ACTIVATIONS[self.activation]
        h = X
        zs, hs = [], [h]
        n_layers = len(self.weights)
        with np.errstate(over="ignore", invalid="ignore"):
            for i, (w, b) in enumerate(zip(self.weights, self.biases)):
                z = h @ w + b
                if not np.all(np.isfinite(z)):
                    raise NumericError("non-finite pre-activation", layer_index=i)
                zs.append(z)
                h = act(z) if i < n_layers - 1 else z
                hs.append(h)
        return zs, hs, softmax(zs[-1])

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected (n, {self.input_dim}) features, got {X.shape}")
        return self._forward_cached(X)[2]

    def predict_labels(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def accuracy(self, X, labels):
        return float(np.mean(self.predict_labels(X) == np.asarray(labels)))

    def loss_value(self, X, labels, loss="cross_entropy", class_weights=None):
        if loss != "cross_entropy":
            raise ValidationError("MlpClassifier trains with cross_entropy loss")
        probs = self.predict_proba(X)
        labels = np.asarray(labels, dtype=np.int64)
        picked = probs[np.arange(len(labels)), labels]
        terms = -np.log(np.clip(picked, 1e-300, None))
        if class_weights is not None:
            terms = terms * np.asarray(class_weights, dtype=np.float64)[labels]
        return float(np.mean(terms))

    def gradients(self, X, labels, loss="cross_entropy", class_weights=None):
        """Mean cross-entropy gradients, same shapes as (weights, biases)."""
        if loss != "cross_entropy":
            raise ValidationError("MlpClassifier trains with cross_entropy loss")
        X = np.asarray(X, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValidationError("labels out of range for this model")
        zs, hs, probs = self._forward_cached(X)
        n = X.shape[0]
        _, act_prime = ACTIVATIONS[self.activation]

        delta = probs.copy()
        delta[np.arange(n), labels] -= 1.0
        if class_weights is not None:
            delta *= np.asarray(class_weights, dtype=np.float64)[labels][:, None]
        delta /= n

        grad_w = [None] * len(self.weights)
        grad_b = [None] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grad_w[i] = hs[i].T @ delta
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * act_prime(zs[i - 1])
        return grad_w, grad_b

    def parameters(self):
        return self.weights + self.biases

    def apply_gradients(self, grads, learning_rate, l2_coefficient=0.0):
        grad_w, grad_b = grads
        for w, gw in zip(self.weights, grad_w):
            w -= learning_rate * (gw + l2_coefficient * w)
        for b, gb in zip(self.biases, grad_b):
            b -= learning_rate * gb


class TheoryNet:
    """Two-layer scalar-output net ``x -> v . phi(W x)`` with frozen v.

    The output weights are fixed at +-1/sqrt(p) (half each); this is the
    scaling under which the kernel matrix used by :func:`theory_schedule`
    is the infinite-width limit, so the scheduled step size and stopping
    time are O(1) in p. Classes are encoded as evenly spaced scalar targets
    in [-1, 1] and predictions decode to the nearest target.
    """

    GAMMA = 1.0  # bound on |phi'| and |phi''| for tanh

    def __init__(self, p, input_dim, num_classes, activation="tanh", seed=0):
        if p % 2 != 0:
            raise ValidationError("hidden-unit count p must be even")
        if num_classes < 2:
            raise ValidationError("need at least 2 classes")
        if activation != "tanh":
            raise ValidationError("TheoryNet requires a smooth activation (tanh)")
        self.p = int(p)
        self.input_dim = int(input_dim)
        self.num_classes = int(num_classes)
        self.activation = activation
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        self.W = rng.standard_normal((self.p, self.input_dim))
        v = np.empty(self.p)
        v[: self.p // 2] = 1.0 / math.sqrt(self.p)
        v[self.p // 2:] = -1.0 / math.sqrt(self.p)
        v.setflags(write=False)
        self.v = v
        self.label_values = np.linspace(-1.0, 1.0, self.num_classes)
        self.epochs_trained = 0

    def copy(self):
        return copy.deepcopy(self)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected (n, {self.input_dim}) features, got {X.shape}")
        z = X @ self.W.T
        if not np.all(np.isfinite(z)):
            raise NumericError("non-finite pre-activation", layer_index=0)
        return np.tanh(z) @ self.v

    def predict_labels(self, X):
        f = self.predict(X)
        return np.argmin(np.abs(f[:, None] - self.label_values[None, :]), axis=1)

    def accuracy(self, X, labels):
        return float(np.mean(self.predict_labels(X) == np.asarray(labels)))

    def targets(self, labels):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise ValidationError("labels out of range for this model")
        return self.label_values[labels]

    def loss_value(self, X, labels, loss="squared", class_weights=None):
        if loss != "squared":
            raise ValidationError("TheoryNet trains with the squared loss")
        r = self.predict(X) - self.targets(labels)
        return float(0.5 * np.sum(r * r))

    def gradients(self, X, labels, loss="squared", class_weights=None):
        """Gradient of 1/2 sum (y - f)^2 with respect to W only."""
        if loss != "squared":
            raise ValidationError("TheoryNet trains with the squared loss")
        X = np.asarray(X, dtype=np.float64)
        z = X @ self.W.T
        if not np.all(np.isfinite(z)):
            raise NumericError("non-finite pre-activation", layer_index=0)
        r = np.tanh(z) @ self.v - self.targets(labels)
        back = (r[:, None] * _tanh_prime(z)) * self.v[None, :]
        return ([back.T @ X], [])

    def parameters(self):
        return [self.W]

    def apply_gradients(self, grads, learning_rate, l2_coefficient=0.0):
        grad_w, _ = grads
        self.W -= learning_rate * (grad_w[0] + l2_coefficient * self.W)


def forward(model, x):
    """Class-probability vector for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward expects a single feature vector")
    return model.predict_proba(x[None, :])[0]


def backward(model, batch, loss="cross_entropy", class_weights=None):
    """Loss gradients for one batch, shaped like the model parameters."""
    X, labels = batch
    return model.gradients(X, labels, loss=loss, class_weights=class_weights)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float


def sgd_train(model, train, config, epoch_callback=None):
    """Mini-batch gradient descent on a copy of ``model``.

    Returns (trained model, trace). The trace holds one :class:`EpochRecord`
    per completed epoch. Shuffling derives from ``config.seed``; rerunning
    with identical inputs reproduces the weights bit for bit. The optional
    ``epoch_callback(epoch, model)`` fires after each epoch, with epoch 0
    fired once before training so callers can checkpoint the initial state.
    """
    X = np.asarray(train.features, dtype=np.float64)
    y = np.asarray(train.labels, dtype=np.int64)
    n = X.shape[0]
    if n == 0:
        raise ValidationError("training set is empty")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    trace = []
    if epoch_callback is not None:
        epoch_callback(0, model)
    for epoch in range(1, config.max_epochs + 1):
        if config.batch_size is None or config.batch_size >= n:
            batches = [slice(None)]
        else:
            order = rng.permutation(n)
            batches = [order[i:i + config.batch_size]
                       for i in range(0, n, config.batch_size)]
        try:
            for idx in batches:
                grads = model.gradients(X[idx], y[idx], loss=config.loss,
                                        class_weights=config.class_weights)
                model.apply_gradients(grads, config.learning_rate,
                                      config.l2_coefficient)
            loss_val = model.loss_value(X, y, loss=config.loss,
                                        class_weights=config.class_weights)
        except NumericError as exc:
            raise TrainingDivergedError(f"training diverged ({exc})",
                                        epoch=epoch) from exc
        if not math.isfinite(loss_val):
            raise TrainingDivergedError("training loss became non-finite",
                                        epoch=epoch)
        trace.append(EpochRecord(epoch, loss_val, model.accuracy(X, y)))
        model.epochs_trained = epoch
        if epoch_callback is not None:
            epoch_callback(epoch, model)
    return model, trace


def fit_early_stopped(model, train, config, metric):
    """Train with per-epoch checkpoints and keep the epoch >= 1 that
    maximizes ``metric(snapshot)``; the earliest epoch wins ties.

    Returns (chosen model, stop epoch, metric curve indexed by epoch,
    including epoch 0 for the initial state).
    """
    snapshots, curve = [], []

    def record(epoch, snap):
        snapshots.append(snap.copy())
        curve.append(float(metric(snap)))

    sgd_train(model, train, config, epoch_callback=record)
    best = int(np.argmax(np.asarray(curve[1:]))) + 1
    chosen = snapshots[best]
    chosen.epochs_trained = best
    return chosen, best, curve


@dataclass
class TheorySchedule:
    eta: float
    t_stop: int
    sigma_min: float
    spectral_norm_sq: float = field(default=float("nan"))


def theory_schedule(centers, activation="tanh", mc_samples=10000, seed=0, *,
                    n, c2=1.0, c4=1.0):
    """Step size and stopping time from the cluster-center kernel matrix.

    ``centers`` is the (K, d) matrix of unit-norm cluster centers and ``n``
    the number of training points. The kernel matrix is the elementwise
    product of the center Gram matrix with the Monte Carlo estimate of
    E[phi'(Cg) phi'(Cg)^T] over g ~ N(0, I_d); its smallest eigenvalue sets
    the stopping time t_stop = ceil(c4 * ||C||^2 / sigma_min), and the step
    size is eta = c2 * K / (n * ||C||^2) with ||C|| the spectral norm.
    """
    C = np.asarray(centers, dtype=np.float64)
    if C.ndim != 2:
        raise ShapeError("centers must be a (K, d) matrix")
    if mc_samples < 1000:
        raise ValidationError("mc_samples must be >= 1000 for a usable estimate")
    row_norms = np.linalg.norm(C, axis=1)
    if np.any(np.abs(row_norms - 1.0) > 1e-6):
        raise ValidationError("center rows must be unit-norm (within 1e-6)")
    if activation not in ("tanh",):
        raise ValidationError("schedule defined for smooth activations (tanh)")
    k, d = C.shape
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((int(mc_samples), d))
    D = _tanh_prime(G @ C.T)
    kernel_term = (D.T @ D) / float(mc_samples)
    sigma = (C @ C.T) * kernel_term
    sigma = 0.5 * (sigma + sigma.T)
    sigma_min = float(np.linalg.eigvalsh(sigma)[0])
    if sigma_min <= 1e-10:
        raise DegenerateCentersError(
            f"smallest kernel eigenvalue {sigma_min:.3e}; centers coincide or "
            "are not separable")
    spec_sq = float(np.linalg.norm(C, 2) ** 2)
    eta = c2 * k / (n * spec_sq)
    t_stop = int(math.ceil(c4 * spec_sq / sigma_min))
    return TheorySchedule(eta=eta, t_stop=t_stop, sigma_min=sigma_min,
                          spectral_norm_sq=spec_sq)


def save_checkpoint(model, path):
    """Write an :class:`MlpClassifier` to the JSON checkpoint format."""
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "layer_dims": list(model.layer_dims),
        "activation": model.activation,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "seed": model.seed,
        "epochs_trained": model.epochs_trained,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_checkpoint(path):
    payload = json.loads(Path(path).read_text())
    if payload.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValidationError(
            f"unsupported checkpoint schema {payload.get('schema_version')!r}")
    return MlpClassifier(
        payload["layer_dims"],
        [np.asarray(w, dtype=np.float64) for w in payload["weights"]],
        [np.asarray(b, dtype=np.float64) for b in payload["biases"]],
        activation=payload["activation"],
        seed=payload["seed"],
        epochs_trained=payload["epochs_trained"],
    )
