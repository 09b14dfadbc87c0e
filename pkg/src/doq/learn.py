"""Feedforward classifier used as a model-free decisional quantizer.

Hidden layers use the logistic function, the output layer a softmax over the
M decisions. Each neuron computes ``f(b_j + sum_i W[i, j] o_i)``, so a weight
matrix has shape ``(fan_in, fan_out)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from doq.errors import DomainError, TrainingError

__all__ = [
    "MlpClassifier",
    "TrainConfig",
    "TrainReport",
    "mlp_init",
    "mlp_forward",
    "mlp_predict",
    "mlp_loss",
    "mlp_gradients",
    "mlp_train",
    "mlp_gradient_check",
]

DEFAULT_HIDDEN = (20, 20, 20)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MlpClassifier:
    layer_sizes: tuple
    weights: list
    biases: list
    mean: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        n_in = self.layer_sizes[0]
        if self.mean is None:
            self.mean = np.zeros(n_in)
        if self.scale is None:
            self.scale = np.ones(n_in)
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_sizes[l], self.layer_sizes[l + 1]) or b.shape != (w.shape[1],):
                raise DomainError(f"layer {l}: inconsistent shapes {w.shape}, {b.shape}")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_classes(self):
        return self.layer_sizes[-1]

    def params(self):
        return self.weights + self.biases

    def copy(self):
        return copy.deepcopy(self)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 2000
    learning_rate: float = 0.05
    momentum: float = 0.9
    patience: int = 50
    seed: int = 0
    standardize: bool = True
    batch_size: int | None = None  # None: full batch
    lr_decay: float = 0.0  # step size at epoch e is learning_rate / (1 + lr_decay * (e - 1))

    def __post_init__(self):
        if self.max_epochs < 1:
            raise DomainError("max_epochs must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise DomainError("patience must lie in [0, max_epochs]")
        if not self.learning_rate > 0:
            raise DomainError("learning_rate must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise DomainError("batch_size must be positive")
        if not self.lr_decay >= 0:
            raise DomainError("lr_decay must be nonnegative")


@dataclass
class TrainReport:
    net: MlpClassifier
    train_accuracy: float
    validation_accuracy: float
    test_accuracy: float
    train_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    epochs: int = 0
    best_epoch: int = 0


def mlp_init(layer_sizes, seed):
    """Uniform(-sqrt(3/fan_in), sqrt(3/fan_in)) weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 3:
        raise DomainError("need an input layer, at least one hidden layer and an output layer")
    if any(s < 1 for s in sizes) or sizes[-1] < 2:
        raise DomainError(f"degenerate layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        lim = np.sqrt(3.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpClassifier(sizes, weights, biases)


def _forward(net, x):
    """Activations of every layer for standardized inputs ``x`` (batch rows)."""
    acts = [x]
    n_layers = len(net.weights)
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        acts.append(softmax(z) if l == n_layers - 1 else sigmoid(z))
    return acts


def _standardize(net, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.n_inputs:
        raise DomainError(f"input dimension {x.shape[1]} != {net.n_inputs}")
    return (x - net.mean) / net.scale, single


def mlp_forward(net, x):
    """Softmax scores for one feature vector or a batch of rows."""
    xs, single = _standardize(net, x)
    out = _forward(net, xs)[-1]
    return out[0] if single else out


def mlp_predict(net, x):
    xs, single = _standardize(net, x)
    lab = np.argmax(_forward(net, xs)[-1], axis=1)
    return int(lab[0]) if single else lab


def _xent(probs, y):
    p = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def mlp_loss(net, x, y):
    """Mean cross-entropy of raw (unstandardized) inputs ``x`` against labels ``y``."""
    xs, _ = _standardize(net, x)
    return _xent(_forward(net, xs)[-1], np.asarray(y))


def _backward(net, xs, y):
    acts = _forward(net, xs)
    n = xs.shape[0]
    delta = acts[-1].copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    gw = [None] * len(net.weights)
    gb = [None] * len(net.weights)
    for l in range(len(net.weights) - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l > 0:
            a = acts[l]
            delta = (delta @ net.weights[l].T) * a * (1.0 - a)
    return _xent(acts[-1], y), gw, gb


def mlp_gradients(net, x, y):
    """Cross-entropy gradients ``(loss, dW list, db list)`` by backpropagation."""
    xs, _ = _standardize(net, x)
    return _backward(net, xs, np.asarray(y))


def mlp_gradient_check(net, x, y, step=1e-3):
    """Largest relative gap between backprop and finite-difference gradients.

    Uses the five-point central stencil, whose O(step^4) truncation error lets
    a larger step keep cancellation error near machine precision.
    """
    _, gw, gb = mlp_gradients(net, x, y)
    analytic = gw + gb
    probe = net.copy()
    worst = 0.0
    for p, g in zip(probe.params(), analytic):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            f = []
            for k in (2, 1, -1, -2):
                p[i] = orig + k * step
                f.append(mlp_loss(probe, x, y))
            p[i] = orig
            num = (-f[0] + 8 * f[1] - 8 * f[2] + f[3]) / (12 * step)
            denom = max(abs(num), abs(g[i]), 1e-7)
            worst = max(worst, abs(num - g[i]) / denom)
    return worst


def _accuracy(net, x, y):
    if len(y) == 0:
        return float("nan")
    return float(np.mean(np.argmax(_forward(net, x)[-1], axis=1) == y))


def mlp_train(net, dataset, cfg=TrainConfig()):
    """Cross-entropy training by gradient descent with momentum.

    Stops early once the validation loss has not improved for ``cfg.patience``
    epochs and returns the best-validation parameters. ``net`` is not modified.
    """
    x_tr, y_tr = dataset.split("train")
    x_va, y_va = dataset.split("validation")
    x_te, y_te = dataset.split("test")
    if len(y_tr) == 0:
        raise DomainError("empty training split")
    if np.any(dataset.labels < 0) or np.any(dataset.labels >= net.n_classes):
        raise DomainError(f"labels must lie in 0..{net.n_classes - 1}")
    net = net.copy()
    if cfg.standardize:
        net.mean = x_tr.mean(axis=0)
        sd = x_tr.std(axis=0)
        net.scale = np.where(sd > 0, sd, 1.0)
    else:
        net.mean = np.zeros(net.n_inputs)
        net.scale = np.ones(net.n_inputs)
    xs_tr = (x_tr - net.mean) / net.scale
    xs_va = (x_va - net.mean) / net.scale
    xs_te = (x_te - net.mean) / net.scale
    has_val = len(y_va) > 0

    rng = np.random.default_rng(cfg.seed)
    params = net.params()
    velocity = [np.zeros_like(p) for p in params]
    best = net.copy()
    best_val = np.inf
    best_epoch = 0
    since_best = 0
    train_curve, val_curve = [], []
    n = len(y_tr)
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)

    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = np.arange(n) if bs == n else rng.permutation(n)
        lr = cfg.learning_rate / (1.0 + cfg.lr_decay * (epoch - 1))
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            _, gw, gb = _backward(net, xs_tr[idx], y_tr[idx])
            for p, v, g in zip(params, velocity, gw + gb):
                v *= cfg.momentum
                v -= lr * g
                p += v
        tr_loss = _xent(_forward(net, xs_tr)[-1], y_tr)
        if not np.isfinite(tr_loss) or not all(np.isfinite(p).all() for p in params):
            raise TrainingError(f"training diverged at epoch {epoch}", epoch)
        train_curve.append(tr_loss)
        va_loss = _xent(_forward(net, xs_va)[-1], y_va) if has_val else tr_loss
        val_curve.append(va_loss)
        if va_loss < best_val:
            best_val, best_epoch, since_best = va_loss, epoch, 0
            best = net.copy()
        else:
            since_best += 1
            if since_best >= cfg.patience:
                break

    return TrainReport(
        net=best,
        train_accuracy=_accuracy(best, xs_tr, y_tr),
        validation_accuracy=_accuracy(best, xs_va, y_va),
        test_accuracy=_accuracy(best, xs_te, y_te),
        train_loss=train_curve,
        validation_loss=val_curve,
        epochs=epoch,
        best_epoch=best_epoch,
    )
