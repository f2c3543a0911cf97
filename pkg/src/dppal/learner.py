"""Small MLP ensembles and entropy-based uncertainty.

All members are trained together: every weight array carries a leading
member axis, and bootstrap resampling enters as per-member sample weights.
The summed member loss is separable, so one full-batch optimisation over the
stacked parameters trains every member at once.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_softmax, softmax

from dppal.errors import DegenerateLabelsWarning, InputError, ParameterError

ENSEMBLE_SIZE = 10
LEARNING_RATE = 0.5
EPOCHS = 500
OPTIMIZERS = ("lbfgs", "gd")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., output); sigmoid hidden, softmax out."""

    layer_sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ParameterError("an MLP needs at least input and output layers")
        if any(s < 1 for s in sizes):
            raise ParameterError("layer sizes must be positive")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def d(self):
        return self.layer_sizes[0]

    @property
    def n_classes(self):
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class TrainConfig:
    """``epochs`` caps the iterations of either optimiser.

    "gd" is plain full-batch gradient descent at ``learning_rate``; "lbfgs"
    runs full-batch L-BFGS, whose line search keeps the loss non-increasing.
    Plain GD at lr 0.5 stalls at the majority-class predictor for hundreds of
    epochs on small sigmoid nets, hence the L-BFGS default.
    """

    n_members: int = ENSEMBLE_SIZE
    learning_rate: float = LEARNING_RATE
    epochs: int = EPOCHS
    bootstrap: bool = True
    record_loss: bool = False
    optimizer: str = "lbfgs"

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}")
        if self.n_members < 1 or self.epochs < 0 or not self.learning_rate > 0:
            raise ParameterError("need n_members >= 1, epochs >= 0, learning_rate > 0")


@dataclass(frozen=True)
class Ensemble:
    spec: MlpSpec
    weights: tuple = field(repr=False)  # per layer, shape (M, fan_in, fan_out)
    biases: tuple = field(repr=False)  # per layer, shape (M, fan_out)
    seeds: tuple = ()
    loss_history: np.ndarray | None = field(default=None, repr=False)  # (iters + 1, M)

    @property
    def n_members(self):
        return self.weights[0].shape[0]

    @property
    def members(self):
        return [([w[m] for w in self.weights], [b[m] for b in self.biases])
                for m in range(self.n_members)]


def xavier_init(spec, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-a, a, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(weights, biases, x):
    """Activations per layer (input broadcast over members) and output logits."""
    acts = [x]
    h = x
    for w, b in zip(weights[:-1], biases[:-1]):
        h = expit(h @ w + b[..., None, :])
        acts.append(h)
    logits = h @ weights[-1] + biases[-1][..., None, :]
    return acts, logits


def loss_and_grad(weights, biases, x, y, sample_weight=None):
    """Weighted mean cross-entropy and its gradients.

    Works for a single net (weights of shape (fan_in, fan_out)) or a stack
    (leading member axis); ``sample_weight`` broadcasts like the logits'
    leading axes and defaults to uniform.
    """
    acts, logits = _forward(weights, biases, x)
    n = x.shape[0]
    c = logits.shape[-1]
    onehot = np.eye(c)[y]
    if sample_weight is None:
        sample_weight = np.full(logits.shape[:-1], 1.0 / n)
    else:
        sample_weight = np.asarray(sample_weight, dtype=np.float64)
        sample_weight = sample_weight / sample_weight.sum(axis=-1, keepdims=True)
    logp = log_softmax(logits, axis=-1)
    loss = -(sample_weight * (onehot * logp).sum(axis=-1)).sum(axis=-1)
    delta = (np.exp(logp) - onehot) * sample_weight[..., None]
    gw, gb = [None] * len(weights), [None] * len(weights)
    for layer in range(len(weights) - 1, -1, -1):
        a = acts[layer]
        gw[layer] = np.swapaxes(a, -1, -2) @ delta if a.ndim == delta.ndim else a.T @ delta
        gb[layer] = delta.sum(axis=-2)
        if layer:
            back = delta @ np.swapaxes(weights[layer], -1, -2)
            delta = back * a * (1.0 - a)
    return loss, gw, gb


def train_ensemble(spec, features, labels, config=TrainConfig(), seed=0):
    """Full-batch gradient descent on cross-entropy, one bootstrap per member."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != spec.d:
        raise InputError(f"features must be (n, {spec.d})")
    if x.shape[0] < 1 or y.shape != (x.shape[0],):
        raise InputError("need at least one labelled sample with one label per row")
    if y.min() < 0 or y.max() >= spec.n_classes:
        raise InputError(f"labels outside [0, {spec.n_classes})")
    if np.unique(y).size == 1:
        warnings.warn("all labelled samples share one class; predictions will be near-constant",
                      DegenerateLabelsWarning, stacklevel=2)
    n = x.shape[0]
    m = config.n_members
    children = np.random.SeedSequence(seed).spawn(m)
    inits = []
    counts = np.empty((m, n))
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        inits.append(xavier_init(spec, rng))
        if config.bootstrap:
            counts[i] = np.bincount(rng.integers(0, n, size=n), minlength=n)
        else:
            counts[i] = 1.0
    n_layers = len(spec.layer_sizes) - 1
    weights = [np.stack([w[layer] for w, _ in inits]) for layer in range(n_layers)]
    biases = [np.stack([b[layer] for _, b in inits]) for layer in range(n_layers)]
    sw = counts / counts.sum(axis=1, keepdims=True)
    if config.optimizer == "gd":
        history = _gradient_descent(weights, biases, x, y, sw, config)
    else:
        weights, biases, history = _lbfgs(weights, biases, x, y, sw, config)
    seeds = tuple(int(c.generate_state(1)[0]) for c in children)
    return Ensemble(spec, tuple(weights), tuple(biases), seeds, history)


def _gradient_descent(weights, biases, x, y, sw, config):
    lr = config.learning_rate
    history = [] if config.record_loss else None
    for _ in range(config.epochs):
        loss, gw, gb = loss_and_grad(weights, biases, x, y, sw)
        if history is not None:
            history.append(loss)
        for layer in range(len(weights)):
            weights[layer] -= lr * gw[layer]
            biases[layer] -= lr * gb[layer]
    if history is not None:
        history.append(loss_and_grad(weights, biases, x, y, sw)[0])
        return np.array(history)
    return None


def _lbfgs(weights, biases, x, y, sw, config):
    arrays = list(weights) + list(biases)
    shapes = [a.shape for a in arrays]
    sizes = [a.size for a in arrays]
    n_layers = len(weights)

    def unpack(theta):
        parts = np.split(theta, np.cumsum(sizes)[:-1])
        out = [p.reshape(s) for p, s in zip(parts, shapes)]
        return out[:n_layers], out[n_layers:]

    def objective(theta):
        w, b = unpack(theta)
        loss, gw, gb = loss_and_grad(w, b, x, y, sw)
        return float(loss.sum()), np.concatenate([g.ravel() for g in gw + gb])

    history = [] if config.record_loss else None

    def record(theta):
        w, b = unpack(theta)
        history.append(loss_and_grad(w, b, x, y, sw)[0])

    theta0 = np.concatenate([a.ravel() for a in arrays])
    if history is not None:
        record(theta0)
    if config.epochs > 0:
        res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                       callback=record if history is not None else None,
                       options=dict(maxiter=config.epochs))
        theta0 = res.x
    w, b = unpack(theta0)
    return w, b, None if history is None else np.array(history)


def member_proba(ens, features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != ens.spec.d:
        raise InputError(f"features must be (n, {ens.spec.d})")
    _, logits = _forward(ens.weights, ens.biases, x)
    return softmax(logits, axis=-1)


def predict_proba(ens, features):
    """Mean of the members' softmax outputs, shape (N, C)."""
    return member_proba(ens, features).mean(axis=0)


def predict(ens, features):
    return np.argmax(predict_proba(ens, features), axis=1)


def entropy(p):
    """Row-wise Shannon entropy in nats with 0 log 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return np.maximum(-terms.sum(axis=-1), 0.0)


def uncertainty(ens, features):
    return entropy(predict_proba(ens, features))


def accuracy(ens, features, labels):
    return float(np.mean(predict(ens, features) == np.asarray(labels)))
