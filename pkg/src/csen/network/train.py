"""Loss, Adam and the mini-batch training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, ParameterError, TrainingError
from ..sparse import ClassDecision, decide
from .model import NetworkModel


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 15
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterError(f"learning rate must be positive, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ParameterError("Adam betas must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ParameterError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update, applied in place.

    Returns ``(params, state)`` for convenience.
    """
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, p in params.items():
        g = grads[key]
        if key not in state.m:
            state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        m, v = state.m[key], state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.epsilon)).astype(p.dtype)
    return params, state


def softmax(scores):
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(scores, targets):
    """Mean cross-entropy and its gradient w.r.t. the scores."""
    scores = np.asarray(scores)
    targets = np.asarray(targets)
    n = scores.shape[0]
    z = scores - scores.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), targets]))
    dscores = softmax(scores)
    dscores[np.arange(n), targets] -= 1.0
    return loss, dscores / n


def loss_and_gradients(model: NetworkModel, x, targets):
    scores = model.forward(x, cache=True)
    loss, dscores = softmax_cross_entropy(scores, targets)
    model.backward(dscores.astype(model.dtype, copy=False))
    return loss, dict(model.gradients())


def backward(model: NetworkModel, plane, target_class):
    """Gradients of the cross-entropy of one sample w.r.t. every parameter."""
    x = np.asarray(plane)[None, ...]
    _, grads = loss_and_gradients(model, x, np.array([target_class]))
    return grads


def train(model: NetworkModel, X, y, config: TrainConfig = TrainConfig()) -> list:
    """Train ``model`` in place; returns the mean loss of each epoch."""
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise DimensionError("empty training set")
    if y.shape != (X.shape[0],):
        raise DimensionError(f"{y.shape} labels for {X.shape[0]} samples")
    rng = np.random.default_rng(config.seed)
    params = dict(model.parameters())
    state = AdamState()
    history = []
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_gradients(model, X[idx], y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            adam_step(params, grads, state, config)
            total += loss * idx.size
        history.append(total / n)
    return history


def predict_scores(model: NetworkModel, X, chunk: int = 256) -> np.ndarray:
    X = np.asarray(X)
    out = [model.forward(X[i:i + chunk]) for i in range(0, X.shape[0], chunk)]
    if not out:
        return np.zeros((0, model.n_classes), dtype=model.dtype)
    return np.concatenate(out)


def predict(model: NetworkModel, plane) -> ClassDecision:
    scores = model.forward(np.asarray(plane)[None, ...])[0]
    return decide(scores, lower_is_better=False)


def support_probability_map(model: NetworkModel, plane) -> np.ndarray:
    """Logistic of the final pre-head map at the live cells, in atom order."""
    fmap = model.final_map(np.asarray(plane)[None, ...])[0].astype(np.float64)
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(-fmap))
    # Large map values round to exactly 0 or 1; keep p inside the open interval.
    p = np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return model.layout.flatten(p)
