"""One-hidden-layer softmax classifiers trained by mini-batch gradient descent.

The same architecture plays every model role in the pipeline: the scene
encoder, the per-scene compressed models, the decision head, and the deep
baseline. Capacity is the only dial, set through ``hidden_dim``. The hidden
(penultimate) activation doubles as the embedding of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergedError

MODEL_FORMAT = 1


@dataclass
class VectorClassifier:
    """x -> relu(W1 x + b1) -> softmax(W2 h + b2).

    Parameters are float64; ``W1`` is (hidden, input), ``W2`` is (output, hidden).
    """

    input_dim: int
    hidden_dim: int
    output_dim: int
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray


@dataclass
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int
    l2: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.l2 < 0:
            raise ConfigError("l2 must be non-negative")


@dataclass
class TrainReport:
    final_loss: float
    epochs_run: int
    losses: list = field(default_factory=list)


@dataclass
class Gradients:
    dW1: np.ndarray
    db1: np.ndarray
    dW2: np.ndarray
    db2: np.ndarray


def new_classifier(input_dim: int, hidden_dim: int, output_dim: int, seed: int) -> VectorClassifier:
    """Fresh classifier with Glorot-uniform weights and zero biases."""
    if min(input_dim, hidden_dim, output_dim) < 1:
        raise ConfigError("all dimensions must be positive")
    rng = np.random.default_rng(seed)

    def glorot(rows, cols):
        limit = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-limit, limit, size=(rows, cols))

    return VectorClassifier(
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        output_dim=output_dim,
        W1=glorot(hidden_dim, input_dim),
        b1=np.zeros(hidden_dim),
        W2=glorot(output_dim, hidden_dim),
        b2=np.zeros(output_dim),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax along the last axis; exact for |logit| <= 500."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def forward(model: VectorClassifier, features: np.ndarray):
    """Single-sample forward pass returning (hidden activation, class probabilities)."""
    x = np.asarray(features, dtype=float)
    if x.shape != (model.input_dim,):
        raise ConfigError(
            f"feature vector has shape {x.shape}, expected ({model.input_dim},)"
        )
    hidden = np.maximum(model.W1 @ x + model.b1, 0.0)
    probs = softmax(model.W2 @ hidden + model.b2)
    return hidden, probs


def forward_batch(model: VectorClassifier, X: np.ndarray):
    """(n, input_dim) batch forward; returns hidden (n, hidden) and probs (n, output)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ConfigError(f"batch has shape {X.shape}, expected (*, {model.input_dim})")
    H = np.maximum(X @ model.W1.T + model.b1, 0.0)
    P = softmax(H @ model.W2.T + model.b2)
    return H, P


def predict(model: VectorClassifier, features: np.ndarray) -> int:
    """Argmax class; ties resolve to the lowest index."""
    _, probs = forward(model, features)
    return int(np.argmax(probs))


def predict_batch(model: VectorClassifier, X: np.ndarray) -> np.ndarray:
    _, P = forward_batch(model, X)
    return np.argmax(P, axis=1)


def embed(model: VectorClassifier, features: np.ndarray) -> np.ndarray:
    hidden, _ = forward(model, features)
    return hidden


def embed_batch(model: VectorClassifier, X: np.ndarray) -> np.ndarray:
    H, _ = forward_batch(model, X)
    return H


def cross_entropy(model: VectorClassifier, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> float:
    """Mean cross-entropy over the batch plus (l2/2)*||W||^2 on the weight matrices."""
    _, P = forward_batch(model, X)
    n = X.shape[0]
    nll = -np.log(np.maximum(P[np.arange(n), y], 1e-300))
    penalty = 0.5 * l2 * (np.sum(model.W1**2) + np.sum(model.W2**2))
    return float(np.mean(nll) + penalty)


def gradient(model: VectorClassifier, X: np.ndarray, y: np.ndarray, l2: float = 0.0) -> Gradients:
    """Backpropagated gradient of `cross_entropy` (mean over the batch)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise ConfigError("gradient needs a non-empty batch")
    n = X.shape[0]
    Z1 = X @ model.W1.T + model.b1
    H = np.maximum(Z1, 0.0)
    P = softmax(H @ model.W2.T + model.b2)
    delta = P.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    dW2 = delta.T @ H + l2 * model.W2
    db2 = delta.sum(axis=0)
    dH = delta @ model.W2
    dZ1 = dH * (Z1 > 0.0)
    dW1 = dZ1.T @ X + l2 * model.W1
    db1 = dZ1.sum(axis=0)
    return Gradients(dW1, db1, dW2, db2)


def train(model: VectorClassifier, X: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> TrainReport:
    """Mini-batch gradient descent on cross-entropy; mutates ``model`` in place.

    Shuffling comes from a PRNG seeded with ``cfg.seed``, so equal seeds give
    bit-identical parameters. The loss recorded for each epoch is the full
    training-set loss after that epoch's updates.
    """
    cfg.validate()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.shape[0] == 0:
        raise ConfigError("training set is empty")
    if X.shape[0] != y.shape[0]:
        raise ConfigError("features and labels disagree in length")
    if y.min() < 0 or y.max() >= model.output_dim:
        raise ConfigError("labels must lie in [0, output_dim)")

    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            g = gradient(model, X[idx], y[idx], cfg.l2)
            model.W1 -= cfg.learning_rate * g.dW1
            model.b1 -= cfg.learning_rate * g.db1
            model.W2 -= cfg.learning_rate * g.dW2
            model.b2 -= cfg.learning_rate * g.db2
        loss = cross_entropy(model, X, y, cfg.l2)
        if not np.isfinite(loss):
            raise DivergedError(epoch, loss)
        losses.append(loss)
    return TrainReport(final_loss=losses[-1], epochs_run=cfg.epochs, losses=losses)


def param_count(model: VectorClassifier) -> int:
    return model.W1.size + model.b1.size + model.W2.size + model.b2.size


def model_to_dict(model: VectorClassifier) -> dict:
    """JSON-ready form: dims plus flat row-major parameter arrays."""
    return {
        "model_format": MODEL_FORMAT,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "output_dim": model.output_dim,
        "W1": [float(v) for v in model.W1.ravel()],
        "b1": [float(v) for v in model.b1],
        "W2": [float(v) for v in model.W2.ravel()],
        "b2": [float(v) for v in model.b2],
    }


def model_from_dict(d: dict) -> VectorClassifier:
    if d.get("model_format") != MODEL_FORMAT:
        raise ConfigError(f"unsupported model format {d.get('model_format')!r}")
    i, h, o = d["input_dim"], d["hidden_dim"], d["output_dim"]
    W1 = np.asarray(d["W1"], dtype=float).reshape(h, i)
    b1 = np.asarray(d["b1"], dtype=float)
    W2 = np.asarray(d["W2"], dtype=float).reshape(o, h)
    b2 = np.asarray(d["b2"], dtype=float)
    if b1.shape != (h,) or b2.shape != (o,):
        raise ConfigError("bias arrays disagree with declared dims")
    return VectorClassifier(i, h, o, W1, b1, W2, b2)
