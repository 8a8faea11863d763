"""Model-ranking head trained on allocation vectors.

Each probed sample yields an allocation vector: bit i marks whether
repository model i handled the sample. A two-layer head on top of the frozen
scene encoder learns to reproduce those vectors with independent sigmoid
outputs (several models can suit a sample at once, and an all-zero row is a
valid "nothing fits" signal), trained with per-coordinate binary
cross-entropy. At inference the head's probabilities rank the repository.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import learners
from .artifacts import read_artifact, require_match, write_artifact
from .errors import ConfigError, DivergedError
from .learners import TrainConfig, VectorClassifier


@dataclass
class DecisionModel:
    backbone: VectorClassifier  # frozen scene encoder
    head: VectorClassifier  # relu hidden + sigmoid outputs, one per model

    @property
    def n(self) -> int:
        return self.head.output_dim


def build_allocation_labels(state):
    """Pools -> (sample_indices, 0/1 label matrix), one row per distinct probed sample."""
    pools = state.pools
    if not pools:
        raise ConfigError("no pools to build labels from")
    length = len(pools[0])
    for pool in pools:
        if len(pool) != length:
            raise ConfigError("pools disagree in length")
    indices = np.array([entry[0] for entry in pools[0]], dtype=int)
    for pool in pools:
        if any(pool[r][0] != indices[r] for r in range(length)):
            raise ConfigError("pools disagree on sample order")
    labels = np.zeros((length, len(pools)))
    for j, pool in enumerate(pools):
        labels[:, j] = [1.0 if bit else 0.0 for _, bit in pool]
    return indices, labels


def _head_forward(head: VectorClassifier, E: np.ndarray):
    Z1 = E @ head.W1.T + head.b1
    H = np.maximum(Z1, 0.0)
    Z2 = H @ head.W2.T + head.b2
    return Z1, H, Z2


def _bce_loss(head, E, V, l2):
    _, _, Z2 = _head_forward(head, E)
    # log(1 + e^z) - v z, summed over coordinates, mean over rows
    per = np.logaddexp(0.0, Z2) - V * Z2
    penalty = 0.5 * l2 * (np.sum(head.W1**2) + np.sum(head.W2**2))
    return float(per.sum(axis=1).mean() + penalty)


def _bce_gradient(head, E, V, l2):
    n = E.shape[0]
    Z1, H, Z2 = _head_forward(head, E)
    delta = (expit(Z2) - V) / n
    dW2 = delta.T @ H + l2 * head.W2
    db2 = delta.sum(axis=0)
    dH = delta @ head.W2
    dZ1 = dH * (Z1 > 0.0)
    dW1 = dZ1.T @ E + l2 * head.W1
    db1 = dZ1.sum(axis=0)
    return dW1, db1, dW2, db2


def train_decision(
    encoder: VectorClassifier,
    ds,
    sample_indices: np.ndarray,
    labels: np.ndarray,
    head_hidden: int,
    cfg: TrainConfig,
) -> DecisionModel:
    """Train the head on frozen-backbone embeddings; the encoder is never touched."""
    cfg.validate()
    if len(sample_indices) == 0:
        raise ConfigError("no labeled rows to train the decision model")
    labels = np.asarray(labels, dtype=float)
    if labels.ndim != 2 or labels.shape[0] != len(sample_indices):
        raise ConfigError("labels must be one allocation vector per sample")
    E = learners.embed_batch(encoder, ds.features[np.asarray(sample_indices, dtype=int)])
    head = learners.new_classifier(encoder.hidden_dim, head_hidden, labels.shape[1], cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    n = E.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            dW1, db1, dW2, db2 = _bce_gradient(head, E[idx], labels[idx], cfg.l2)
            head.W1 -= cfg.learning_rate * dW1
            head.b1 -= cfg.learning_rate * db1
            head.W2 -= cfg.learning_rate * dW2
            head.b2 -= cfg.learning_rate * db2
        loss = _bce_loss(head, E, labels, cfg.l2)
        if not np.isfinite(loss):
            raise DivergedError(epoch, loss)
    return DecisionModel(backbone=encoder, head=head)


def decision_probs(decision: DecisionModel, features: np.ndarray) -> np.ndarray:
    """Per-model suitability probabilities for one sample, each in (0, 1)."""
    e = learners.embed(decision.backbone, features)
    _, _, z = _head_forward(decision.head, e[None, :])
    return expit(z[0])


def rank_models(decision: DecisionModel, features: np.ndarray):
    """(suitability vector, ranking): indices by descending probability, ties by index."""
    probs = decision_probs(decision, features)
    ranking = np.argsort(-probs, kind="stable")
    return probs, ranking


def decision_payload(decision: DecisionModel, encoder_hash: str, repository_hash: str) -> dict:
    return {
        "kind": "decision",
        "encoder_hash": encoder_hash,
        "repository_hash": repository_hash,
        "head": learners.model_to_dict(decision.head),
    }


def save_decision(path, decision, encoder_hash, repository_hash) -> str:
    return write_artifact(path, decision_payload(decision, encoder_hash, repository_hash))


def load_decision(path, encoder: VectorClassifier, encoder_hash: str | None = None,
                  repository_hash: str | None = None):
    body = read_artifact(path, "decision")
    if encoder_hash is not None:
        require_match("encoder", body["encoder_hash"], encoder_hash)
    if repository_hash is not None:
        require_match("repository", body["repository_hash"], repository_hash)
    head = learners.model_from_dict(body["head"])
    if head.input_dim != encoder.hidden_dim:
        raise ConfigError("decision head does not fit the encoder's embedding width")
    return DecisionModel(backbone=encoder, head=head), body
