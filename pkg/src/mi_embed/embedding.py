"""Metric-embedding encoders trained with soft-margin batch-hard triplet loss.

The encoder is a feed-forward net mapping feature vectors to a latent space
in which samples of the same user end up close together. Training draws
P-user x K-sample batches, picks the hardest positive and hardest negative
for every anchor, and minimizes softplus(hardest_pos - hardest_neg) with
plain SGD. Distances are L2 throughout.

``MetricEmbedding`` wraps the trainer in the scikit-learn estimator API so
it composes with pipelines; the functional entry points underneath operate
on user -> sample-matrix mappings.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import nn
from ._validation import as_float_matrix, as_float_vector
from .data import UserCluster
from .exceptions import (
    DegenerateBatchError,
    DimensionMismatchError,
    SizingError,
    TrainingDivergedError,
)


def pairwise_l2(Z: np.ndarray) -> np.ndarray:
    """Full (n, n) matrix of L2 distances between row vectors."""
    diffs = Z[:, None, :] - Z[None, :, :]
    return np.sqrt((diffs**2).sum(axis=-1))


def batch_hard_distances(embeddings, labels):
    """Hardest-positive and hardest-negative distance per anchor.

    Positives share the anchor's label (the anchor itself is excluded);
    negatives carry a different label. Returns (d_pos, d_neg, pos_idx,
    neg_idx); ties resolve to the lowest index.
    """
    Z = as_float_matrix(embeddings, name="embeddings")
    labels = np.asarray(labels)
    n = Z.shape[0]
    if labels.shape != (n,):
        raise DimensionMismatchError(
            f"labels shape {labels.shape} != ({n},)"
        )
    if len(np.unique(labels)) < 2:
        raise DegenerateBatchError("batch holds a single user")
    same = labels[:, None] == labels[None, :]
    if not np.all(same.sum(axis=1) >= 2):
        raise DegenerateBatchError("every user in a batch needs >= 2 samples")

    D = pairwise_l2(Z)
    pos_mask = same & ~np.eye(n, dtype=bool)
    neg_mask = ~same
    pos_idx = np.where(pos_mask, D, -np.inf).argmax(axis=1)
    neg_idx = np.where(neg_mask, D, np.inf).argmin(axis=1)
    rows = np.arange(n)
    return D[rows, pos_idx], D[rows, neg_idx], pos_idx, neg_idx


def batch_hard_loss(embeddings, labels):
    """Soft-margin batch-hard loss and its exact gradient w.r.t. embeddings.

    loss = mean over anchors of softplus(hardest_pos - hardest_neg), with
    softplus(z) = log(1 + e^z). Always positive; equals log(2) when all
    embeddings coincide.
    """
    Z = as_float_matrix(embeddings, name="embeddings")
    d_pos, d_neg, pos_idx, neg_idx = batch_hard_distances(Z, labels)
    n = Z.shape[0]
    margins = d_pos - d_neg
    loss = float(np.logaddexp(0.0, margins).mean())

    # d softplus(m)/dm = sigmoid(m); distance gradients are unit difference
    # vectors, taken as zero when two points coincide exactly.
    weight = expit(margins) / n
    grad = np.zeros_like(Z)
    for a in range(n):
        p, ng = pos_idx[a], neg_idx[a]
        if d_pos[a] > 0.0:
            u = (Z[a] - Z[p]) / d_pos[a]
            grad[a] += weight[a] * u
            grad[p] -= weight[a] * u
        if d_neg[a] > 0.0:
            v = (Z[a] - Z[ng]) / d_neg[a]
            grad[a] -= weight[a] * v
            grad[ng] += weight[a] * v
    return loss, grad


@dataclass(frozen=True)
class EncoderTrainingConfig:
    """Hyperparameters for one encoder training run."""

    epochs: int = 40
    lr: float = 0.05
    momentum: float = 0.0
    users_per_batch: int = 8
    samples_per_user: int = 4
    hidden_dims: tuple[int, ...] = (32, 32)
    embedding_dim: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.users_per_batch < 2 or self.samples_per_user < 2:
            raise SizingError("need epochs >= 0, P >= 2, K >= 2")
        if self.embedding_dim < 2:
            raise SizingError("embedding_dim must be >= 2")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))


@dataclass(frozen=True)
class Encoder:
    """A trained (or freshly initialized) embedding net plus provenance."""

    net: nn.DenseNet
    config: EncoderTrainingConfig
    encoder_id: str = "encoder"
    final_epoch_loss: float | None = None

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    @property
    def embedding_dim(self) -> int:
        return self.net.output_dim


def _as_user_arrays(data) -> dict[str, np.ndarray]:
    if isinstance(data, Mapping):
        items = data.items()
        out = {}
        for user, samples in items:
            if isinstance(samples, np.ndarray):
                out[user] = as_float_matrix(samples, name=f"user {user}")
            else:
                out[user] = np.stack([np.asarray(s.features) for s in samples])
        return out
    # otherwise an iterable of UserCluster
    return {c.user_id: c.feature_matrix() for c in data}


def _build_batches(users, rng, per_batch):
    """Chunk a shuffled user list into ceil(n/P) batches of >= 2 users.

    A short final chunk is padded with distinct users from the head of the
    shuffle so batches stay rectangular.
    """
    order = [users[i] for i in rng.permutation(len(users))]
    n = len(order)
    size = min(per_batch, n)
    batches = []
    for start in range(0, n, per_batch):
        chunk = list(order[start : start + per_batch])
        if len(chunk) < size:
            in_chunk = set(chunk)
            chunk += [u for u in order if u not in in_chunk][: size - len(chunk)]
        batches.append(chunk)
    return batches


def train_encoder(
    data, config: EncoderTrainingConfig, encoder_id: str = "encoder"
) -> Encoder:
    """Train an encoder with PK-batched batch-hard SGD.

    ``data`` maps user ids to (m_u, d) sample matrices, or is an iterable of
    UserCluster. Users are shuffled each epoch; K samples per user are drawn
    without replacement (with replacement when a user has fewer than K).
    Deterministic per config seed. Raises TrainingDivergedError with the
    epoch index if the loss goes non-finite.
    """
    arrays = _as_user_arrays(data)
    users = sorted(arrays)
    if len(users) < 2:
        raise SizingError("training needs at least 2 users")
    dims = {a.shape[1] for a in arrays.values()}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed feature dimensions {sorted(dims)}")
    d = dims.pop()

    rng = np.random.default_rng(config.seed)
    net = nn.init_net(
        (d, *config.hidden_dims, config.embedding_dim),
        seed=int(rng.integers(2**31)),
    )
    optimizer = nn.SgdOptimizer(config.lr, config.momentum)
    K = config.samples_per_user
    final_loss = None
    for epoch in range(config.epochs):
        epoch_losses = []
        for batch_users in _build_batches(users, rng, config.users_per_batch):
            rows = []
            labels = []
            for ui, user in enumerate(batch_users):
                m = arrays[user].shape[0]
                idx = rng.choice(m, size=K, replace=m < K)
                rows.append(arrays[user][idx])
                labels.extend([ui] * K)
            X = np.concatenate(rows)
            embedded, cache = nn.forward_cached(net, X)
            loss, grad_z = batch_hard_loss(embedded, np.array(labels))
            if not math.isfinite(loss):
                raise TrainingDivergedError("non-finite loss", epoch=epoch)
            grads = nn.backward(net, grad_z, cache)
            net = optimizer.step(net, grads)
            epoch_losses.append(loss)
        if epoch == config.epochs - 1:
            final_loss = float(np.mean(epoch_losses))
    return Encoder(net, config, encoder_id, final_loss)


def embed(encoder: Encoder, sample) -> np.ndarray:
    """Black-box embedding of a single feature vector."""
    features = sample.features if hasattr(sample, "features") else sample
    vec = as_float_vector(features, name="sample", length=encoder.input_dim)
    return nn.forward(encoder.net, vec)


def embed_user(encoder: Encoder, cluster: UserCluster) -> np.ndarray:
    """Embed every sample of a cluster, preserving sample order."""
    X = cluster.feature_matrix()
    if X.shape[1] != encoder.input_dim:
        raise DimensionMismatchError(
            f"user {cluster.user_id}: feature dim {X.shape[1]} != "
            f"encoder input dim {encoder.input_dim}"
        )
    return nn.forward_batch(encoder.net, X)


def save_encoder(encoder: Encoder, path):
    """Checkpoint = nn-core document plus a training-config block."""
    cfg = encoder.config
    nn.save_checkpoint(
        encoder.net,
        path,
        extra={
            "encoder_id": encoder.encoder_id,
            "final_epoch_loss": encoder.final_epoch_loss,
            "training_config": {
                "epochs": cfg.epochs,
                "lr": cfg.lr,
                "momentum": cfg.momentum,
                "users_per_batch": cfg.users_per_batch,
                "samples_per_user": cfg.samples_per_user,
                "hidden_dims": list(cfg.hidden_dims),
                "embedding_dim": cfg.embedding_dim,
                "seed": cfg.seed,
            },
        },
    )


def load_encoder(path) -> Encoder:
    net, extra = nn.load_checkpoint(path)
    cfg_doc = dict(extra.get("training_config", {}))
    if "hidden_dims" in cfg_doc:
        cfg_doc["hidden_dims"] = tuple(cfg_doc["hidden_dims"])
    config = EncoderTrainingConfig(**cfg_doc)
    return Encoder(
        net=net,
        config=config,
        encoder_id=extra.get("encoder_id", "encoder"),
        final_epoch_loss=extra.get("final_epoch_loss"),
    )


class MetricEmbedding(TransformerMixin, BaseEstimator):
    """Scikit-learn style wrapper around the batch-hard encoder trainer.

    fit(X, y) treats y as user identities; transform(X) returns embeddings.

    >>> emb = MetricEmbedding(epochs=5).fit(X, user_ids)
    >>> Z = emb.transform(X)
    """

    def __init__(
        self,
        embedding_dim=8,
        hidden_dims=(32, 32),
        epochs=40,
        lr=0.05,
        momentum=0.0,
        users_per_batch=8,
        samples_per_user=4,
        seed=0,
    ):
        self.embedding_dim = embedding_dim
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.users_per_batch = users_per_batch
        self.samples_per_user = samples_per_user
        self.seed = seed

    def _config(self) -> EncoderTrainingConfig:
        return EncoderTrainingConfig(
            epochs=self.epochs,
            lr=self.lr,
            momentum=self.momentum,
            users_per_batch=self.users_per_batch,
            samples_per_user=self.samples_per_user,
            hidden_dims=tuple(self.hidden_dims),
            embedding_dim=self.embedding_dim,
            seed=self.seed,
        )

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise DimensionMismatchError(
                f"y shape {y.shape} != ({X.shape[0]},)"
            )
        groups: dict[str, list[int]] = {}
        for i, label in enumerate(y):
            groups.setdefault(str(label), []).append(i)
        data = {user: X[idx] for user, idx in groups.items()}
        self.encoder_ = train_encoder(
            data, self._config(), encoder_id=f"metric-embedding-{self.seed}"
        )
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "encoder_")
        X = as_float_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise DimensionMismatchError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return nn.forward_batch(self.encoder_.net, X)
