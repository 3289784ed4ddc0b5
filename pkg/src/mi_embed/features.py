"""Cluster-compactness features used as attack inputs.

For a user's k embeddings the attack uses two numbers: the average L2
distance to the embedding centroid (``c_u``) and the average L2 distance
over all unordered pairs (``p_u``). Both are computed on encoder outputs,
never raw inputs. For any k >= 2 they satisfy c_u <= p_u <= 2 * c_u.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import as_float_matrix
from .data import Sample, UserCluster
from .embedding import Encoder, embed_user
from .exceptions import CsvFormatError, InsufficientSamplesError

FEATURE_LABELS = ("member", "nonmember", "unknown")


def _as_points(embeddings) -> np.ndarray:
    Z = as_float_matrix(embeddings, name="embeddings")
    if Z.shape[0] < 2:
        raise InsufficientSamplesError(
            f"compactness features need >= 2 embeddings, got {Z.shape[0]}"
        )
    return Z


def center_distance(embeddings) -> float:
    """Mean L2 distance of each embedding to the arithmetic-mean centroid."""
    Z = _as_points(embeddings)
    center = Z.mean(axis=0)
    return float(np.linalg.norm(Z - center, axis=1).mean())


def pairwise_distance(embeddings) -> float:
    """Mean L2 distance over all k(k-1)/2 unordered embedding pairs."""
    Z = _as_points(embeddings)
    diffs = Z[:, None, :] - Z[None, :, :]
    dists = np.sqrt((diffs**2).sum(axis=-1))
    iu = np.triu_indices(Z.shape[0], k=1)
    return float(dists[iu].mean())


@dataclass(frozen=True)
class AttackFeatures:
    """The (c_u, p_u) pair plus provenance for one user."""

    user_id: str
    c_u: float
    p_u: float
    k_used: int
    encoder_id: str


def extract_features(
    encoder: Encoder, cluster: UserCluster, k: int, rng_seed: int = 0
) -> AttackFeatures:
    """Embed a seeded k-subsample of a user's cluster and measure compactness.

    Uses all samples (no subsampling) when the cluster has exactly k; the
    subsample is uniform without replacement otherwise.
    """
    if k < 2:
        raise InsufficientSamplesError(f"k must be >= 2, got {k}")
    if cluster.n_samples < k:
        raise InsufficientSamplesError(
            f"user {cluster.user_id}: has {cluster.n_samples} samples, needs {k}"
        )
    if cluster.n_samples == k:
        subset = cluster
    else:
        rng = np.random.default_rng(rng_seed)
        idx = np.sort(rng.choice(cluster.n_samples, size=k, replace=False))
        subset = UserCluster(
            cluster.user_id, tuple(cluster.samples[i] for i in idx)
        )
    Z = embed_user(encoder, subset)
    return AttackFeatures(
        user_id=cluster.user_id,
        c_u=center_distance(Z),
        p_u=pairwise_distance(Z),
        k_used=k,
        encoder_id=encoder.encoder_id,
    )


def features_from_samples(
    encoder: Encoder, user_id: str, samples, k: int, rng_seed: int = 0
) -> AttackFeatures:
    """extract_features over an explicit sample pool (e.g. a mixed pool)."""
    return extract_features(
        encoder, UserCluster(user_id, tuple(samples)), k, rng_seed
    )


FEATURE_CACHE_HEADER = ["user_id", "encoder_id", "k_used", "c_u", "p_u", "label"]


def write_feature_cache(rows, path):
    """Persist (AttackFeatures, label) pairs; label in {member, nonmember, unknown}."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_CACHE_HEADER)
        for feats, label in rows:
            if label not in FEATURE_LABELS:
                raise CsvFormatError(f"invalid label {label!r}")
            writer.writerow(
                [
                    feats.user_id,
                    feats.encoder_id,
                    feats.k_used,
                    repr(feats.c_u),
                    repr(feats.p_u),
                    label,
                ]
            )


def read_feature_cache(path) -> list[tuple[AttackFeatures, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURE_CACHE_HEADER:
            raise CsvFormatError(f"malformed header {header!r}")
        out = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(FEATURE_CACHE_HEADER):
                raise CsvFormatError("wrong field count", row=row_no)
            user_id, encoder_id, k_used, c_u, p_u, label = row
            if label not in FEATURE_LABELS:
                raise CsvFormatError(f"invalid label {label!r}", row=row_no)
            try:
                feats = AttackFeatures(
                    user_id, float(c_u), float(p_u), int(k_used), encoder_id
                )
            except ValueError:
                raise CsvFormatError("non-numeric feature value", row=row_no) from None
            out.append((feats, label))
    return out


class CompactnessFeatures(TransformerMixin, BaseEstimator):
    """Transformer from user clusters to (c_u, p_u) rows.

    Stateless apart from its parameters; ``transform`` takes a sequence of
    UserCluster and returns an (n_users, 2) array ordered like the input.
    """

    def __init__(self, encoder=None, k=8, seed=0):
        self.encoder = encoder
        self.k = k
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def transform(self, clusters) -> np.ndarray:
        if self.encoder is None:
            raise InsufficientSamplesError("CompactnessFeatures needs an encoder")
        rows = []
        for cluster in clusters:
            feats = extract_features(self.encoder, cluster, self.k, self.seed)
            rows.append([feats.c_u, feats.p_u])
        return np.array(rows, dtype=np.float64).reshape(len(rows), 2)
