"""The membership classifier trained on shadow-labeled compactness features.

A shallow net with three fully connected layers (two relu hidden layers and
a single-logit output) consumes z-scored (c_u, p_u) rows. Feature modes
``c_only`` / ``p_only`` / ``both`` cover the single-feature ablations. The
decision threshold stays at logit 0 so no victim data is used for tuning.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import nn
from ._validation import as_float_matrix, derive_seed
from .data import UserCluster
from .embedding import Encoder
from .exceptions import (
    CheckpointError,
    DegenerateDataError,
    DimensionMismatchError,
    TrainingDivergedError,
)
from .features import extract_features
from .shadows import AttackDataset

FEATURE_MODES = ("c_only", "p_only", "both")
_MODE_COLUMNS = {"c_only": [0], "p_only": [1], "both": [0, 1]}


class MembershipClassifier(ClassifierMixin, BaseEstimator):
    """Binary membership classifier over (c_u, p_u) feature rows.

    ``fit`` expects X with exactly two columns, c_u then p_u, and y in
    {0, 1} with 1 = member; the feature mode selects which columns feed the
    net. Standardization statistics come from the training rows only.
    """

    def __init__(
        self,
        feature_mode="both",
        hidden_dims=(16, 16),
        epochs=300,
        lr=0.1,
        momentum=0.9,
        seed=0,
        decision_threshold=0.0,
    ):
        self.feature_mode = feature_mode
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.seed = seed
        self.decision_threshold = decision_threshold

    def _columns(self) -> list[int]:
        if self.feature_mode not in FEATURE_MODES:
            raise DegenerateDataError(f"unknown feature_mode {self.feature_mode!r}")
        return _MODE_COLUMNS[self.feature_mode]

    def _check_X(self, X) -> np.ndarray:
        X = as_float_matrix(X)
        if X.shape[1] != 2:
            raise DimensionMismatchError(
                f"X must have exactly 2 columns (c_u, p_u), got {X.shape[1]}"
            )
        return X

    def fit(self, X, y):
        X = self._check_X(X)
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise DimensionMismatchError(f"y shape {y.shape} != ({X.shape[0]},)")
        y = y.astype(np.float64)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DegenerateDataError("labels must be 0 (nonmember) or 1 (member)")
        if X.shape[0] < 10:
            raise DegenerateDataError(
                f"attack training needs >= 10 rows, got {X.shape[0]}"
            )
        if len(np.unique(y)) < 2:
            raise DegenerateDataError("attack training needs both labels")

        cols = self._columns()
        F = X[:, cols]
        self.means_ = F.mean(axis=0)
        self.stds_ = F.std(axis=0)
        if np.any(self.stds_ <= 0.0):
            raise DegenerateDataError("a selected feature column has zero variance")
        Fz = (F - self.means_) / self.stds_

        net = nn.init_net(
            (len(cols), *self.hidden_dims, 1), seed=derive_seed(self.seed, "attack")
        )
        optimizer = nn.SgdOptimizer(self.lr, self.momentum)
        n = Fz.shape[0]
        loss = None
        for epoch in range(self.epochs):
            logits, cache = nn.forward_cached(net, Fz)
            logits = logits[:, 0]
            # logistic loss, stable form: mean(softplus(logit) - y*logit)
            loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
            if not np.isfinite(loss):
                raise TrainingDivergedError("non-finite loss", epoch=epoch)
            grad_logit = (expit(logits) - y) / n
            grads = nn.backward(net, grad_logit[:, None], cache)
            net = optimizer.step(net, grads)
        self.net_ = net
        self.final_loss_ = loss
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = 2
        return self

    def decision_function(self, X) -> np.ndarray:
        """Raw logit per row; positive means member at the default threshold."""
        check_is_fitted(self, "net_")
        X = self._check_X(X)
        Fz = (X[:, self._columns()] - self.means_) / self.stds_
        return nn.forward_batch(self.net_, Fz)[:, 0]

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        return self.classes_[(scores > self.decision_threshold).astype(int)]

    def predict_proba(self, X) -> np.ndarray:
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])


def train_attack(
    dataset: AttackDataset, feature_mode="both", seed=0, **hyperparams
) -> MembershipClassifier:
    """Fit the membership classifier on a shadow attack dataset."""
    model = MembershipClassifier(feature_mode=feature_mode, seed=seed, **hyperparams)
    return model.fit(dataset.feature_matrix(), dataset.labels01())


def infer_user(
    model: MembershipClassifier,
    victim: Encoder,
    cluster: UserCluster,
    k: int,
    seed: int = 0,
) -> tuple[str, float]:
    """User-level verdict against the victim encoder.

    Composes feature extraction with the classifier; returns
    ("member" | "nonmember", logit score). Verdict is member iff the score
    exceeds the decision threshold.
    """
    feats = extract_features(victim, cluster, k, rng_seed=seed)
    score = float(model.decision_function([[feats.c_u, feats.p_u]])[0])
    verdict = "member" if score > model.decision_threshold else "nonmember"
    return verdict, score


def save_attack_model(model: MembershipClassifier, path):
    check_is_fitted(model, "net_")
    nn.save_checkpoint(
        model.net_,
        path,
        extra={
            "attack_model": {
                "feature_mode": model.feature_mode,
                "hidden_dims": list(model.hidden_dims),
                "epochs": model.epochs,
                "lr": model.lr,
                "momentum": model.momentum,
                "seed": model.seed,
                "decision_threshold": model.decision_threshold,
                "means": list(model.means_),
                "stds": list(model.stds_),
                "final_loss": model.final_loss_,
            }
        },
    )


def load_attack_model(path) -> MembershipClassifier:
    net, extra = nn.load_checkpoint(path)
    try:
        block = extra["attack_model"]
        model = MembershipClassifier(
            feature_mode=block["feature_mode"],
            hidden_dims=tuple(block["hidden_dims"]),
            epochs=block["epochs"],
            lr=block["lr"],
            momentum=block["momentum"],
            seed=block["seed"],
            decision_threshold=block["decision_threshold"],
        )
        model.net_ = net
        model.means_ = np.array(block["means"], dtype=np.float64)
        model.stds_ = np.array(block["stds"], dtype=np.float64)
        model.final_loss_ = block["final_loss"]
    except KeyError as exc:
        raise CheckpointError(f"attack checkpoint missing field {exc}") from exc
    model.classes_ = np.array([0, 1])
    model.n_features_in_ = 2
    return model
