"""User-level membership inference attacks on metric embedding models.

The toolkit trains feed-forward metric embeddings with soft-margin
batch-hard triplet loss, extracts cluster-compactness features (average
center distance and average pairwise distance) from a target user's
embeddings, and decides membership with a shallow classifier trained on
shadow models. An augmentation-voting baseline and a reproducible
experiment harness round out the package.
"""

__version__ = "0.1.0"

from .attack import (
    MembershipClassifier,
    infer_user,
    load_attack_model,
    save_attack_model,
    train_attack,
)
from .baseline import (
    DEFAULT_UNKNOWN_SPEC,
    AugmentationSpec,
    fit_threshold,
    record_score,
    user_verdict,
)
from .config import ExperimentConfig, default_config, load_config
from .data import (
    MembershipSplit,
    Sample,
    UserCluster,
    generate_synthetic,
    load_csv,
    partition,
    save_csv,
)
from .embedding import (
    Encoder,
    EncoderTrainingConfig,
    MetricEmbedding,
    batch_hard_loss,
    embed,
    embed_user,
    load_encoder,
    save_encoder,
    train_encoder,
)
from .exceptions import MiEmbedError
from .experiment import run_experiment
from .features import (
    AttackFeatures,
    CompactnessFeatures,
    center_distance,
    extract_features,
    pairwise_distance,
)
from .metrics import MetricValues, evaluate
from .report import MetricsReport, render
from .shadows import (
    AttackDataset,
    ShadowConfig,
    build_shadow_splits,
    mix_training_access,
    run_shadows,
)

__all__ = [
    "AttackDataset",
    "AttackFeatures",
    "AugmentationSpec",
    "CompactnessFeatures",
    "DEFAULT_UNKNOWN_SPEC",
    "Encoder",
    "EncoderTrainingConfig",
    "ExperimentConfig",
    "MembershipClassifier",
    "MembershipSplit",
    "MetricEmbedding",
    "MetricValues",
    "MetricsReport",
    "MiEmbedError",
    "Sample",
    "ShadowConfig",
    "UserCluster",
    "batch_hard_loss",
    "center_distance",
    "default_config",
    "embed",
    "embed_user",
    "evaluate",
    "extract_features",
    "fit_threshold",
    "generate_synthetic",
    "infer_user",
    "load_attack_model",
    "load_config",
    "load_csv",
    "load_encoder",
    "mix_training_access",
    "pairwise_distance",
    "partition",
    "record_score",
    "render",
    "run_experiment",
    "run_shadows",
    "save_attack_model",
    "save_csv",
    "save_encoder",
    "train_attack",
    "train_encoder",
    "user_verdict",
    "build_shadow_splits",
]
