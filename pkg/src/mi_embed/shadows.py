"""Shadow-model training and attack-dataset assembly.

The attacker trains shadow encoders on splits of the shadow pool where
membership ground truth is known, then labels compactness features from
those encoders to form the training set for the membership classifier.
Member rows come from shadow non-training-member samples (optionally mixed
with training members for the training-access experiments); nonmember rows
come from shadow non-member samples.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import derive_seed
from .data import MembershipSplit, Sample, UserCluster, partition
from .embedding import Encoder, EncoderTrainingConfig, train_encoder
from .exceptions import (
    CsvFormatError,
    DegenerateDataError,
    SizingError,
    TrainingDivergedError,
)
from .features import AttackFeatures, features_from_samples

WORKERS_ENV_VAR = "MI_EMBED_WORKERS"


@dataclass(frozen=True)
class ShadowConfig:
    """Sizing and seeding for the shadow-model pipeline."""

    n_shadows: int = 10
    members_per_shadow: int = 20
    nonmembers_per_shadow: int = 20
    within_user_split: float = 0.5
    encoder: EncoderTrainingConfig = field(default_factory=EncoderTrainingConfig)
    k: int = 8
    master_seed: int = 0
    training_access: float = 0.0

    def __post_init__(self):
        if self.n_shadows < 1 or self.members_per_shadow < 1 or self.nonmembers_per_shadow < 1:
            raise SizingError("shadow counts must be >= 1")
        if not 0.0 <= self.training_access <= 1.0:
            raise SizingError(
                f"training_access must be in [0, 1], got {self.training_access}"
            )


@dataclass(frozen=True)
class AttackRow:
    features: AttackFeatures
    label: str
    shadow_index: int


@dataclass(frozen=True)
class AttackDataset:
    """Labeled (c_u, p_u) rows collected across shadows."""

    rows: tuple[AttackRow, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        seen: dict[tuple[int, str], str] = {}
        for row in self.rows:
            if row.label not in ("member", "nonmember"):
                raise DegenerateDataError(f"invalid label {row.label!r}")
            key = (row.shadow_index, row.features.user_id)
            if seen.get(key, row.label) != row.label:
                raise DegenerateDataError(
                    f"user {row.features.user_id} is labeled both member and "
                    f"nonmember in shadow {row.shadow_index}"
                )
            seen[key] = row.label

    def __len__(self) -> int:
        return len(self.rows)

    def feature_matrix(self) -> np.ndarray:
        return np.array(
            [[r.features.c_u, r.features.p_u] for r in self.rows], dtype=np.float64
        ).reshape(len(self.rows), 2)

    def labels01(self) -> np.ndarray:
        return np.array([1 if r.label == "member" else 0 for r in self.rows])


def build_shadow_splits(
    shadow_pool: list[UserCluster], config: ShadowConfig
) -> list[MembershipSplit]:
    """n_shadows independent partitions of the pool, seeded master_seed + index.

    Shadows are drawn independently, so users may recur across shadows; the
    member/nonmember disjointness invariants hold within each split.
    """
    if len(shadow_pool) < config.members_per_shadow + config.nonmembers_per_shadow:
        raise SizingError(
            f"shadow pool has {len(shadow_pool)} users, each shadow needs "
            f"{config.members_per_shadow + config.nonmembers_per_shadow}"
        )
    return [
        partition(
            shadow_pool,
            n_members=config.members_per_shadow,
            n_nonmembers=config.nonmembers_per_shadow,
            within_user_split=config.within_user_split,
            rng_seed=config.master_seed + i,
        )
        for i in range(config.n_shadows)
    ]


def mix_training_access(
    split: MembershipSplit, proportion: float, k: int, rng_seed: int = 0
) -> dict[str, tuple[Sample, ...]]:
    """Per-member-user pools of exactly k samples for feature extraction.

    floor(proportion * k) samples come from the user's training members and
    the remainder from their non-training members; proportion 0 reproduces
    the main attacker-knowledge setting, proportion 1 uses training samples
    only.
    """
    if not 0.0 <= proportion <= 1.0:
        raise SizingError(f"proportion must be in [0, 1], got {proportion}")
    if k < 2:
        raise SizingError(f"k must be >= 2, got {k}")
    n_train = math.floor(proportion * k)
    n_held = k - n_train
    rng = np.random.default_rng(rng_seed)
    pools: dict[str, tuple[Sample, ...]] = {}
    for user in split.member_users:
        train = split.training_members[user]
        held = split.nontraining_members[user]
        if len(train) < n_train:
            raise SizingError(
                f"user {user}: needs {n_train} training samples, has {len(train)}"
            )
        if len(held) < n_held:
            raise SizingError(
                f"user {user}: needs {n_held} non-training samples, has {len(held)}"
            )
        pool = []
        if n_train:
            pool.extend(train[i] for i in rng.choice(len(train), n_train, replace=False))
        if n_held:
            pool.extend(held[i] for i in rng.choice(len(held), n_held, replace=False))
        pools[user] = tuple(pool)
    return pools


def extract_attack_rows(
    encoder: Encoder,
    split: MembershipSplit,
    k: int,
    training_access: float,
    seed: int,
    shadow_index: int,
) -> list[AttackRow]:
    """Labeled rows for one shadow, ordered by label then user id."""
    rows = []
    pools = mix_training_access(
        split, training_access, k, rng_seed=derive_seed(seed, "pools")
    )
    for user in split.member_users:
        feats = features_from_samples(
            encoder, user, pools[user], k, rng_seed=derive_seed(seed, user)
        )
        rows.append(AttackRow(feats, "member", shadow_index))
    for user in split.nonmember_users:
        cluster = UserCluster(user, split.nonmembers[user])
        feats = features_from_samples(
            encoder, user, cluster.samples, k, rng_seed=derive_seed(seed, user)
        )
        rows.append(AttackRow(feats, "nonmember", shadow_index))
    return rows


def extract_dataset(
    encoders: list[Encoder],
    splits: list[MembershipSplit],
    config: ShadowConfig,
) -> AttackDataset:
    """Re-extract labeled rows from already-trained shadow encoders.

    Uses the same derived seeds as run_shadows, so at the same
    training_access proportion the result is identical to the dataset the
    pipeline produced.
    """
    rows = []
    for i, (encoder, split) in enumerate(zip(encoders, splits)):
        rows.extend(
            extract_attack_rows(
                encoder,
                split,
                k=config.k,
                training_access=config.training_access,
                seed=derive_seed(config.master_seed, i, "features"),
                shadow_index=i,
            )
        )
    return AttackDataset(tuple(rows))


def _run_one_shadow(index, split, config: ShadowConfig):
    encoder_cfg = replace(
        config.encoder, seed=derive_seed(config.master_seed, index, "train")
    )
    try:
        encoder = train_encoder(
            split.training_members, encoder_cfg, encoder_id=f"shadow_{index:03d}"
        )
    except TrainingDivergedError as exc:
        raise TrainingDivergedError(
            str(exc), epoch=exc.epoch, shadow_index=index
        ) from exc
    rows = extract_attack_rows(
        encoder,
        split,
        k=config.k,
        training_access=config.training_access,
        seed=derive_seed(config.master_seed, index, "features"),
        shadow_index=index,
    )
    return encoder, rows


def worker_count() -> int:
    """Worker-pool size from the environment; 1 means run sequentially."""
    raw = os.environ.get(WORKERS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_shadows(
    splits: list[MembershipSplit], config: ShadowConfig
) -> tuple[list[Encoder], AttackDataset]:
    """Train every shadow and assemble the labeled attack dataset.

    Each shadow's RNG streams derive only from master_seed + index, so the
    result is identical whether shadows run sequentially or in a pool.
    Rows are order-normalized by (shadow index, label, user id).
    """
    workers = worker_count()
    if workers > 1 and len(splits) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda item: _run_one_shadow(item[0], item[1], config),
                    enumerate(splits),
                )
            )
    else:
        results = [_run_one_shadow(i, s, config) for i, s in enumerate(splits)]
    encoders = [encoder for encoder, _ in results]
    rows = [row for _, shadow_rows in results for row in shadow_rows]
    return encoders, AttackDataset(tuple(rows))


ATTACK_DATASET_HEADER = [
    "user_id",
    "encoder_id",
    "k_used",
    "c_u",
    "p_u",
    "label",
    "shadow_index",
]


def write_attack_dataset(dataset: AttackDataset, path):
    """Feature-cache schema extended with label and shadow_index columns."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTACK_DATASET_HEADER)
        for row in dataset.rows:
            f = row.features
            writer.writerow(
                [
                    f.user_id,
                    f.encoder_id,
                    f.k_used,
                    repr(f.c_u),
                    repr(f.p_u),
                    row.label,
                    row.shadow_index,
                ]
            )


def read_attack_dataset(path) -> AttackDataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ATTACK_DATASET_HEADER:
            raise CsvFormatError(f"malformed header {header!r}")
        rows = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(ATTACK_DATASET_HEADER):
                raise CsvFormatError("wrong field count", row=row_no)
            user_id, encoder_id, k_used, c_u, p_u, label, shadow_index = row
            try:
                feats = AttackFeatures(
                    user_id, float(c_u), float(p_u), int(k_used), encoder_id
                )
                rows.append(AttackRow(feats, label, int(shadow_index)))
            except ValueError:
                raise CsvFormatError("non-numeric value", row=row_no) from None
    return AttackDataset(tuple(rows))
