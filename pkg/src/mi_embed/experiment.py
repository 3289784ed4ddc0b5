"""End-to-end experiment harness.

One repeat runs the full pipeline on fresh seeds: generate or load data,
partition, train the victim, train shadows, fit the attack model, then
evaluate on non-training members vs non-members. The experiment kinds
reproduce the paper-style grids:

* ``main`` - a single attack-accuracy cell,
* ``training_access_sweep`` - proportions 0/25/50/75/100% of the feature
  pool drawn from actual training samples (mirrored on the shadow side),
* ``ablation`` - feature modes c_only / p_only / both on the same runs,
* ``group_recall`` - member recall by quintile of training-sample count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._validation import derive_seed
from .attack import MembershipClassifier, train_attack
from .baseline import (
    fit_threshold_on_shadows,
    resolve_spec,
    user_verdict,
)
from .config import ExperimentConfig, config_to_flat
from .data import (
    UserCluster,
    clusters_from_part,
    generate_synthetic,
    load_csv,
    partition,
)
from .embedding import Encoder, train_encoder
from .exceptions import MiEmbedError
from .features import extract_features, features_from_samples
from .metrics import MetricValues, evaluate
from .report import MetricsReport, aggregate_cell
from .shadows import (
    AttackDataset,
    ShadowConfig,
    build_shadow_splits,
    extract_dataset,
    mix_training_access,
    run_shadows,
)

SWEEP_PROPORTIONS = (0.0, 0.25, 0.5, 0.75, 1.0)
N_RECALL_GROUPS = 5


@dataclass(frozen=True)
class RepeatArtifacts:
    """Everything one repeat produces before evaluation."""

    clusters: list
    split: object
    victim: Encoder
    shadow_config: ShadowConfig
    shadow_splits: list
    shadow_encoders: list
    attack_data: AttackDataset


def load_clusters(config: ExperimentConfig, seed: int) -> list[UserCluster]:
    data = config.data
    if data.source == "csv":
        return load_csv(data.csv_path)
    spu = data.samples_per_user
    return generate_synthetic(
        n_users=data.n_users,
        samples_per_user=spu[0] if spu[0] == spu[1] else spu,
        dim=data.dim,
        cluster_spread=data.cluster_spread,
        user_separation=data.user_separation,
        rng_seed=derive_seed(seed, "data"),
    )


def prepare_repeat(config: ExperimentConfig, seed: int) -> RepeatArtifacts:
    """Data, victim, shadows and the proportion-0 attack dataset for one seed."""
    clusters = load_clusters(config, seed)
    split = partition(
        clusters,
        n_members=config.split.n_members,
        n_nonmembers=config.split.n_nonmembers,
        within_user_split=config.split.within_user_split,
        rng_seed=derive_seed(seed, "split"),
    )
    victim_cfg = replace(config.victim, seed=derive_seed(seed, "victim"))
    victim = train_encoder(
        split.training_members, victim_cfg, encoder_id=f"victim_seed{seed}"
    )
    # Shadow encoders share the victim architecture and hyperparameters.
    shadow_cfg = ShadowConfig(
        n_shadows=config.shadows.n_shadows,
        members_per_shadow=config.shadows.members_per_shadow,
        nonmembers_per_shadow=config.shadows.nonmembers_per_shadow,
        within_user_split=config.shadows.within_user_split,
        encoder=config.victim,
        k=config.k,
        master_seed=derive_seed(seed, "shadows"),
        training_access=0.0,
    )
    shadow_splits = build_shadow_splits(
        clusters_from_part(split.shadow_pool), shadow_cfg
    )
    shadow_encoders, attack_data = run_shadows(shadow_splits, shadow_cfg)
    return RepeatArtifacts(
        clusters=clusters,
        split=split,
        victim=victim,
        shadow_config=shadow_cfg,
        shadow_splits=shadow_splits,
        shadow_encoders=shadow_encoders,
        attack_data=attack_data,
    )


def victim_eval_rows(artifacts: RepeatArtifacts, k: int, proportion: float, seed: int):
    """(X, y, user_ids, member training counts) for the victim-side evaluation.

    Member users are probed through pools mixed at ``proportion``; the main
    setting (proportion 0) evaluates on non-training members vs non-members
    only.
    """
    split = artifacts.split
    victim = artifacts.victim
    pools = mix_training_access(
        split, proportion, k, rng_seed=derive_seed(seed, "eval-pools")
    )
    rows = []
    labels = []
    users = []
    train_counts = {}
    for user in split.member_users:
        feats = features_from_samples(
            victim, user, pools[user], k, rng_seed=derive_seed(seed, "eval", user)
        )
        rows.append([feats.c_u, feats.p_u])
        labels.append(1)
        users.append(user)
        train_counts[user] = len(split.training_members[user])
    for user in split.nonmember_users:
        cluster = UserCluster(user, split.nonmembers[user])
        feats = extract_features(
            victim, cluster, k, rng_seed=derive_seed(seed, "eval", user)
        )
        rows.append([feats.c_u, feats.p_u])
        labels.append(0)
        users.append(user)
    return np.array(rows), np.array(labels), users, train_counts


def _fit_attack(config: ExperimentConfig, data: AttackDataset, seed: int, mode=None):
    attack = config.attack
    return train_attack(
        data,
        feature_mode=mode or attack.feature_mode,
        seed=derive_seed(seed, "attack"),
        hidden_dims=attack.hidden_dims,
        epochs=attack.epochs,
        lr=attack.lr,
        momentum=attack.momentum,
    )


def _group_recalls(verdicts, users, train_counts) -> list[float]:
    """Member recall per quintile of training-sample count, largest first."""
    verdict_by_user = dict(zip(users, verdicts))
    members = sorted(train_counts, key=lambda u: (-train_counts[u], u))
    recalls = []
    for group in np.array_split(np.array(members), N_RECALL_GROUPS):
        hits = sum(verdict_by_user[u] == 1 for u in group)
        recalls.append(100.0 * hits / len(group))
    return recalls


def run_repeat(config: ExperimentConfig, seed: int) -> dict[str, MetricValues]:
    """All cells of one experiment repeat, keyed by cell name."""
    artifacts = prepare_repeat(config, seed)
    kind = config.kind

    if kind == "main":
        model = _fit_attack(config, artifacts.attack_data, seed)
        X, y, _, _ = victim_eval_rows(artifacts, config.k, 0.0, seed)
        return {"main": evaluate(model.predict(X), y)}

    if kind == "training_access_sweep":
        results = {}
        for proportion in SWEEP_PROPORTIONS:
            shadow_cfg = replace(artifacts.shadow_config, training_access=proportion)
            data = extract_dataset(
                artifacts.shadow_encoders, artifacts.shadow_splits, shadow_cfg
            )
            model = _fit_attack(config, data, seed)
            X, y, _, _ = victim_eval_rows(artifacts, config.k, proportion, seed)
            results[f"{int(proportion * 100)}%"] = evaluate(model.predict(X), y)
        return results

    if kind == "ablation":
        X, y, _, _ = victim_eval_rows(artifacts, config.k, 0.0, seed)
        results = {}
        for mode in ("c_only", "p_only", "both"):
            model = _fit_attack(config, artifacts.attack_data, seed, mode=mode)
            results[mode] = evaluate(model.predict(X), y)
        return results

    if kind == "group_recall":
        model = _fit_attack(config, artifacts.attack_data, seed)
        X, y, users, train_counts = victim_eval_rows(artifacts, config.k, 0.0, seed)
        verdicts = model.predict(X)
        recalls = _group_recalls(verdicts, users, train_counts)
        return {
            f"group_{i + 1}": MetricValues(None, None, recall)
            for i, recall in enumerate(recalls)
        }

    raise MiEmbedError(f"unknown experiment kind {kind!r}")


def cell_order(kind: str) -> list[str]:
    if kind == "main":
        return ["main"]
    if kind == "training_access_sweep":
        return [f"{int(p * 100)}%" for p in SWEEP_PROPORTIONS]
    if kind == "ablation":
        return ["c_only", "p_only", "both"]
    if kind == "group_recall":
        return [f"group_{i + 1}" for i in range(N_RECALL_GROUPS)]
    raise MiEmbedError(f"unknown experiment kind {kind!r}")


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Run every repeat and aggregate; aborted repeats are recorded, not fatal."""
    seeds = [config.base_seed + r for r in range(config.repeats)]
    per_cell: dict[str, list[MetricValues]] = {c: [] for c in cell_order(config.kind)}
    errors = []
    for r, seed in enumerate(seeds):
        try:
            results = run_repeat(config, seed)
        except MiEmbedError as exc:
            errors.append(f"repeat {r} (seed {seed}): {exc}")
            continue
        for cell, values in results.items():
            per_cell[cell].append(values)
    cells = tuple(
        aggregate_cell(cell, values) for cell, values in per_cell.items() if values
    )
    return MetricsReport(
        experiment=config.kind,
        seeds=tuple(seeds),
        config=config_to_flat(config),
        cells=cells,
        errors=tuple(errors),
    )


def run_baseline_comparison(
    config: ExperimentConfig, seed: int, knowledge_mode: str = "unknown_augmentations"
) -> tuple[MetricValues, MetricValues]:
    """(primary attack metrics, baseline metrics) on one shared victim/seed."""
    artifacts = prepare_repeat(config, seed)
    model = _fit_attack(config, artifacts.attack_data, seed)
    X, y, users, _ = victim_eval_rows(artifacts, config.k, 0.0, seed)
    primary = evaluate(model.predict(X), y)

    spec = resolve_spec(knowledge_mode)
    threshold = fit_threshold_on_shadows(
        artifacts.shadow_encoders,
        artifacts.shadow_splits,
        spec,
        seed=derive_seed(seed, "baseline-fit"),
    )
    split = artifacts.split
    verdicts = []
    labels = []
    eval_seed = derive_seed(seed, "baseline-eval")
    for user in split.member_users:
        cluster = UserCluster(user, split.nontraining_members[user])
        verdicts.append(
            user_verdict(artifacts.victim, cluster, spec, threshold, eval_seed)
        )
        labels.append("member")
    for user in split.nonmember_users:
        cluster = UserCluster(user, split.nonmembers[user])
        verdicts.append(
            user_verdict(artifacts.victim, cluster, spec, threshold, eval_seed)
        )
        labels.append("nonmember")
    baseline = evaluate(verdicts, labels)
    return primary, baseline
