"""Flat key = value experiment configuration (INI sections).

Every run embeds its fully resolved configuration in the report, so a
report alone is enough to replay an experiment.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace

from .embedding import EncoderTrainingConfig
from .exceptions import SizingError

EXPERIMENT_KINDS = ("main", "training_access_sweep", "ablation", "group_recall")


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    csv_path: str = ""
    n_users: int = 200
    samples_per_user: tuple[int, int] = (20, 20)
    dim: int = 20
    cluster_spread: float = 1.0
    user_separation: float = 3.0

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise SizingError(f"unknown data source {self.source!r}")
        if self.source == "csv" and not self.csv_path:
            raise SizingError("csv source needs csv_path")
        spu = self.samples_per_user
        if isinstance(spu, int):
            spu = (spu, spu)
        object.__setattr__(self, "samples_per_user", (int(spu[0]), int(spu[1])))


@dataclass(frozen=True)
class SplitConfig:
    n_members: int = 40
    n_nonmembers: int = 40
    within_user_split: float = 0.5


@dataclass(frozen=True)
class ShadowSizing:
    n_shadows: int = 10
    members_per_shadow: int = 20
    nonmembers_per_shadow: int = 20
    within_user_split: float = 0.5


@dataclass(frozen=True)
class AttackTrainingConfig:
    feature_mode: str = "both"
    hidden_dims: tuple[int, ...] = (16, 16)
    epochs: int = 300
    lr: float = 0.1
    momentum: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    victim: EncoderTrainingConfig = field(default_factory=EncoderTrainingConfig)
    shadows: ShadowSizing = field(default_factory=ShadowSizing)
    attack: AttackTrainingConfig = field(default_factory=AttackTrainingConfig)
    kind: str = "main"
    k: int = 8
    repeats: int = 5
    base_seed: int = 0

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise SizingError(
                f"unknown experiment kind {self.kind!r}, want one of {EXPERIMENT_KINDS}"
            )
        if self.repeats < 1:
            raise SizingError("repeats must be >= 1")


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _parse_int_tuple(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.replace(":", ",").split(",") if v.strip())


def _parse_samples_per_user(raw: str) -> tuple[int, int]:
    parts = _parse_int_tuple(raw)
    if len(parts) == 1:
        return (parts[0], parts[0])
    if len(parts) == 2:
        return (parts[0], parts[1])
    raise SizingError(f"samples_per_user wants COUNT or LOW:HIGH, got {raw!r}")


_SECTION_FIELDS = {
    "data": {
        "source": str,
        "csv_path": str,
        "n_users": int,
        "samples_per_user": _parse_samples_per_user,
        "dim": int,
        "cluster_spread": float,
        "user_separation": float,
    },
    "split": {
        "n_members": int,
        "n_nonmembers": int,
        "within_user_split": float,
    },
    "victim": {
        "epochs": int,
        "lr": float,
        "momentum": float,
        "users_per_batch": int,
        "samples_per_user": int,
        "hidden_dims": _parse_int_tuple,
        "embedding_dim": int,
    },
    "shadows": {
        "n_shadows": int,
        "members_per_shadow": int,
        "nonmembers_per_shadow": int,
        "within_user_split": float,
    },
    "attack": {
        "feature_mode": str,
        "hidden_dims": _parse_int_tuple,
        "epochs": int,
        "lr": float,
        "momentum": float,
    },
    "experiment": {
        "kind": str,
        "k": int,
        "repeats": int,
        "base_seed": int,
    },
}


def load_config(path) -> ExperimentConfig:
    """Defaults overridden by the file; unknown sections or keys are errors."""
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise SizingError(f"cannot read config file {path}")
    overrides: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise SizingError(f"unknown config section [{section}]")
        fields = _SECTION_FIELDS[section]
        for key, raw in parser.items(section):
            if key not in fields:
                raise SizingError(f"unknown config key {key!r} in [{section}]")
            try:
                overrides.setdefault(section, {})[key] = fields[key](raw)
            except ValueError:
                raise SizingError(
                    f"bad value {raw!r} for {section}.{key}"
                ) from None

    cfg = default_config()
    if "data" in overrides:
        cfg = replace(cfg, data=replace(cfg.data, **overrides["data"]))
    if "split" in overrides:
        cfg = replace(cfg, split=replace(cfg.split, **overrides["split"]))
    if "victim" in overrides:
        cfg = replace(cfg, victim=replace(cfg.victim, **overrides["victim"]))
    if "shadows" in overrides:
        cfg = replace(cfg, shadows=replace(cfg.shadows, **overrides["shadows"]))
    if "attack" in overrides:
        cfg = replace(cfg, attack=replace(cfg.attack, **overrides["attack"]))
    exp = overrides.get("experiment", {})
    return replace(cfg, **exp)


def config_to_flat(cfg: ExperimentConfig) -> dict[str, str]:
    """The fully resolved configuration as "section.key" -> string."""
    spu = cfg.data.samples_per_user
    flat = {
        "data.source": cfg.data.source,
        "data.csv_path": cfg.data.csv_path,
        "data.n_users": str(cfg.data.n_users),
        "data.samples_per_user": (
            str(spu[0]) if spu[0] == spu[1] else f"{spu[0]}:{spu[1]}"
        ),
        "data.dim": str(cfg.data.dim),
        "data.cluster_spread": repr(cfg.data.cluster_spread),
        "data.user_separation": repr(cfg.data.user_separation),
        "split.n_members": str(cfg.split.n_members),
        "split.n_nonmembers": str(cfg.split.n_nonmembers),
        "split.within_user_split": repr(cfg.split.within_user_split),
        "victim.epochs": str(cfg.victim.epochs),
        "victim.lr": repr(cfg.victim.lr),
        "victim.momentum": repr(cfg.victim.momentum),
        "victim.users_per_batch": str(cfg.victim.users_per_batch),
        "victim.samples_per_user": str(cfg.victim.samples_per_user),
        "victim.hidden_dims": ",".join(str(d) for d in cfg.victim.hidden_dims),
        "victim.embedding_dim": str(cfg.victim.embedding_dim),
        "shadows.n_shadows": str(cfg.shadows.n_shadows),
        "shadows.members_per_shadow": str(cfg.shadows.members_per_shadow),
        "shadows.nonmembers_per_shadow": str(cfg.shadows.nonmembers_per_shadow),
        "shadows.within_user_split": repr(cfg.shadows.within_user_split),
        "attack.feature_mode": cfg.attack.feature_mode,
        "attack.hidden_dims": ",".join(str(d) for d in cfg.attack.hidden_dims),
        "attack.epochs": str(cfg.attack.epochs),
        "attack.lr": repr(cfg.attack.lr),
        "attack.momentum": repr(cfg.attack.momentum),
        "experiment.kind": cfg.kind,
        "experiment.k": str(cfg.k),
        "experiment.repeats": str(cfg.repeats),
        "experiment.base_seed": str(cfg.base_seed),
    }
    return flat


def write_config(cfg: ExperimentConfig, path):
    """Write the resolved configuration back out as an INI file."""
    parser = configparser.ConfigParser()
    for flat_key, value in config_to_flat(cfg).items():
        section, key = flat_key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value)
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)
