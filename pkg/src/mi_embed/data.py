"""User-labeled sample collections and the three-way membership partition.

The toolkit operates on pre-extracted per-sample feature vectors. A dataset
is a list of user clusters; the partition splits users into training
members, non-training members (held-out samples of the same users),
non-members, and a leftover shadow pool.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import readonly
from .exceptions import CsvFormatError, DimensionMismatchError, SizingError


@dataclass(frozen=True)
class Sample:
    """One feature vector tagged with a user identity."""

    user_id: str
    sample_id: str
    features: np.ndarray

    def __post_init__(self):
        vec = readonly(np.atleast_1d(self.features))
        if vec.ndim != 1:
            raise DimensionMismatchError(
                f"sample {self.sample_id}: features must be 1-D"
            )
        if not np.all(np.isfinite(vec)):
            raise DimensionMismatchError(
                f"sample {self.sample_id}: non-finite feature values"
            )
        object.__setattr__(self, "features", vec)

    @property
    def dim(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class UserCluster:
    """All known samples of one user, in a fixed order."""

    user_id: str
    samples: tuple[Sample, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise SizingError(f"user {self.user_id}: cluster is empty")
        ids = set()
        dim = samples[0].dim
        for s in samples:
            if s.user_id != self.user_id:
                raise DimensionMismatchError(
                    f"sample {s.sample_id} belongs to {s.user_id}, not {self.user_id}"
                )
            if s.sample_id in ids:
                raise DimensionMismatchError(
                    f"user {self.user_id}: duplicate sample id {s.sample_id}"
                )
            if s.dim != dim:
                raise DimensionMismatchError(
                    f"sample {s.sample_id}: dim {s.dim} != {dim}"
                )
            ids.add(s.sample_id)
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def dim(self) -> int:
        return self.samples[0].dim

    def feature_matrix(self) -> np.ndarray:
        return np.stack([s.features for s in self.samples])


Part = dict[str, tuple[Sample, ...]]


@dataclass(frozen=True)
class MembershipSplit:
    """The four-way partition behind a user-level membership experiment.

    Training members and non-training members cover the same users with
    disjoint sample sets; non-member and shadow-pool users are disjoint
    from them and from each other.
    """

    training_members: Part
    nontraining_members: Part
    nonmembers: Part
    shadow_pool: Part

    def __post_init__(self):
        t_users = set(self.training_members)
        nt_users = set(self.nontraining_members)
        nm_users = set(self.nonmembers)
        sh_users = set(self.shadow_pool)
        if t_users != nt_users:
            raise SizingError(
                "training-member and non-training-member user sets differ"
            )
        if nm_users & t_users:
            raise SizingError("non-member users overlap member users")
        if sh_users & (t_users | nm_users):
            raise SizingError("shadow-pool users overlap members or non-members")
        for user in t_users:
            t_ids = {s.sample_id for s in self.training_members[user]}
            nt_ids = {s.sample_id for s in self.nontraining_members[user]}
            if not t_ids or not nt_ids:
                raise SizingError(f"user {user}: empty member subset")
            if t_ids & nt_ids:
                raise SizingError(f"user {user}: training/non-training samples overlap")

    @property
    def member_users(self) -> list[str]:
        return sorted(self.training_members)

    @property
    def nonmember_users(self) -> list[str]:
        return sorted(self.nonmembers)

    @property
    def shadow_users(self) -> list[str]:
        return sorted(self.shadow_pool)


def clusters_from_part(part: Part) -> list[UserCluster]:
    """Materialize a split part as user clusters, sorted by user id."""
    return [UserCluster(user, tuple(part[user])) for user in sorted(part)]


def partition(
    dataset: list[UserCluster],
    n_members: int,
    n_nonmembers: int,
    within_user_split: float = 0.5,
    rng_seed: int = 0,
) -> MembershipSplit:
    """Randomly split users into members / non-members / shadow pool.

    Each member user's samples are split ceil(within_user_split * m_u) into
    training members and the remainder into non-training members. Users with
    fewer than 2 samples are ineligible as members. Leftover users form the
    shadow pool. Deterministic per seed.
    """
    if n_members < 1 or n_nonmembers < 0:
        raise SizingError("need n_members >= 1 and n_nonmembers >= 0")
    if not 0.0 < within_user_split < 1.0:
        raise SizingError(
            f"within_user_split must be in (0, 1), got {within_user_split}"
        )
    users = [c.user_id for c in dataset]
    if len(set(users)) != len(users):
        raise SizingError("duplicate user ids in dataset")
    by_user = {c.user_id: c for c in dataset}
    eligible = [u for u in users if by_user[u].n_samples >= 2]
    if len(eligible) < n_members:
        raise SizingError(
            f"need {n_members} member users with >= 2 samples, "
            f"only {len(eligible)} eligible"
        )
    if len(users) < n_members + n_nonmembers:
        raise SizingError(
            f"need {n_members + n_nonmembers} users, dataset has {len(users)}"
        )

    rng = np.random.default_rng(rng_seed)
    members = [eligible[i] for i in rng.choice(len(eligible), n_members, replace=False)]
    member_set = set(members)
    rest = [u for u in users if u not in member_set]
    nonmembers = [rest[i] for i in rng.choice(len(rest), n_nonmembers, replace=False)]
    nonmember_set = set(nonmembers)

    training: Part = {}
    nontraining: Part = {}
    for user in members:
        cluster = by_user[user]
        m = cluster.n_samples
        n_train = math.ceil(within_user_split * m)
        if not 1 <= n_train < m:
            raise SizingError(
                f"user {user}: split {within_user_split} leaves an empty member "
                f"subset ({n_train} of {m} samples to training)"
            )
        order = rng.permutation(m)
        training[user] = tuple(cluster.samples[i] for i in order[:n_train])
        nontraining[user] = tuple(cluster.samples[i] for i in order[n_train:])

    return MembershipSplit(
        training_members=training,
        nontraining_members=nontraining,
        nonmembers={u: by_user[u].samples for u in nonmembers},
        shadow_pool={
            u: by_user[u].samples
            for u in users
            if u not in member_set and u not in nonmember_set
        },
    )


def generate_synthetic(
    n_users: int,
    samples_per_user,
    dim: int,
    cluster_spread: float,
    user_separation: float,
    rng_seed: int = 0,
) -> list[UserCluster]:
    """Isotropic Gaussian user clusters around random centers.

    Centers are drawn i.i.d. N(0, (user_separation^2 / 2) * I) so the
    difference of two centers is N(0, user_separation^2 * I) and the expected
    center-to-center distance is ~ user_separation * sqrt(dim). Samples are
    center + N(0, cluster_spread^2 * I). ``samples_per_user`` is either a
    fixed count or an inclusive (low, high) range drawn per user.
    Deterministic per seed.
    """
    if n_users < 1 or dim < 2:
        raise SizingError("need n_users >= 1 and dim >= 2")
    if cluster_spread < 0 or user_separation < 0:
        raise SizingError("spread and separation must be non-negative")
    if isinstance(samples_per_user, (tuple, list)):
        low, high = (int(samples_per_user[0]), int(samples_per_user[1]))
    else:
        low = high = int(samples_per_user)
    if not 1 <= low <= high:
        raise SizingError(f"invalid samples_per_user {samples_per_user}")

    rng = np.random.default_rng(rng_seed)
    width = len(str(n_users - 1))
    clusters = []
    for i in range(n_users):
        user = f"user_{i:0{width}d}"
        center = rng.normal(0.0, user_separation / np.sqrt(2.0), size=dim)
        count = int(rng.integers(low, high + 1)) if low < high else low
        points = center + rng.normal(0.0, 1.0, size=(count, dim)) * cluster_spread
        samples = tuple(
            Sample(user, f"{user}_s{j:03d}", points[j]) for j in range(count)
        )
        clusters.append(UserCluster(user, samples))
    return clusters


def save_csv(dataset: list[UserCluster], path):
    """Write the documented schema: header user_id,sample_id,f0..f{d-1}.

    Features are written with repr so a save/load round trip is lossless.
    """
    dims = {c.dim for c in dataset}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed feature dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "sample_id"] + [f"f{i}" for i in range(dim)])
        for cluster in dataset:
            for s in cluster.samples:
                writer.writerow(
                    [s.user_id, s.sample_id] + [repr(float(v)) for v in s.features]
                )


def load_csv(path) -> list[UserCluster]:
    """Parse the documented CSV schema; clusters keep first-appearance order."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError("empty file, expected a header") from None
        dim = len(header) - 2
        expected = ["user_id", "sample_id"] + [f"f{i}" for i in range(dim)]
        if dim < 1 or header != expected:
            raise CsvFormatError(f"malformed header {header!r}")
        grouped: dict[str, list[Sample]] = {}
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"expected {len(header)} fields, got {len(row)}", row=row_no
                )
            user_id, sample_id = row[0], row[1]
            try:
                features = np.array([float(v) for v in row[2:]])
            except ValueError:
                raise CsvFormatError("non-numeric feature value", row=row_no) from None
            if not np.all(np.isfinite(features)):
                raise CsvFormatError("non-finite feature value", row=row_no)
            grouped.setdefault(user_id, []).append(
                Sample(user_id, sample_id, features)
            )
    return [UserCluster(user, tuple(samples)) for user, samples in grouped.items()]


def split_manifest(split: MembershipSplit) -> dict:
    """A replayable listing of user and sample ids per split part."""
    def ids(part: Part) -> dict:
        return {
            user: [s.sample_id for s in part[user]] for user in sorted(part)
        }

    return {
        "training_members": ids(split.training_members),
        "nontraining_members": ids(split.nontraining_members),
        "nonmembers": ids(split.nonmembers),
        "shadow_pool": ids(split.shadow_pool),
    }


def save_split_manifest(split: MembershipSplit, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(split_manifest(split), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def apply_manifest(dataset: list[UserCluster], manifest: dict) -> MembershipSplit:
    """Rebuild a split from a manifest against the original dataset."""
    samples_by_id = {
        (c.user_id, s.sample_id): s for c in dataset for s in c.samples
    }

    def part(name: str) -> Part:
        out: Part = {}
        for user, sample_ids in manifest[name].items():
            try:
                out[user] = tuple(samples_by_id[(user, sid)] for sid in sample_ids)
            except KeyError as exc:
                raise SizingError(
                    f"manifest references unknown sample {exc} for user {user}"
                ) from exc
        return out

    return MembershipSplit(
        training_members=part("training_members"),
        nontraining_members=part("nontraining_members"),
        nonmembers=part("nonmembers"),
        shadow_pool=part("shadow_pool"),
    )
