"""Record-level augmentation baseline lifted to user level by majority vote.

Each sample is scored by how tightly its augmented views cluster in the
embedding space (mean pairwise cosine similarity); a sample votes member
when its score exceeds a threshold fitted on shadow data, and the user
verdict is the majority with ties going to nonmember. Image augmentations
are replaced by vector-space analogues: additive Gaussian noise, coordinate
dropout, and random scaling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_float_vector, derive_seed
from .data import UserCluster
from .embedding import Encoder
from .exceptions import DegenerateSimilarityError, SizingError
from . import nn

KNOWLEDGE_MODES = ("full_knowledge", "unknown_augmentations")
_OP_NAMES = ("gaussian_noise", "coordinate_dropout", "random_scaling")


@dataclass(frozen=True)
class AugmentationSpec:
    """A pipeline of vector augmentations applied to every view.

    ``ops`` is a tuple of (name, parameter) pairs; an empty tuple means the
    views are exact copies (score 1.0 for any encoder).
    """

    ops: tuple = ()
    n_views: int = 6

    def __post_init__(self):
        if self.n_views < 2:
            raise SizingError(f"n_views must be >= 2, got {self.n_views}")
        ops = tuple((name, param) for name, param in self.ops)
        for name, param in ops:
            if name == "gaussian_noise":
                if not param >= 0:
                    raise SizingError(f"gaussian_noise sigma must be >= 0: {param}")
            elif name == "coordinate_dropout":
                if not 0 <= param < 1:
                    raise SizingError(f"coordinate_dropout rate must be in [0,1): {param}")
            elif name == "random_scaling":
                lo, hi = param
                if not 0 < lo <= hi:
                    raise SizingError(f"random_scaling range must be positive: {param}")
            else:
                raise SizingError(f"unknown augmentation op {name!r}, want {_OP_NAMES}")
        object.__setattr__(self, "ops", ops)


# Fixed stand-in used when the victim's training augmentations are unknown.
# Deliberately heavy-handed: mismatched augmentations push views off the
# data manifold, which is what makes the record-level attack degrade when
# the attacker has to guess.
DEFAULT_UNKNOWN_SPEC = AugmentationSpec(
    ops=(
        ("gaussian_noise", 3.0),
        ("coordinate_dropout", 0.3),
        ("random_scaling", (0.5, 1.5)),
    ),
    n_views=6,
)

# Our victims train without augmentation, so full knowledge means none.
FULL_KNOWLEDGE_SPEC = AugmentationSpec(ops=(), n_views=6)


def resolve_spec(knowledge_mode: str, victim_spec: AugmentationSpec | None = None):
    if knowledge_mode not in KNOWLEDGE_MODES:
        raise SizingError(f"unknown knowledge mode {knowledge_mode!r}")
    if knowledge_mode == "full_knowledge":
        return victim_spec if victim_spec is not None else FULL_KNOWLEDGE_SPEC
    return DEFAULT_UNKNOWN_SPEC


def augment_views(features, spec: AugmentationSpec, rng) -> np.ndarray:
    """n_views augmented copies of one feature vector."""
    x = as_float_vector(features, name="features")
    views = np.tile(x, (spec.n_views, 1))
    for name, param in spec.ops:
        if name == "gaussian_noise":
            views = views + rng.normal(0.0, 1.0, size=views.shape) * param
        elif name == "coordinate_dropout":
            views = np.where(rng.random(views.shape) < param, 0.0, views)
        elif name == "random_scaling":
            lo, hi = param
            views = views * rng.uniform(lo, hi, size=(spec.n_views, 1))
    return views


def record_score(victim: Encoder, sample, spec: AugmentationSpec, seed: int = 0):
    """Mean pairwise cosine similarity among the embedded augmented views."""
    features = sample.features if hasattr(sample, "features") else sample
    rng = np.random.default_rng(seed)
    Z = nn.forward_batch(victim.net, augment_views(features, spec, rng))
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateSimilarityError("an augmented view embeds to the zero vector")
    unit = Z / norms[:, None]
    sims = unit @ unit.T
    iu = np.triu_indices(spec.n_views, k=1)
    return float(sims[iu].mean())


def _sample_seed(seed: int, sample_id: str) -> int:
    # Tie the per-sample RNG to the sample identity so reordering a cluster
    # cannot change any vote.
    return derive_seed(seed, "record", sample_id)


def score_user(victim: Encoder, cluster: UserCluster, spec, seed: int = 0):
    """Record score per sample, ordered like the cluster."""
    return np.array(
        [
            record_score(victim, s, spec, seed=_sample_seed(seed, s.sample_id))
            for s in cluster.samples
        ]
    )


def user_verdict(
    victim: Encoder,
    cluster: UserCluster,
    spec: AugmentationSpec,
    threshold: float,
    seed: int = 0,
) -> str:
    """Majority vote over per-sample scores; an exact tie is nonmember."""
    scores = score_user(victim, cluster, spec, seed)
    votes_member = int((scores > threshold).sum())
    return "member" if votes_member * 2 > len(scores) else "nonmember"


def _critical_score(scores: np.ndarray) -> float:
    """The threshold below which this user's majority vote says member.

    With n sample scores, the vote is member iff more than n/2 scores exceed
    the threshold, i.e. iff the threshold lies strictly below the
    (floor(n/2)+1)-th largest score.
    """
    needed = len(scores) // 2 + 1
    return float(np.sort(scores)[::-1][needed - 1])


def fit_threshold(scored_users) -> float:
    """1-D sweep maximizing user-level majority-vote accuracy on shadow data.

    ``scored_users`` is a sequence of (label, scores-array) pairs with label
    in {member, nonmember}. Each user's verdict flips at a single critical
    score, so sweeping midpoints between sorted critical values visits every
    achievable accuracy; ties prefer the lowest threshold.
    """
    scored = [
        (label, np.asarray(scores, dtype=np.float64)) for label, scores in scored_users
    ]
    if not scored:
        raise SizingError("threshold fitting needs at least one scored user")
    criticals = np.array([_critical_score(s) for _, s in scored])
    is_member = np.array([label == "member" for label, _ in scored])

    cuts = np.sort(np.unique(criticals))
    candidates = np.concatenate(
        [[cuts[0] - 1.0], (cuts[:-1] + cuts[1:]) / 2.0, [cuts[-1] + 1.0]]
    )
    # verdict(t) = member iff t < critical, so accuracy(t) counts members
    # above t and nonmembers at-or-below t
    correct = (
        (candidates[:, None] < criticals[None, :]) == is_member[None, :]
    ).sum(axis=1)
    return float(candidates[np.argmax(correct)])


def fit_threshold_on_shadows(shadow_encoders, shadow_splits, spec, seed: int = 0):
    """Score every shadow's evaluation users and fit the vote threshold.

    Mirrors the evaluation protocol: member users are scored on their
    non-training samples, nonmember users on their own samples.
    """
    scored = []
    for idx, (encoder, split) in enumerate(zip(shadow_encoders, shadow_splits)):
        shadow_seed = derive_seed(seed, "baseline", idx)
        for user in split.member_users:
            cluster = UserCluster(user, split.nontraining_members[user])
            scored.append(("member", score_user(encoder, cluster, spec, shadow_seed)))
        for user in split.nonmember_users:
            cluster = UserCluster(user, split.nonmembers[user])
            scored.append(("nonmember", score_user(encoder, cluster, spec, shadow_seed)))
    return fit_threshold(scored)
