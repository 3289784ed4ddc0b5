"""Tests for clusters, the membership partition, synthetic data and CSV io."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mi_embed import data
from mi_embed.exceptions import CsvFormatError, DimensionMismatchError, SizingError


def make_cluster(user, n_samples, dim=3, value=0.0):
    samples = tuple(
        data.Sample(user, f"{user}_s{i}", np.full(dim, value) + i)
        for i in range(n_samples)
    )
    return data.UserCluster(user, samples)


def all_sample_ids(split):
    parts = [
        split.training_members,
        split.nontraining_members,
        split.nonmembers,
        split.shadow_pool,
    ]
    out = []
    for part in parts:
        for samples in part.values():
            out.extend(s.sample_id for s in samples)
    return out


class TestPartition:
    def test_minimal_example(self):
        # 4 users x 2 samples, 1 member, 1 nonmember, split 0.5
        clusters = [make_cluster(f"u{i}", 2) for i in range(4)]
        split = data.partition(clusters, 1, 1, within_user_split=0.5, rng_seed=0)
        (member,) = split.member_users
        assert len(split.training_members[member]) == 1
        assert len(split.nontraining_members[member]) == 1
        assert len(split.nonmember_users) == 1
        assert len(split.shadow_users) == 2

    def test_same_seed_identical(self):
        clusters = [make_cluster(f"u{i}", 4) for i in range(10)]
        a = data.partition(clusters, 3, 3, rng_seed=7)
        b = data.partition(clusters, 3, 3, rng_seed=7)
        assert data.split_manifest(a) == data.split_manifest(b)

    def test_different_seed_differs(self):
        clusters = [make_cluster(f"u{i}", 4) for i in range(10)]
        a = data.partition(clusters, 3, 3, rng_seed=0)
        b = data.partition(clusters, 3, 3, rng_seed=1)
        assert data.split_manifest(a) != data.split_manifest(b)

    def test_paper_sizing_shadow_pool_empty(self):
        # 300 users split 150 members / 150 non-members leaves no shadows
        clusters = [make_cluster(f"u{i:03d}", 2) for i in range(300)]
        split = data.partition(clusters, 150, 150, rng_seed=0)
        assert len(split.member_users) == 150
        assert len(split.nonmember_users) == 150
        assert split.shadow_pool == {}

    def test_insufficient_users_rejected(self):
        clusters = [make_cluster(f"u{i}", 2) for i in range(3)]
        with pytest.raises(SizingError):
            data.partition(clusters, 2, 2, rng_seed=0)

    def test_single_sample_users_ineligible_as_members(self):
        clusters = [make_cluster("solo", 1)] + [make_cluster(f"u{i}", 1) for i in range(3)]
        with pytest.raises(SizingError):
            data.partition(clusters, 1, 1, rng_seed=0)

    def test_split_leaving_empty_subset_rejected(self):
        clusters = [make_cluster(f"u{i}", 2) for i in range(4)]
        with pytest.raises(SizingError):
            data.partition(clusters, 1, 1, within_user_split=0.9, rng_seed=0)

    @settings(max_examples=40, deadline=None)
    @given(
        n_users=st.integers(6, 12),
        n_members=st.integers(1, 3),
        n_nonmembers=st.integers(0, 3),
        samples=st.integers(2, 6),
        frac=st.floats(0.2, 0.5),
        seed=st.integers(0, 1000),
    )
    def test_invariants_hold_over_random_inputs(
        self, n_users, n_members, n_nonmembers, samples, frac, seed
    ):
        clusters = [make_cluster(f"u{i}", samples) for i in range(n_users)]
        split = data.partition(clusters, n_members, n_nonmembers, frac, seed)
        # disjointness invariants are enforced by the MembershipSplit
        # constructor; check sample conservation here
        original = sorted(s.sample_id for c in clusters for s in c.samples)
        assert sorted(all_sample_ids(split)) == original


class TestSynthetic:
    def test_zero_spread_collapses_to_center(self):
        clusters = data.generate_synthetic(3, 5, 4, 0.0, 2.0, rng_seed=0)
        for c in clusters:
            X = c.feature_matrix()
            np.testing.assert_array_equal(X, np.tile(X[0], (5, 1)))

    def test_within_user_std_matches_spread(self):
        # sample statistics oracle: empirical std ~ cluster_spread within 10%
        spread = 1.5
        clusters = data.generate_synthetic(5, 400, 6, spread, 8.0, rng_seed=1)
        for c in clusters:
            X = c.feature_matrix()
            est = X.std(axis=0, ddof=1).mean()
            assert abs(est - spread) / spread < 0.10

    def test_seed_purity(self):
        a = data.generate_synthetic(4, 3, 5, 1.0, 3.0, rng_seed=9)
        b = data.generate_synthetic(4, 3, 5, 1.0, 3.0, rng_seed=9)
        for ca, cb in zip(a, b):
            np.testing.assert_array_equal(ca.feature_matrix(), cb.feature_matrix())

    def test_two_seeds_different_centers(self):
        a = data.generate_synthetic(4, 3, 5, 1.0, 3.0, rng_seed=0)
        b = data.generate_synthetic(4, 3, 5, 1.0, 3.0, rng_seed=1)
        assert not np.allclose(a[0].feature_matrix(), b[0].feature_matrix())

    def test_variable_samples_per_user(self):
        clusters = data.generate_synthetic(20, (3, 9), 4, 1.0, 3.0, rng_seed=0)
        counts = {c.n_samples for c in clusters}
        assert counts <= set(range(3, 10))
        assert len(counts) > 1

    def test_parameter_validation(self):
        with pytest.raises(SizingError):
            data.generate_synthetic(0, 5, 4, 1.0, 1.0)
        with pytest.raises(SizingError):
            data.generate_synthetic(3, 5, 1, 1.0, 1.0)
        with pytest.raises(SizingError):
            data.generate_synthetic(3, (5, 2), 4, 1.0, 1.0)


class TestCsv:
    def test_empty_body_valid_header(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("user_id,sample_id,f0,f1\n")
        assert data.load_csv(path) == []

    def test_handwritten_two_user_file(self, tmp_path):
        path = tmp_path / "two.csv"
        path.write_text(
            "user_id,sample_id,f0,f1\n"
            "alice,a1,0.5,1.5\n"
            "alice,a2,-0.5,2.5\n"
            "bob,b1,3.0,4.0\n"
        )
        clusters = data.load_csv(path)
        assert [c.user_id for c in clusters] == ["alice", "bob"]
        np.testing.assert_array_equal(
            clusters[0].feature_matrix(), [[0.5, 1.5], [-0.5, 2.5]]
        )

    def test_round_trip_lossless(self, tmp_path):
        clusters = data.generate_synthetic(50, 20, 8, 1.0, 5.0, rng_seed=3)
        path = tmp_path / "round.csv"
        data.save_csv(clusters, path)
        loaded = data.load_csv(path)
        assert len(loaded) == len(clusters)
        for a, b in zip(loaded, clusters):
            assert a.user_id == b.user_id
            diff = np.abs(a.feature_matrix() - b.feature_matrix()).max()
            assert diff < 1e-12

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("user,sample,f0\nu,s,1.0\n")
        with pytest.raises(CsvFormatError):
            data.load_csv(path)

    def test_ragged_row_reports_row_number(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("user_id,sample_id,f0,f1\nu,s,1.0\n")
        with pytest.raises(CsvFormatError) as exc:
            data.load_csv(path)
        assert exc.value.row == 2

    def test_non_numeric_feature_reports_row_number(self, tmp_path):
        path = tmp_path / "nan.csv"
        path.write_text("user_id,sample_id,f0\nu,s1,1.0\nu,s2,abc\n")
        with pytest.raises(CsvFormatError) as exc:
            data.load_csv(path)
        assert exc.value.row == 3


class TestManifest:
    def test_round_trip_rebuilds_split(self, tmp_path):
        clusters = [make_cluster(f"u{i}", 4) for i in range(8)]
        split = data.partition(clusters, 2, 2, rng_seed=5)
        path = tmp_path / "split.json"
        data.save_split_manifest(split, path)
        rebuilt = data.apply_manifest(clusters, data.load_split_manifest(path))
        assert data.split_manifest(rebuilt) == data.split_manifest(split)

    def test_unknown_sample_rejected(self):
        clusters = [make_cluster(f"u{i}", 4) for i in range(8)]
        split = data.partition(clusters, 2, 2, rng_seed=5)
        manifest = data.split_manifest(split)
        manifest["nonmembers"] = {"ghost": ["ghost_s0"]}
        with pytest.raises(SizingError):
            data.apply_manifest(clusters, manifest)


class TestTypes:
    def test_cluster_rejects_foreign_samples(self):
        s = data.Sample("a", "a_s0", np.zeros(3))
        with pytest.raises(DimensionMismatchError):
            data.UserCluster("b", (s,))

    def test_cluster_rejects_duplicate_ids(self):
        s = data.Sample("a", "a_s0", np.zeros(3))
        with pytest.raises(DimensionMismatchError):
            data.UserCluster("a", (s, s))

    def test_sample_rejects_non_finite(self):
        with pytest.raises(DimensionMismatchError):
            data.Sample("a", "a_s0", np.array([1.0, np.nan]))

    def test_split_invariants_enforced(self):
        a = make_cluster("a", 4)
        with pytest.raises(SizingError):
            data.MembershipSplit(
                training_members={"a": a.samples[:2]},
                nontraining_members={"a": a.samples[1:]},  # overlapping sample
                nonmembers={},
                shadow_pool={},
            )
