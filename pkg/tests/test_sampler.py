"""Tree sampling: hand-built trees, determinism, merging, censoring."""

import numpy as np
import pytest

from critgw import (
    CapExceededError,
    SamplerConfig,
    replay_tree,
    sample_batch,
    sample_tree,
)
from critgw.sampler import derive_key


def cfg(seed=42, **kw):
    kw.setdefault("root_type", 0)
    return SamplerConfig(master_seed=seed, **kw)


class TestConfig:
    def test_lambda_range_enforced(self):
        with pytest.raises(ValueError):
            cfg(lambdas=(1.0,))
        with pytest.raises(ValueError):
            cfg(lambdas=(0.0,))

    def test_policy_checked(self):
        with pytest.raises(ValueError):
            cfg(cap_policy="ignore")

    def test_key_derivation_is_stable_and_distinct(self):
        k1 = derive_key(42, 0)
        k2 = derive_key(42, 1)
        k3 = derive_key(43, 0)
        assert not np.array_equal(k1, k2)
        assert not np.array_equal(k1, k3)
        np.testing.assert_array_equal(k1, derive_key(42, 0))


class TestReplay:
    def test_single_death(self, e1):
        t = replay_tree(e1, cfg(lambdas=(0.5,)), [0])
        assert t.size == 1
        np.testing.assert_array_equal(t.f, [1])
        assert t.s_lambda[0] == 1.0
        np.testing.assert_array_equal(t.depth_histogram, [1])

    def test_depth_one_binary_tree(self, e1):
        t = replay_tree(e1, cfg(lambdas=(0.25, 0.75)), [2, 0, 0])
        assert t.size == 3
        np.testing.assert_array_equal(t.f, [3])
        np.testing.assert_allclose(t.s_lambda, [1.5, 2.5])  # 1 + 2 lam
        np.testing.assert_array_equal(t.depth_histogram, [1, 2])

    def test_two_node_cross_type_tree(self, e4):
        config = cfg(lambdas=(0.5,), tracked_rules=((0, (0, 1)),))
        t = replay_tree(e4, config, [(0, 1), (0, 0)])
        np.testing.assert_array_equal(t.f, [1, 1])
        assert t.size == 2
        assert t.rule_counts[(0, (0, 1))] == 1
        assert t.s_lambda[0] == 1.5

    def test_incomplete_sequence_rejected(self, e1):
        with pytest.raises(ValueError):
            replay_tree(e1, cfg(), [2, 0])  # second child never resolved

    def test_overlong_sequence_rejected(self, e1):
        with pytest.raises(ValueError):
            replay_tree(e1, cfg(), [0, 0])

    def test_additive_table_accumulates(self, e1):
        config = cfg(additive_g={0: np.array([1.0, 0.0])})  # count leaves
        t = replay_tree(e1, config, [2, 0, 0])
        assert t.g_sum == 2.0


class TestSampleTree:
    def test_deterministic_in_seed_and_index(self, e4):
        config = cfg(seed=7, lambdas=(0.5,))
        a = sample_tree(e4, config, 3)
        b = sample_tree(e4, config, 3)
        assert a.size == b.size
        np.testing.assert_array_equal(a.f, b.f)
        np.testing.assert_array_equal(a.depth_histogram, b.depth_histogram)

    def test_different_indices_differ(self, e1):
        config = cfg(seed=7)
        sizes = {sample_tree(e1, config, i).size for i in range(40)}
        assert len(sizes) > 1

    def test_size_is_sum_of_type_counts(self, e4):
        config = cfg(seed=11)
        for i in range(200):
            t = sample_tree(e4, config, i)
            assert t.size == t.f.sum()

    def test_rule_counts_partition_particles(self, e4):
        # every particle of a type applies exactly one rule (uncensored)
        all_rules = tuple((k, tuple(int(x) for x in n)) for k in range(2) for n in e4.counts[k])
        config = cfg(seed=13, tracked_rules=all_rules)
        for i in range(200):
            t = sample_tree(e4, config, i)
            assert not t.censored
            for k in range(2):
                applied = sum(v for (j, _), v in t.rule_counts.items() if j == k)
                assert applied == t.f[k]

    def test_depth_discount_matches_histogram(self, e1):
        config = cfg(seed=5, lambdas=(0.3, 0.9))
        for i in range(50):
            t = sample_tree(e1, config, i)
            for lam, val in zip((0.3, 0.9), t.s_lambda):
                assert val == pytest.approx(t.depth_discounted_sum(lam))
            assert 1.0 <= t.s_lambda[0] <= t.size

    def test_abort_policy_raises(self, e1):
        config = cfg(seed=1, node_cap=10, cap_policy="abort")
        with pytest.raises(CapExceededError):
            for i in range(500):
                sample_tree(e1, config, i)

    def test_censor_policy_flags_and_truncates(self, e1):
        config = cfg(seed=1, node_cap=10)
        censored = [sample_tree(e1, config, i) for i in range(500)]
        flagged = [t for t in censored if t.censored]
        assert flagged, "expected some censored trees at cap 10"
        for t in flagged:
            assert t.size > 10  # first generation crossing the cap is kept
            assert t.size == t.f.sum()


class TestBatch:
    def test_single_tree_batch_matches_sample_tree(self, e4):
        config = cfg(seed=3, lambdas=(0.5,))
        batch = sample_batch(e4, config, 1)
        tree = sample_tree(e4, config, 0)
        assert batch.n_trees == 1
        assert batch.size[0] == tree.size
        np.testing.assert_array_equal(batch.f[0], tree.f)
        np.testing.assert_allclose(batch.s_lambda[0], tree.s_lambda)

    def test_merge_of_disjoint_ranges_identical(self, e4):
        config = cfg(seed=9, lambdas=(0.4,))
        whole = sample_batch(e4, config, 60)
        from critgw.sampler import _assemble, _sample_range

        left = _sample_range(e4, config, 0, 25)
        right = _sample_range(e4, config, 25, 60)
        merged = _assemble(e4, config, [right, left])  # out of order on purpose
        np.testing.assert_array_equal(whole.tree_index, merged.tree_index)
        np.testing.assert_array_equal(whole.f, merged.f)
        np.testing.assert_array_equal(whole.size, merged.size)
        np.testing.assert_array_equal(whole.depth_values, merged.depth_values)
        np.testing.assert_array_equal(whole.depth_offsets, merged.depth_offsets)
        np.testing.assert_allclose(whole.s_lambda, merged.s_lambda, rtol=0, atol=0)

    def test_worker_count_does_not_change_results(self, e1):
        config = cfg(seed=21, lambdas=(0.6,))
        one = sample_batch(e1, config, 300, workers=1)
        two = sample_batch(e1, config, 300, workers=2)
        np.testing.assert_array_equal(one.f, two.f)
        np.testing.assert_array_equal(one.size, two.size)
        np.testing.assert_allclose(one.s_lambda, two.s_lambda, rtol=0, atol=0)
        np.testing.assert_array_equal(one.depth_values, two.depth_values)

    def test_small_tree_probabilities(self, e1):
        # exact enumeration: P(size 1) = 1/2, P(size 3) = 1/8
        config = cfg(seed=123)
        batch = sample_batch(e1, config, 100_000)
        p1 = float((batch.size == 1).mean())
        p3 = float((batch.size == 3).mean())
        se1 = np.sqrt(0.5 * 0.5 / batch.n_trees)
        se3 = np.sqrt(0.125 * 0.875 / batch.n_trees)
        assert abs(p1 - 0.5) <= 3 * se1
        assert abs(p3 - 0.125) <= 3 * se3
        assert 1 <= np.median(batch.size) <= 3

    def test_no_censoring_at_small_sizes(self, e1):
        config = cfg(seed=2, node_cap=10**9)
        batch = sample_batch(e1, config, 2000)
        assert batch.censored_count == 0

    def test_prefix_restricts_indices(self, e1):
        config = cfg(seed=4, lambdas=(0.5,))
        batch = sample_batch(e1, config, 100)
        head = batch.prefix(30)
        assert head.n_trees == 30
        np.testing.assert_array_equal(head.f, batch.f[:30])
        np.testing.assert_array_equal(
            head.depth_values, batch.depth_values[: head.depth_offsets[-1]]
        )

    def test_depth_discounted_revaluation(self, e1):
        config = cfg(seed=8, lambdas=(0.7,))
        batch = sample_batch(e1, config, 500)
        recomputed = batch.depth_discounted(0.7)
        np.testing.assert_allclose(recomputed, batch.s_lambda[:, 0], rtol=1e-12)

    def test_csv_dump_round_trips(self, e4, tmp_path):
        config = cfg(seed=6, lambdas=(0.5, 0.9))
        batch = sample_batch(e4, config, 50)
        path = tmp_path / "trees.csv"
        batch.to_csv(path, header_comment="seed=6")
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "# seed=6"
        header = lines[1].split(",")
        assert header == [
            "tree_index", "size", "f_1", "f_2", "censored", "s_lambda_0.5", "s_lambda_0.9",
        ]
        assert len(lines) == 52
        first = lines[2].split(",")
        assert int(first[0]) == 0
        assert int(first[1]) == int(batch.size[0])
