import itertools
import math

import numpy as np
import pytest
from scipy import special

from kerneldr import BoundedSpec, InvalidInputError, OutOfBoundsError, kernel_distance, ShiftInvariantKernel
from kerneldr.newlap import (NewLapMap, NodeId, bits_to_uniform, conditional_child_sample, inverse_normal_cdf,
                             newlap_embed, newlap_integer, newlap_new, node_bit_blocks, node_gaussian_bits,
                             prefix_sum_sample, prefix_sums_over_seeds, preprocess, reference_embed,
                             reference_leaves, unary_embed)

from conftest import within_se


class TestPreprocess:
    def test_derived_constants(self):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.1), 8, 0)
        assert (m.scale, m.shift) == (20, 20)
        assert m.grid_max == 20 * (2 + 20)
        assert 2 ** (m.depth - 1) < m.grid_max <= 2**m.depth

    def test_origin_maps_to_shifted_origin(self):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.1), 8, 0)
        assert preprocess(m, [0.0]).tolist() == [400]

    def test_worked_value(self):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.1), 8, 0)
        assert preprocess(m, [0.25]).tolist() == [405]

    def test_rho_apart_never_collapses(self):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.1), 8, 0)
        a, b = preprocess(m, [0.3, 0.7 + 0.1])
        assert b - a >= 2
        lo, hi = preprocess(m, [0.1, 0.2])
        assert hi - lo == 2  # t * rho = 2 * delta

    def test_range_and_rounding_error(self, rng):
        m = newlap_new(1.0, BoundedSpec(2.0, 0.05), 8, 0)
        x = rng.uniform(-2, 2, 5000)
        x = x[np.abs(x) >= 0.05]
        v = preprocess(m, x)
        assert v.min() >= 0 and v.max() <= m.grid_max
        back = v / m.scale - m.shift
        assert np.max(np.abs(back - x)) <= 0.5 / m.scale + 1e-12
        assert 0.5 / m.scale <= 0.05 / 4

    @pytest.mark.parametrize("bad", [[1.5], [0.05], [np.nan], [0.2, -3.0]])
    def test_out_of_bounds_reported(self, bad):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.1), 8, 0)
        with pytest.raises(OutOfBoundsError):
            preprocess(m, bad)

    def test_integer_grid(self):
        m = newlap_integer(1.0, 16, 4, 0)
        assert preprocess(m, [0, 16, 3]).tolist() == [0, 16, 3]
        with pytest.raises(OutOfBoundsError):
            preprocess(m, [17])
        with pytest.raises(OutOfBoundsError):
            preprocess(m, [1.5])

    def test_large_rho_keeps_grid_nonnegative(self):
        m = newlap_new(1.0, BoundedSpec(10.0, 5.0), 4, 0)
        assert preprocess(m, [-10.0]).min() >= 0
        assert preprocess(m, [10.0]).max() <= m.grid_max


class TestUnary:
    def test_examples(self):
        assert unary_embed([3], 4).tolist() == [1, 1, 1, 0]
        assert unary_embed([0], 4).tolist() == [0, 0, 0, 0]
        diff = unary_embed([5], 8).astype(int) - unary_embed([2], 8)
        assert int(diff @ diff) == 3

    def test_concatenation(self):
        assert unary_embed([1, 2], 3).tolist() == [1, 0, 0, 1, 1, 0]

    def test_out_of_range(self):
        with pytest.raises(InvalidInputError):
            unary_embed([5], 4)

    def test_isometry_exhaustive_1d(self):
        n = 64
        codes = np.stack([unary_embed([x], n) for x in range(n + 1)]).astype(np.int64)
        sq = ((codes[:, None, :] - codes[None, :, :]) ** 2).sum(-1)
        xs = np.arange(n + 1)
        np.testing.assert_array_equal(sq, np.abs(xs[:, None] - xs[None, :]))


class TestNodeBits:
    def test_deterministic_and_id_keyed(self):
        m = newlap_integer(1.0, 64, 4, 7)
        a = node_gaussian_bits(m, NodeId(1, 2, 3, 4))
        assert a.dtype == np.uint64 and a.shape == (4,)
        np.testing.assert_array_equal(a, node_gaussian_bits(m, NodeId(1, 2, 3, 4)))
        for other in (NodeId(1, 2, 3, 5), NodeId(0, 2, 3, 4), NodeId(1, 3, 3, 4), NodeId(1, 2, 4, 4)):
            assert not np.array_equal(a, node_gaussian_bits(m, other))
        other_seed = newlap_integer(1.0, 64, 4, 8)
        assert not np.array_equal(a, node_gaussian_bits(other_seed, NodeId(1, 2, 3, 4)))

    def test_blocks_agree_with_single_node(self):
        m = newlap_integer(1.0, 64, 4, 7)
        blocks = node_bit_blocks(m, 1, 2, [1, 2, 11])
        np.testing.assert_array_equal(blocks[2], node_gaussian_bits(m, NodeId(1, 2, 3, 3)))

    def test_invalid_node(self):
        m = newlap_integer(1.0, 8, 4, 7)
        with pytest.raises(InvalidInputError):
            node_gaussian_bits(m, NodeId(0, 0, 2, 4))
        with pytest.raises(InvalidInputError):
            node_gaussian_bits(m, NodeId(0, 0, 4, 0))

    def test_monobit(self):
        m = newlap_integer(1.0, 2**20, 1, 2024)
        blocks = node_bit_blocks(m, 0, 0, np.arange(1, 1_000_001))
        ones = np.unpackbits(blocks.view(np.uint8)).mean()
        assert abs(ones - 0.5) <= 0.002

    def test_distinct_ids_uncorrelated(self):
        # 10^6 pairs so that the 0.004 band is 4 standard errors
        m = newlap_integer(1.0, 2**21, 2, 99)
        heaps = np.arange(1, 1_000_001)
        lead = node_bit_blocks(m, 0, 0, heaps)[:, 0].astype(float)
        for other in (node_bit_blocks(m, 0, 0, heaps + 1)[:, 0], node_bit_blocks(m, 0, 1, heaps)[:, 0],
                      node_bit_blocks(m, 1, 0, heaps)[:, 0]):
            r = np.corrcoef(lead, other.astype(float))[0, 1]
            assert abs(r) <= 0.004


class TestInverseNormal:
    def test_against_exact_quantile(self):
        p = np.concatenate([np.geomspace(1e-15, 0.02425, 2000), np.linspace(0.02425, 0.97575, 5000),
                            1 - np.geomspace(1e-15, 0.02425, 2000)])
        got = np.array([inverse_normal_cdf(v) for v in p])
        assert np.max(np.abs(got - special.ndtri(p))) < 1.2e-8

    def test_uniform_from_bits_in_open_interval(self):
        assert 0 < bits_to_uniform(np.array([0], dtype=np.uint64)) < 1e-15
        assert 1 - 1e-15 < bits_to_uniform(np.array([2**64 - 1], dtype=np.uint64)) < 1


class TestConditionalChild:
    def _samples(self, a, count, var0, n=100_000):
        m = newlap_integer(1.0, 2**17, 1, 5)
        words = node_bit_blocks(m, 0, 0, np.arange(1, n + 1))
        return np.array([conditional_child_sample(a, count, var0, w) for w in words])

    @pytest.mark.parametrize("a,count,var0", [(3.0, 2, 1.0), (-1.5, 8, 0.25), (0.0, 64, 2.0)])
    def test_conditional_moments(self, a, count, var0):
        b = self._samples(a, count, var0)
        target_var = count * var0 / 4
        assert within_se(b.mean(), a / 2, b.std() / math.sqrt(b.size))
        dev = (b - a / 2) ** 2
        assert within_se(dev.mean(), target_var, dev.std() / math.sqrt(b.size))

    def test_single_leaf_children(self):
        b = self._samples(0.0, 2, 1.0, n=20_000)
        assert b.var() == pytest.approx(0.5, rel=0.05)

    def test_rejects_leaf_parent(self):
        with pytest.raises(InvalidInputError):
            conditional_child_sample(0.0, 1, 1.0, np.zeros(4, dtype=np.uint64))

    def test_agrees_with_tree_expansion(self):
        m = newlap_integer(0.5, 8, 1, 3)
        leaves = reference_leaves(m, 0, 0)
        root = leaves.sum()
        left = conditional_child_sample(root, 8, m.leaf_variance, node_gaussian_bits(m, NodeId(0, 0, 1, 0)))
        assert left == pytest.approx(leaves[:4].sum(), abs=1e-12)


class TestPrefixSum:
    def test_empty_prefix(self):
        m = newlap_integer(0.5, 16, 2, 1)
        assert prefix_sum_sample(m, 0, 0, 0) == 0.0

    def test_full_prefix_is_root(self):
        m = newlap_integer(0.5, 16, 2, 1)
        root_word = node_gaussian_bits(m, NodeId(0, 1, 0, 0))
        root = math.sqrt(16 * m.leaf_variance) * inverse_normal_cdf(bits_to_uniform(root_word))
        assert prefix_sum_sample(m, 0, 1, 16) == pytest.approx(root, abs=0, rel=0)

    @pytest.mark.parametrize("grid_max", [1, 5, 16, 33])
    def test_matches_leaf_sums(self, grid_max):
        m = newlap_integer(0.5, grid_max, 2, 17)
        leaves = reference_leaves(m, 1, 1)
        for x in range(grid_max + 1):
            assert prefix_sum_sample(m, 1, 1, x) == pytest.approx(leaves[:x].sum(), abs=1e-9)

    def test_out_of_range(self):
        m = newlap_integer(0.5, 8, 1, 0)
        with pytest.raises(InvalidInputError):
            prefix_sum_sample(m, 0, 0, 9)

    def test_covariance_structure(self):
        m = newlap_integer(0.5, 8, 1, 0)
        assert m.depth == 3
        vals = prefix_sums_over_seeds(m, np.arange(20_000), np.arange(9))
        s2 = m.leaf_variance
        for x, y in itertools.combinations_with_replacement(range(1, 9), 2):
            prod = vals[:, x] * vals[:, y]
            assert within_se(prod.mean(), s2 * min(x, y), prod.std() / math.sqrt(prod.size))
            diff2 = (vals[:, x] - vals[:, y]) ** 2
            if x != y:
                assert within_se(diff2.mean(), s2 * abs(x - y), diff2.std() / math.sqrt(diff2.size))


class TestEmbed:
    def test_self_distance_and_obliviousness(self, rng):
        m = newlap_new(1.0, BoundedSpec(1.0, 0.1), 64, 9)
        pts = np.round(rng.uniform(-1, 1, (5, 3)), 1)
        pts[np.abs(pts) < 0.1] = 0.0
        batch = newlap_embed(m, pts)
        for i, p in enumerate(pts):
            alone = newlap_embed(m, p)
            np.testing.assert_array_equal(alone, batch[i])
            np.testing.assert_array_equal(alone, newlap_embed(m, p))
        companions = newlap_embed(m, np.vstack([pts[2], -pts[2]]))
        np.testing.assert_array_equal(companions[0], batch[2])

    def test_unit_norm_and_shape(self):
        m = newlap_new(1.0, BoundedSpec(1.0, 0.1), 32, 9)
        v = newlap_embed(m, [0.5, -0.3])
        assert v.shape == (64,)
        assert abs(np.linalg.norm(v) - 1) <= 1e-12

    def test_reference_equivalence(self):
        m = newlap_integer(0.7, 16, 8, 4)
        xs = np.arange(17)[:, None]
        np.testing.assert_allclose(newlap_embed(m, xs), reference_embed(m, xs), rtol=0, atol=1e-9)

    def test_reference_equivalence_bounded(self):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.5), 4, 12)
        assert m.grid_max <= 64
        pts = np.array([[0.5, -1.0], [0.0, 1.0], [-0.5, 0.5]])
        np.testing.assert_allclose(newlap_embed(m, pts), reference_embed(m, pts), rtol=0, atol=1e-9)

    def test_mean_squared_distance(self):
        lam, D = 0.5, 2048
        x, y = np.array([-1.0]), np.array([1.0])
        b = BoundedSpec(2.0, 0.5)
        d2 = np.empty(500)
        for s in range(500):
            v = newlap_embed(newlap_new(lam, b, D, s), np.vstack([x, y]))
            d2[s] = np.sum((v[0] - v[1]) ** 2)
        target = 2 - 2 * math.exp(-1)
        assert within_se(d2.mean(), target, d2.std(ddof=1) / math.sqrt(d2.size))

    def test_relative_error_concentration(self, rng):
        lam, D = 1.0, 4096
        b = BoundedSpec(1.0, 0.1)
        k = ShiftInvariantKernel.laplacian(lam)
        ok = 0
        for s in range(200):
            grid = np.arange(-20, 21) / 20
            grid = grid[(grid == 0) | (np.abs(grid) >= 0.1)]
            x, y = rng.choice(grid, (2, 3))
            if np.abs(x - y).sum() < 0.1:
                y = x.copy()
                y[0] = 0.5 if x[0] != 0.5 else -0.5
            v = newlap_embed(newlap_new(lam, b, D, s), np.vstack([x, y]))
            exact = kernel_distance(k, x, y)
            ok += abs(np.linalg.norm(v[0] - v[1]) - exact) <= 0.15 * exact
        assert ok >= 180


class TestLineFormat:
    def test_round_trip(self):
        m = newlap_new(0.5, BoundedSpec(1.0, 0.01), 256, 42)
        line = m.to_line()
        assert line == "newlap lambda=0.5 delta=1.0 rho=0.01 D=256 seed=42"
        assert NewLapMap.from_line(line) == m

    def test_bad_line(self):
        with pytest.raises(InvalidInputError):
            NewLapMap.from_line("newlap lambda=0.5 D=3")

    def test_integer_maps_have_no_line(self):
        with pytest.raises(InvalidInputError):
            newlap_integer(1.0, 8, 2, 0).to_line()
