import numpy as np
import pytest

from dacpf import (
    CapExceeded,
    FunctionPairWeights,
    InvalidParams,
    InvalidProbabilities,
    MergeStrategy,
    NodeCloud,
    add_permutation_block,
    build_identity_block,
    merge_adaptive,
    merge_full,
    merge_lightweight,
    merge_linear,
    stratified_resample,
    theta_cap,
)
from dacpf.resampling import resample_pairs
from dacpf.resampling import DEFAULT_FULL_CAP


def test_theta_cap_small_values():
    assert [theta_cap(n) for n in (1, 2, 3, 4, 5, 63, 64, 65, 100, 101)] == \
        [1, 2, 2, 2, 3, 8, 8, 9, 10, 11]


def test_theta_cap_is_exact_ceil_sqrt():
    for n in range(1, 1001):
        cap = theta_cap(n)
        assert (cap - 1) ** 2 < n <= cap * cap


def test_stratified_returns_requested_count():
    rng = np.random.default_rng(0)
    p = np.full(10, 0.1)
    idx = stratified_resample(p, 25, rng)
    assert idx.shape == (25,)
    assert idx.min() >= 0 and idx.max() < 10
    assert np.all(np.diff(idx) >= 0)


def test_stratified_offspring_counts_stay_near_expectation():
    # stratified inversion pins each count within one of its expectation
    rng = np.random.default_rng(1)
    p = np.array([0.5, 0.25, 0.125, 0.125])
    for _ in range(200):
        idx = stratified_resample(p, 64, rng)
        counts = np.bincount(idx, minlength=4)
        assert np.all(np.abs(counts - 64 * p) <= 1.0 + 1e-9)


def test_resample_pairs_matches_target_frequencies():
    rng = np.random.default_rng(2)
    idx_left = np.tile(np.arange(20), 4)
    raw = rng.uniform(0.2, 1.0, size=80)
    p = raw / raw.sum()
    counts = np.zeros(80)
    trials = 4000
    for _ in range(trials):
        sel = resample_pairs(idx_left, p, 20, rng)
        counts += np.bincount(sel, minlength=80)
    emp = counts / (trials * 20)
    se = np.sqrt(p * (1 - p) / (trials * 20))
    assert np.all(np.abs(emp - p) <= 4 * se + 1e-9)


def test_resample_pairs_passes_left_marginal_through_at_flat_weights():
    # with uniform weights each stratum covers exactly the theta copies of
    # one left particle, so every left index survives exactly once no
    # matter how many permutation blocks were appended
    rng = np.random.default_rng(3)
    theta, n = 8, 100
    idx_left = np.tile(np.arange(n), theta)
    p = np.full(theta * n, 1.0 / (theta * n))
    for _ in range(25):
        sel = resample_pairs(idx_left, p, n, rng)
        assert np.array_equal(np.bincount(idx_left[sel], minlength=n), np.ones(n, dtype=int))


def test_resample_pairs_reproduces_whole_block_at_flat_weights():
    # the shared offset picks the same block position in every left group,
    # so at uniform weights the survivors are exactly one permutation block
    # and the right marginal passes through as well
    rng = np.random.default_rng(4)
    theta, n = 32, 100
    blocks = [np.arange(n)] + [rng.permutation(n) for _ in range(theta - 1)]
    idx_left = np.tile(np.arange(n), theta)
    idx_right = np.concatenate(blocks)
    p = np.full(theta * n, 1.0 / (theta * n))
    for _ in range(25):
        sel = resample_pairs(idx_left, p, n, rng)
        assert np.array_equal(np.bincount(idx_left[sel], minlength=n), np.ones(n, dtype=int))
        assert np.array_equal(np.bincount(idx_right[sel], minlength=n), np.ones(n, dtype=int))


def test_stratified_rejects_bad_probabilities():
    rng = np.random.default_rng(0)
    with pytest.raises(InvalidProbabilities):
        stratified_resample(np.array([0.5, -0.1, 0.6]), 4, rng)
    with pytest.raises(InvalidProbabilities):
        stratified_resample(np.array([0.5, 0.4]), 4, rng)
    with pytest.raises(InvalidProbabilities):
        stratified_resample(np.array([0.5, np.nan]), 4, rng)
    with pytest.raises(InvalidProbabilities):
        stratified_resample(np.array([]), 4, rng)


def test_merge_strategy_validation():
    with pytest.raises(InvalidParams):
        MergeStrategy("sideways")
    with pytest.raises(InvalidParams):
        MergeStrategy.lightweight(0)
    with pytest.raises(InvalidParams):
        MergeStrategy.adaptive(0.5)
    assert MergeStrategy.full(123).full_cap == 123
    assert MergeStrategy.linear().kind == "linear"


def _cloud(rng, n, comps, node, weights=None):
    lw = np.zeros(n) if weights is None else weights
    return NodeCloud(particles=rng.normal(size=(n, len(comps))), log_weights=lw,
                     component_ids=np.array(comps), node=node, time=2)


def _pair(rng, n=16, lw_left=None, lw_right=None):
    left = _cloud(rng, n, (0,), 1, lw_left)
    right = _cloud(rng, n, (1,), 2, lw_right)
    return left, right


def _product_fn(left, right):
    # log m = z_l * z_r, cheap and asymmetric enough to expose index bugs
    zl = left.particles[:, 0]
    zr = right.particles[:, 0]
    return FunctionPairWeights(lambda il, ir: zl[il] * zr[ir])


def test_identity_block_holds_aligned_pairs():
    rng = np.random.default_rng(2)
    left, right = _pair(rng, n=8, lw_left=rng.normal(size=8), lw_right=rng.normal(size=8))
    fn = _product_fn(left, right)
    batch = build_identity_block(left, right, fn)
    assert batch.theta == 1
    assert batch.idx_left.size == 8
    assert batch.pairs[:2] == [(0, 0), (1, 1)]
    assert np.array_equal(batch.idx_left, np.arange(8))
    assert np.array_equal(batch.idx_right, np.arange(8))
    expected_lm = left.particles[:, 0] * right.particles[:, 0]
    assert np.allclose(batch.log_mixture_weights, expected_lm)
    assert np.allclose(batch.log_pair_weights, left.log_weights + right.log_weights)
    assert np.allclose(batch.log_updated_weights,
                       batch.log_pair_weights + batch.log_mixture_weights)


def test_permutation_block_appends_without_touching_the_prefix():
    rng = np.random.default_rng(3)
    left, right = _pair(rng, n=8)
    fn = _product_fn(left, right)
    batch = build_identity_block(left, right, fn)
    grown = add_permutation_block(batch, np.random.default_rng(9), fn)
    assert grown.theta == 2
    assert grown.idx_left.size == 16
    assert np.array_equal(grown.idx_left[:8], batch.idx_left)
    assert np.array_equal(grown.idx_right[:8], batch.idx_right)
    assert np.array_equal(grown.log_updated_weights[:8], batch.log_updated_weights)
    # the new block pairs each left particle with a permutation of the right
    assert np.array_equal(grown.idx_left[8:], np.arange(8))
    assert sorted(grown.idx_right[8:].tolist()) == list(range(8))
    lm_new = left.particles[grown.idx_left[8:], 0] * right.particles[grown.idx_right[8:], 0]
    assert np.allclose(grown.log_mixture_weights[8:], lm_new)


def test_permutation_block_is_deterministic_in_the_rng():
    rng = np.random.default_rng(4)
    left, right = _pair(rng, n=12)
    fn = _product_fn(left, right)
    base = build_identity_block(left, right, fn)
    a = add_permutation_block(base, np.random.default_rng(7), fn)
    b = add_permutation_block(base, np.random.default_rng(7), fn)
    assert np.array_equal(a.idx_right, b.idx_right)


def test_merge_full_prefers_the_dominant_pair():
    rng = np.random.default_rng(5)
    left, right = _pair(rng, n=6)
    # one pair gets essentially all the updated weight
    fn = FunctionPairWeights(lambda il, ir: np.where((il == 2) & (ir == 4), 0.0, -1e6))
    cloud = merge_full(left, right, fn, np.random.default_rng(0), node=7)
    assert cloud.node == 7
    assert cloud.n == 6
    expected = np.concatenate([left.particles[2], right.particles[4]])
    assert np.allclose(cloud.particles, expected[None, :])
    assert np.array_equal(cloud.component_ids, np.array([0, 1]))
    assert np.all(cloud.log_weights == 0.0)


def test_merge_full_matches_brute_force_distribution():
    # frequencies over many merges approach the normalized N^2 pair weights
    rng = np.random.default_rng(6)
    left, right = _pair(rng, n=4, lw_left=rng.normal(size=4), lw_right=rng.normal(size=4))
    fn = _product_fn(left, right)
    lu = (left.log_weights[:, None] + right.log_weights[None, :]
          + left.particles[:, 0][:, None] * right.particles[:, 0][None, :]).ravel()
    target = np.exp(lu - lu.max())
    target /= target.sum()
    counts = np.zeros(16)
    draws = 3000
    sel_rng = np.random.default_rng(11)
    for _ in range(draws):
        cloud = merge_full(left, right, fn, sel_rng)
        for row in cloud.particles:
            i = int(np.where(left.particles[:, 0] == row[0])[0][0])
            j = int(np.where(right.particles[:, 0] == row[1])[0][0])
            counts[i * 4 + j] += 1
    freq = counts / counts.sum()
    se = np.sqrt(target * (1 - target) / (draws * 4))
    assert np.all(np.abs(freq - target) < 5 * se + 1e-3)


def test_merge_full_cap():
    rng = np.random.default_rng(7)
    left, right = _pair(rng, n=8)
    fn = _product_fn(left, right)
    with pytest.raises(CapExceeded):
        merge_full(left, right, fn, np.random.default_rng(0), cap=7)
    assert DEFAULT_FULL_CAP == 2000


def test_merge_lightweight_shapes_and_theta_bounds():
    rng = np.random.default_rng(8)
    left, right = _pair(rng, n=16)
    fn = _product_fn(left, right)
    cloud = merge_lightweight(left, right, fn, 3, np.random.default_rng(0), node=5)
    assert cloud.n == 16
    assert cloud.particles.shape == (16, 2)
    assert np.all(cloud.log_weights == 0.0)
    with pytest.raises(InvalidParams):
        merge_lightweight(left, right, fn, 0, np.random.default_rng(0))
    with pytest.raises(InvalidParams):
        merge_lightweight(left, right, fn, 17, np.random.default_rng(0))


def test_merge_adaptive_theta_stays_within_cap():
    rng = np.random.default_rng(9)
    for trial in range(10):
        left, right = _pair(rng, n=25)
        fn = _product_fn(left, right)
        cloud, theta = merge_adaptive(left, right, fn, float(25), np.random.default_rng(trial))
        assert 1 <= theta <= theta_cap(25)
        assert cloud.n == 25


def test_merge_adaptive_stops_early_when_weights_are_flat():
    rng = np.random.default_rng(10)
    left, right = _pair(rng, n=36)
    flat = FunctionPairWeights(lambda il, ir: np.zeros(il.shape[0]))
    # equal weights everywhere: the identity block already meets any target
    _, theta = merge_adaptive(left, right, flat, float(36), np.random.default_rng(0))
    assert theta == 1


def test_merge_adaptive_grows_theta_under_concentrated_weights():
    rng = np.random.default_rng(12)
    left, right = _pair(rng, n=64)
    # a strongly multiplicative weight surface keeps the candidate ESS tiny,
    # so the target of N can only be abandoned at the cap
    zl = left.particles[:, 0]
    zr = right.particles[:, 0]
    fn = FunctionPairWeights(lambda il, ir: 10.0 * zl[il] * zr[ir])
    _, theta = merge_adaptive(left, right, fn, float(64), np.random.default_rng(1))
    assert theta == theta_cap(64)


def test_merge_linear_keeps_mixture_weights_of_survivors():
    rng = np.random.default_rng(13)
    lw_l = rng.normal(size=8)
    lw_r = rng.normal(size=8)
    left, right = _pair(rng, n=8, lw_left=lw_l, lw_right=lw_r)
    fn = _product_fn(left, right)
    cloud = merge_linear(left, right, fn, np.random.default_rng(2), node=3)
    assert cloud.n == 8
    # output weights are the mixture weights of the selected aligned pairs
    for row, lw in zip(cloud.particles, cloud.log_weights):
        i = int(np.where(np.isclose(left.particles[:, 0], row[0]))[0][0])
        j = int(np.where(np.isclose(right.particles[:, 0], row[1]))[0][0])
        assert i == j
        assert lw == pytest.approx(row[0] * row[1])


def test_merges_reject_unequal_cloud_sizes():
    rng = np.random.default_rng(14)
    left = _cloud(rng, 8, (0,), 1)
    right = _cloud(rng, 9, (1,), 2)
    fn = FunctionPairWeights(lambda il, ir: np.zeros(il.shape[0]))
    with pytest.raises(InvalidParams):
        merge_full(left, right, fn, np.random.default_rng(0))
    with pytest.raises(InvalidParams):
        build_identity_block(left, right, fn)
