import numpy as np
import pytest

from dacpf import (
    AllWeightsDegenerate,
    InvalidParams,
    NodeCloud,
    RngStream,
    effective_sample_size,
    log_mean_exp,
    normalize_log_weights,
    split_stream,
)


def test_stream_is_reproducible():
    a = RngStream(42, (1, 3)).generator().standard_normal(8)
    b = RngStream(42, (1, 3)).generator().standard_normal(8)
    assert np.array_equal(a, b)


def test_stream_generator_restarts_from_the_same_state():
    s = RngStream(7, (2,))
    first = s.generator().standard_normal(4)
    second = s.generator().standard_normal(4)
    assert np.array_equal(first, second)


def test_split_appends_to_the_path():
    s = RngStream(5, ())
    child = split_stream(s, 9)
    assert child.seed == 5
    assert child.path == (9,)
    grand = split_stream(child, 0)
    assert grand.path == (9, 0)


def test_sibling_streams_disagree():
    base = RngStream(11, (4,))
    draws = [split_stream(base, k).generator().standard_normal(16) for k in range(6)]
    for i in range(len(draws)):
        for j in range(i + 1, len(draws)):
            assert not np.array_equal(draws[i], draws[j])


def test_seed_changes_everything():
    a = RngStream(1, (0, 0)).generator().standard_normal(16)
    b = RngStream(2, (0, 0)).generator().standard_normal(16)
    assert not np.array_equal(a, b)


def test_normalize_matches_direct_softmax():
    rng = np.random.default_rng(0)
    for _ in range(50):
        lw = rng.normal(size=rng.integers(1, 40)) * rng.uniform(0.1, 30)
        p, log_norm = normalize_log_weights(lw)
        direct = np.exp(lw - lw.max())
        direct /= direct.sum()
        assert np.allclose(p, direct, atol=1e-12)
        assert abs(p.sum() - 1.0) < 1e-12
        assert log_norm == pytest.approx(np.log(np.sum(np.exp(lw))))


def test_normalize_is_shift_invariant():
    lw = np.array([-3.0, 0.5, 2.0])
    p_a, _ = normalize_log_weights(lw)
    p_b, norm_b = normalize_log_weights(lw + 1234.5)
    assert np.allclose(p_a, p_b)
    assert np.isfinite(norm_b)


def test_normalize_handles_minus_inf_entries():
    p, _ = normalize_log_weights(np.array([0.0, -np.inf, 0.0]))
    assert np.allclose(p, [0.5, 0.0, 0.5])


def test_normalize_rejects_degenerate_and_invalid_input():
    with pytest.raises(AllWeightsDegenerate):
        normalize_log_weights(np.array([-np.inf, -np.inf]))
    with pytest.raises(InvalidParams):
        normalize_log_weights(np.array([0.0, np.nan]))
    with pytest.raises(InvalidParams):
        normalize_log_weights(np.array([0.0, np.inf]))


def test_ess_extremes():
    lw = np.zeros(32)
    assert effective_sample_size(lw) == pytest.approx(32.0)
    one_hot = np.full(32, -np.inf)
    one_hot[3] = 0.0
    assert effective_sample_size(one_hot) == pytest.approx(1.0)


def test_ess_matches_inverse_sum_of_squares():
    rng = np.random.default_rng(3)
    for _ in range(20):
        lw = rng.normal(size=17) * 2
        p, _ = normalize_log_weights(lw)
        assert effective_sample_size(lw) == pytest.approx(1.0 / np.sum(p * p))


def test_log_mean_exp_matches_naive_formula():
    rng = np.random.default_rng(4)
    for _ in range(20):
        v = rng.normal(size=13)
        assert log_mean_exp(v) == pytest.approx(np.log(np.mean(np.exp(v))))


def test_log_mean_exp_is_stable_for_large_magnitudes():
    v = np.array([1000.0, 1000.0, 1000.0 + np.log(2.0)])
    # mean of (1, 1, 2) in a frame shifted by 1000
    assert log_mean_exp(v) == pytest.approx(1000.0 + np.log(4.0 / 3.0))


def test_log_mean_exp_axis():
    m = np.array([[0.0, np.log(3.0)], [np.log(2.0), np.log(4.0)]])
    by_rows = log_mean_exp(m, axis=1)
    assert by_rows == pytest.approx([np.log(2.0), np.log(3.0)])


def test_log_mean_exp_with_minus_inf_entries():
    v = np.array([-np.inf, 0.0])
    assert log_mean_exp(v) == pytest.approx(np.log(0.5))


def _cloud(n=4, comps=(0, 1)):
    rng = np.random.default_rng(0)
    return NodeCloud(
        particles=rng.normal(size=(n, len(comps))),
        log_weights=np.zeros(n),
        component_ids=np.array(comps),
        node=0,
        time=1,
    )


def test_cloud_validates_shapes():
    c = _cloud()
    assert c.n == 4
    with pytest.raises(InvalidParams):
        NodeCloud(particles=c.particles, log_weights=np.zeros(3),
                  component_ids=c.component_ids, node=0, time=1)
    with pytest.raises(InvalidParams):
        NodeCloud(particles=c.particles, log_weights=c.log_weights,
                  component_ids=np.array([0, 1, 2]), node=0, time=1)


def test_cloud_requires_ascending_components():
    c = _cloud()
    with pytest.raises(InvalidParams):
        NodeCloud(particles=c.particles, log_weights=c.log_weights,
                  component_ids=np.array([1, 0]), node=0, time=1)


def test_cloud_permits_minus_inf_weights():
    c = _cloud()
    lw = c.log_weights.copy()
    lw[0] = -np.inf
    again = NodeCloud(particles=c.particles, log_weights=lw,
                      component_ids=c.component_ids, node=0, time=1)
    assert np.isneginf(again.log_weights[0])
