#!/usr/bin/env python3
"""
Blockpost - Model Tests
========================
closed form pieces: priors, marginal score, conditional posterior,
variance estimate, target rate

run: python test_model.py  (or pytest)
"""

import math
import os
import sys

import numpy as np
from numpy.testing import assert_allclose
from scipy.special import logsumexp

# add project root to path
ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, ROOT)

from core.errors import ConfigError, DomainError
from core.model import (
    BlockConfig,
    Hyperparams,
    SequenceData,
    block_stats,
    blocks,
    conditional_posterior_params,
    configuration_of,
    estimate_variance,
    fitted_vector,
    log_block_size_pmf,
    log_block_size_prior,
    log_config_prior,
    log_conditional_prior,
    log_likelihood,
    log_marginal_posterior_unnorm,
    log_size_normalizer,
    resolve_sigma2,
    target_rate,
)
from utils.helpers import run_tests


def _raises(exc, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc:
        return
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def test_blocks_cover_the_sequence():
    config = BlockConfig(5, (2, 3))
    assert blocks(config) == [(1, 2), (3, 3), (4, 5)]
    assert config.size == 3
    assert blocks(BlockConfig.single(4)) == [(1, 4)]
    assert BlockConfig.saturated(3).blocks() == [(1, 1), (2, 2), (3, 3)]
    assert config.block_of(1) == 0 and config.block_of(3) == 1 and config.block_of(5) == 2


def test_block_config_rejects_bad_points():
    _raises(ConfigError, BlockConfig, 5, (3, 2))
    _raises(ConfigError, BlockConfig, 5, (0,))
    _raises(ConfigError, BlockConfig, 5, (5,))
    _raises(ConfigError, BlockConfig, 0, ())


def test_mask_round_trip_and_edit_moves():
    config = BlockConfig(6, (1, 4))
    assert config.to_mask() == 0b1001
    assert BlockConfig.from_mask(6, config.to_mask()) == config
    assert config.split(2) == BlockConfig(6, (1, 2, 4))
    assert config.merge(4) == BlockConfig(6, (1,))
    _raises(ConfigError, config.split, 4)
    _raises(ConfigError, config.merge, 3)


def test_segment_stats_match_direct_block_stats():
    rng = np.random.default_rng(3)
    data = SequenceData(1000.0 + rng.standard_normal(40))
    config = BlockConfig(40, (5, 6, 20, 33))
    direct = block_stats(data, config)
    edges = config.edges()
    for s in range(config.size):
        size, mean, rss = data.segment_stats(edges[s], edges[s + 1])
        assert size == direct.sizes[s]
        assert_allclose(mean, direct.means[s], rtol=1e-12)
        assert_allclose(rss, direct.rss[s], atol=1e-8)


def test_block_stats_length_mismatch():
    data = SequenceData([1.0, 2.0, 3.0])
    _raises(ConfigError, block_stats, data, BlockConfig(4, ()))


def test_size_normalizer_matches_direct_sum():
    for n in (1, 2, 7, 50):
        for lam in (0.3, 1.0, 2.5):
            direct = logsumexp([-lam * (b - 1) * math.log(n) for b in range(1, n + 1)])
            assert_allclose(log_size_normalizer(n, lam), direct, rtol=1e-12, atol=1e-14)


def test_block_size_prior_normalizes():
    n, lam = 9, 1.0
    total = sum(math.exp(log_block_size_prior(b, n, lam)) for b in range(1, n + 1))
    assert_allclose(total, 1.0, rtol=1e-12)
    assert_allclose(np.exp(log_block_size_pmf(n, lam)).sum(), 1.0, rtol=1e-12)
    assert_allclose(log_block_size_pmf(n, lam)[2], log_block_size_prior(3, n, lam), rtol=1e-12)
    _raises(DomainError, log_block_size_prior, 0, n, lam)
    _raises(DomainError, log_block_size_prior, n + 1, n, lam)


def test_config_prior_sums_to_one():
    n = 7
    total = sum(math.exp(log_config_prior(BlockConfig.from_mask(n, m), 1.0)) for m in range(1 << (n - 1)))
    assert_allclose(total, 1.0, rtol=1e-12)


def test_two_point_fixed_point():
    # Y = (0, 2), sigma2 = 1, defaults -> P(|B| = 2) is about 0.488
    data = SequenceData([0.0, 2.0])
    hp = Hyperparams(sigma2=1.0)
    one = log_marginal_posterior_unnorm(BlockConfig.single(2), data, hp)
    two = log_marginal_posterior_unnorm(BlockConfig.saturated(2), data, hp)
    p_two = 1.0 / (1.0 + math.exp(one - two))
    assert abs(p_two - 0.488) < 1e-3, p_two


def test_marginal_score_is_shift_invariant():
    rng = np.random.default_rng(11)
    data = SequenceData(rng.standard_normal(12))
    hp = Hyperparams(sigma2=0.7)
    config = BlockConfig(12, (3, 8))
    assert_allclose(
        log_marginal_posterior_unnorm(config, data, hp),
        log_marginal_posterior_unnorm(config, data.shifted(37.5), hp),
        rtol=1e-10,
    )


def test_saturated_config_has_zero_rss():
    data = SequenceData([0.3, -1.2, 4.0, 2.2])
    assert block_stats(data, BlockConfig.saturated(4)).total_rss == 0.0


def test_hyperparams_validation():
    _raises(DomainError, Hyperparams, sigma2=1.0, alpha=1.0)
    _raises(DomainError, Hyperparams, sigma2=1.0, alpha=0.0)
    _raises(DomainError, Hyperparams, sigma2=0.0)
    _raises(DomainError, Hyperparams, sigma2=1.0, v=-1.0)
    _raises(DomainError, Hyperparams, sigma2=1.0, lam=float("nan"))


def test_conditional_posterior_variance():
    data = SequenceData([1.0, 3.0, 10.0, 10.0, 10.0, 12.0])
    hp = Hyperparams(sigma2=2.0, alpha=0.5, v=3.0)
    means, variances = conditional_posterior_params(BlockConfig(6, (2,)), data, hp)
    assert_allclose(means, [2.0, 10.5])
    expected = [2.0 * 3.0 / (m * (0.5 * 3.0 + 2.0)) for m in (2, 4)]
    assert_allclose(variances, expected)


def test_conditional_prior_density():
    data = SequenceData([0.0, 2.0, 5.0])
    hp = Hyperparams(sigma2=1.0, v=2.0)
    config = BlockConfig(3, (2,))
    # blocks: mean 1 var 1, mean 5 var 2
    expected = -0.5 * (math.log(2 * math.pi * 1.0) + 0.25) - 0.5 * math.log(2 * math.pi * 2.0)
    assert_allclose(log_conditional_prior([1.5, 5.0], config, data, hp), expected)


def test_prior_times_tempered_likelihood_is_the_returned_gaussian():
    rng = np.random.default_rng(21)
    data = SequenceData(rng.normal(1.0, 2.0, size=9))
    hp = Hyperparams(sigma2=1.7, alpha=0.8, v=2.5)
    config = BlockConfig(9, (4, 6))
    means, variances = conditional_posterior_params(config, data, hp)
    sizes = np.array(config.block_sizes())

    gaps = []
    for shift in np.linspace(-3.0, 3.0, 41):
        theta_B = means + shift * np.array([1.0, -0.5, 2.0])
        theta = np.repeat(theta_B, sizes)
        tempered = log_conditional_prior(theta_B, config, data, hp) + hp.alpha * log_likelihood(theta, data, hp.sigma2)
        gaussian = float(np.sum(-0.5 * np.log(2 * math.pi * variances) - 0.5 * (theta_B - means) ** 2 / variances))
        gaps.append(tempered - gaussian)
    # proportional: the log ratio does not move with theta
    assert np.ptp(gaps) < 1e-10, np.ptp(gaps)


def test_block_means_move_with_a_location_shift():
    rng = np.random.default_rng(4)
    data = SequenceData(rng.standard_normal(10))
    hp = Hyperparams(sigma2=0.9)
    config = BlockConfig(10, (2, 7))
    c = -12.25
    moved = data.shifted(c)

    assert_allclose(block_stats(moved, config).means_array(), block_stats(data, config).means_array() + c, rtol=0, atol=1e-12)
    assert_allclose(block_stats(moved, config).rss, block_stats(data, config).rss, rtol=0, atol=1e-10)
    means, variances = conditional_posterior_params(config, data, hp)
    moved_means, moved_variances = conditional_posterior_params(config, moved, hp)
    assert_allclose(moved_means, means + c, rtol=0, atol=1e-12)
    assert_allclose(moved_variances, variances, rtol=1e-15)


def test_log_likelihood():
    data = SequenceData([1.0, 2.0])
    assert_allclose(log_likelihood([0.0, 0.0], data, 0.5), -5.0)
    _raises(ConfigError, log_likelihood, [0.0], data, 1.0)


def test_fitted_vector_and_configuration_of():
    config = BlockConfig(5, (2,))
    theta = fitted_vector(config, [1.0, -1.0])
    assert theta.tolist() == [1.0, 1.0, -1.0, -1.0, -1.0]
    assert configuration_of(theta) == config
    assert configuration_of([3.0]) == BlockConfig.single(1)
    _raises(ConfigError, fitted_vector, config, [1.0])


def test_variance_estimate():
    data = SequenceData([0.0, 1.0, 0.0, 1.0])
    assert_allclose(estimate_variance(data), 3.0 / 6.0)
    _raises(DomainError, estimate_variance, SequenceData([1.0]))


def test_resolve_sigma2_sources():
    known = SequenceData([0.0, 1.0, 3.0], sigma2=0.25)
    assert resolve_sigma2(known) == (0.25, "known")
    assert resolve_sigma2(known, 2.0) == (2.0, "cli")
    value, source = resolve_sigma2(known, "estimate")
    assert source == "estimate"
    assert_allclose(value, 5.0 / 4.0)
    _raises(DomainError, resolve_sigma2, SequenceData([2.0, 2.0, 2.0]))
    _raises(DomainError, resolve_sigma2, SequenceData([2.0]))


def test_target_rate():
    assert target_rate(1, 500).epsilon_n == 1.0
    assert_allclose(target_rate(7, 497).epsilon_n, 7 * math.log(math.e * 497 / 7))
    _raises(DomainError, target_rate, 0, 10)
    _raises(DomainError, target_rate, 11, 10)


if __name__ == "__main__":
    sys.exit(0 if run_tests("MODEL TESTS", dict(globals())) else 1)
