#!/usr/bin/env python3
"""
Blockpost - Oracle Tests
=========================
exact enumeration and the monte carlo check of the closed form marginal

run: python test_oracle.py  (or pytest)
"""

import math
import os
import sys

import numpy as np
from numpy.testing import assert_allclose

# add project root to path
ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, ROOT)

from core.errors import CapacityError, DomainError
from core.model import (
    BlockConfig,
    Hyperparams,
    SequenceData,
    block_stats,
    log_config_prior,
    log_marginal_posterior_unnorm,
)
from core.oracle import MAX_ORACLE_N, enumerate_exact_posterior, exact_posterior_mean, mc_log_marginal
from utils.helpers import run_tests


def _raises(exc, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc:
        return
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def test_three_point_toy_has_four_configurations():
    data = SequenceData([0.2, -0.4, 1.7])
    exact = enumerate_exact_posterior(data, Hyperparams(sigma2=1.0))
    assert len(exact) == 4
    assert_allclose(exact.probabilities().sum(), 1.0, rtol=1e-12)
    assert sorted(c.changepoints for c in exact.configs) == [(), (1,), (1, 2), (2,)]


def test_probabilities_match_direct_scores():
    rng = np.random.default_rng(4)
    data = SequenceData(rng.standard_normal(7))
    hp = Hyperparams(sigma2=0.8, alpha=0.9, v=2.0, lam=0.7)
    exact = enumerate_exact_posterior(data, hp)
    scores = np.array([log_marginal_posterior_unnorm(c, data, hp) for c in exact.configs])
    direct = np.exp(scores - scores.max())
    direct /= direct.sum()
    assert_allclose(exact.probabilities(), direct, rtol=1e-9)
    assert_allclose(exact.probability(BlockConfig(7, (3,))), direct[0b100], rtol=1e-9)


def test_block_size_pmf_sums_to_one():
    data = SequenceData([0.0, 0.0, 3.0, 3.0, 3.0, -2.0])
    exact = enumerate_exact_posterior(data, Hyperparams(sigma2=0.1))
    pmf = exact.block_size_pmf()
    assert sorted(pmf) == list(range(1, 7))
    assert_allclose(sum(pmf.values()), 1.0, rtol=1e-12)
    assert max(pmf, key=pmf.get) == 3


def test_two_point_fixed_point():
    exact = enumerate_exact_posterior(SequenceData([0.0, 2.0]), Hyperparams(sigma2=1.0))
    assert abs(exact.block_size_pmf()[2] - 0.488) < 1e-3


def test_exact_mean_matches_brute_force():
    rng = np.random.default_rng(9)
    data = SequenceData(rng.standard_normal(6))
    hp = Hyperparams(sigma2=0.5)
    exact = enumerate_exact_posterior(data, hp)
    probs = exact.probabilities()
    expected = np.zeros(6)
    for i, config in enumerate(exact.configs):
        expected += probs[i] * np.repeat(block_stats(data, config).means_array(), config.block_sizes())
    assert_allclose(exact_posterior_mean(data, hp, exact), expected, rtol=1e-10, atol=1e-12)


def test_total_variation_against_itself_is_zero():
    data = SequenceData([1.0, 1.2, 0.9, 4.0])
    exact = enumerate_exact_posterior(data, Hyperparams(sigma2=0.3))
    freqs = {c: p for c, p in zip(exact.configs, exact.probabilities())}
    assert exact.total_variation(freqs) < 1e-12
    assert_allclose(exact.total_variation({BlockConfig.single(4): 1.0}), 1.0 - exact.probabilities()[0])


def test_single_observation():
    exact = enumerate_exact_posterior(SequenceData([3.0]), Hyperparams(sigma2=1.0))
    assert len(exact) == 1
    assert_allclose(exact.probabilities(), [1.0])


def test_capacity_cap():
    data = SequenceData(np.zeros(MAX_ORACLE_N + 1))
    _raises(CapacityError, enumerate_exact_posterior, data, Hyperparams(sigma2=1.0))
    _raises(CapacityError, exact_posterior_mean, data, Hyperparams(sigma2=1.0))


def test_mc_marginal_needs_enough_draws():
    data = SequenceData([0.0, 1.0])
    _raises(DomainError, mc_log_marginal, BlockConfig.single(2), data, Hyperparams(sigma2=1.0), 999,
            np.random.default_rng(0))


def test_closed_form_marginal_matches_monte_carlo():
    master = np.random.default_rng(77)
    for trial in range(4):
        sigma2 = float(master.uniform(0.5, 2.0))
        data = SequenceData(master.normal(0.0, math.sqrt(sigma2), 6) + np.repeat([0.0, 1.5], 3))
        hp = Hyperparams(sigma2=sigma2)
        rng = np.random.default_rng(trial)
        for mask in (0, 0b00100, 0b10101, 0b11111):
            config = BlockConfig.from_mask(6, mask)
            closed = log_marginal_posterior_unnorm(config, data, hp) - log_config_prior(config, hp.lam)
            estimate, se = mc_log_marginal(config, data, hp, 100000, rng)
            assert abs(estimate - closed) <= 3.5 * se + 1e-9, (trial, mask, estimate, closed, se)


if __name__ == "__main__":
    sys.exit(0 if run_tests("ORACLE TESTS", dict(globals())) else 1)
