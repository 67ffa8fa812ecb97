"""
Blockpost - Oracle
===================
ground truth for small problems, used to keep the sampler honest

1a. enumerate_exact_posterior - every one of the 2^(n-1) configurations
1b. exact_posterior_mean - the posterior mean without any sampling
1c. mc_log_marginal - monte carlo integral of the tempered likelihood
    under the empirical prior, to check the closed form marginal
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Tuple

import numpy as np
from scipy.special import logsumexp

from core.errors import CapacityError, ConfigError, DomainError
from core.model import (
    BlockConfig,
    Hyperparams,
    SequenceData,
    block_stats,
    log_score_from_totals,
)

# 2^19 configurations at the cap
MAX_ORACLE_N = 20
MIN_MC_DRAWS = 1000
_MC_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class ExactPosterior:
    """
    normalized posterior over every configuration

    configuration i is BlockConfig.from_mask(n, i) - the bitmask of its
    change points - so lookups never need a dict
    """

    n: int
    sizes: np.ndarray
    log_weights: np.ndarray

    def __len__(self) -> int:
        return int(self.log_weights.size)

    def config(self, i: int) -> BlockConfig:
        return BlockConfig.from_mask(self.n, int(i))

    @property
    def configs(self) -> List[BlockConfig]:
        return [self.config(i) for i in range(len(self))]

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def probability(self, config: BlockConfig) -> float:
        if config.n != self.n:
            raise ConfigError(f"configuration is for n={config.n}, posterior is for n={self.n}")
        return float(math.exp(self.log_weights[config.to_mask()]))

    def block_size_pmf(self) -> Dict[int, float]:
        mass = np.bincount(self.sizes, weights=self.probabilities(), minlength=self.n + 1)
        return {b: float(mass[b]) for b in range(1, self.n + 1)}

    def total_variation(self, frequencies: Mapping[BlockConfig, float]) -> float:
        """half the L1 distance to an empirical pmf over configurations"""
        q = np.zeros(len(self))
        for config, freq in frequencies.items():
            q[config.to_mask()] += freq
        return 0.5 * float(np.abs(self.probabilities() - q).sum())


def _config_rss(data: SequenceData, cps: List[int]) -> float:
    edges = [0, *cps, data.n]
    return math.fsum(data.segment_stats(edges[s], edges[s + 1])[2] for s in range(len(edges) - 1))


def _check_capacity(n: int):
    if n > MAX_ORACLE_N:
        raise CapacityError(
            f"exact enumeration is capped at n={MAX_ORACLE_N} (2^{MAX_ORACLE_N - 1} configurations), got n={n}"
        )


def _mask_points(mask: int, n: int) -> List[int]:
    return [j + 1 for j in range(n - 1) if (mask >> j) & 1]


def enumerate_exact_posterior(data: SequenceData, hp: Hyperparams) -> ExactPosterior:
    """
    score every configuration with the closed form and normalize
    with log-sum-exp
    """
    n = data.n
    _check_capacity(n)
    count = 1 << (n - 1)
    scores = np.empty(count)
    sizes = np.empty(count, dtype=np.int64)

    for mask in range(count):
        cps = _mask_points(mask, n)
        b = len(cps) + 1
        sizes[mask] = b
        scores[mask] = log_score_from_totals(b, _config_rss(data, cps), n, hp)

    log_weights = scores - logsumexp(scores)
    sizes.setflags(write=False)
    log_weights.setflags(write=False)
    return ExactPosterior(n=n, sizes=sizes, log_weights=log_weights)


def exact_posterior_mean(
    data: SequenceData, hp: Hyperparams, exact: ExactPosterior = None
) -> np.ndarray:
    """
    sum over B of P(B) times the block means of B spread to length n;
    the conditional posterior mean of theta_B is the block mean itself
    """
    n = data.n
    _check_capacity(n)
    if exact is None:
        exact = enumerate_exact_posterior(data, hp)

    # difference array: add w*mean on [start, stop) in O(1) per block
    acc = np.zeros(n + 1)
    probs = exact.probabilities()
    for mask in range(len(exact)):
        w = probs[mask]
        if w == 0.0:
            continue
        edges = [0, *_mask_points(mask, n), n]
        for s in range(len(edges) - 1):
            start, stop = edges[s], edges[s + 1]
            _, mean, _ = data.segment_stats(start, stop)
            acc[start] += w * mean
            acc[stop] -= w * mean
    return np.cumsum(acc[:n])


def mc_log_marginal(
    config: BlockConfig,
    data: SequenceData,
    hp: Hyperparams,
    draws: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """
    log of the monte carlo average of L_n(theta_B+)^alpha over draws from
    the empirical prior, plus its delta method standard error

    L_n is the unnormalized likelihood exp(-||Y - theta||^2 / (2 sigma2)),
    so the estimate targets log_marginal_posterior_unnorm - log pi_n(B)
    """
    if draws < MIN_MC_DRAWS:
        raise DomainError(f"need at least {MIN_MC_DRAWS} draws, got {draws}")
    stats = block_stats(data, config)
    means = stats.means_array()
    sds = np.sqrt(hp.v / stats.sizes_array())
    sizes = stats.sizes_array()

    log_w = np.empty(draws)
    done = 0
    while done < draws:
        m = min(_MC_CHUNK, draws - done)
        theta_B = means + sds * rng.standard_normal((m, means.size))
        fitted = np.repeat(theta_B, sizes, axis=1)
        resid = data.y - fitted
        log_w[done:done + m] = -hp.alpha * np.einsum("ij,ij->i", resid, resid) / (2.0 * hp.sigma2)
        done += m

    estimate = float(logsumexp(log_w) - math.log(draws))
    w = np.exp(log_w - log_w.max())
    se = float(w.std(ddof=1) / (math.sqrt(draws) * w.mean()))
    return estimate, se
