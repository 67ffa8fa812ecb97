"""
Blockpost - Summaries
======================
turns a pile of posterior draws into the stuff people actually look at

1a. posterior mean (plain and rao-blackwellized)
1b. marginal credible intervals from per-coordinate quantiles
1c. posterior pmf of the block count |B|
1d. metrics against a known truth: squared error, risk over the
    target rate, interval coverage, complexity exceedance
"""

import math
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from core.errors import ConfigError, DomainError, StateError
from core.model import BlockConfig, SequenceData, configuration_of, fitted_vector, target_rate
from core.sampler import PosteriorSamples

# fewer retained draws than this and interval endpoints get shaky
MIN_INTERVAL_DRAWS = 100


@dataclass(frozen=True, eq=False)
class Summary:
    n: int
    posterior_mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float
    block_size_pmf: Dict[int, float]
    acceptance_rates: Dict[str, float]
    n_draws: int
    median: Optional[np.ndarray] = None
    rb_mean: Optional[np.ndarray] = None

    @property
    def point_estimate(self) -> np.ndarray:
        """rao-blackwellized mean when we have it, plain mean otherwise"""
        return self.rb_mean if self.rb_mean is not None else self.posterior_mean


@dataclass(frozen=True)
class Metrics:
    sq_error: float
    normalized_risk: float
    coverage: float
    mean_width: float
    b_star: int
    epsilon_n: float
    complexity_exceedance: float

    def to_dict(self) -> dict:
        return {
            "sq_error": self.sq_error,
            "normalized_risk": self.normalized_risk,
            "coverage": self.coverage,
            "mean_interval_width": self.mean_width,
            "true_block_count": self.b_star,
            "target_rate": self.epsilon_n,
            "complexity_exceedance": self.complexity_exceedance,
        }


def _require_draws(samples: PosteriorSamples):
    if len(samples) == 0:
        raise StateError("no retained draws to summarize")


# =============================================================
# 1a. point estimates
# =============================================================

def posterior_mean(samples: PosteriorSamples) -> np.ndarray:
    """coordinate-wise average of the sampled theta vectors"""
    _require_draws(samples)
    return samples.fitted_matrix().mean(axis=0)


def rao_blackwell_mean(samples: PosteriorSamples, data: SequenceData) -> np.ndarray:
    """average of the block-mean fits, theta_B replaced by its conditional mean"""
    _require_draws(samples)
    if data.n != samples.n:
        raise ConfigError(f"samples are for n={samples.n}, data has n={data.n}")
    total = np.zeros(data.n)
    for config, count in Counter(samples.configs).items():
        edges = config.edges()
        means = [data.segment_stats(edges[s], edges[s + 1])[1] for s in range(config.size)]
        total += count * fitted_vector(config, means)
    return total / len(samples)


def map_config(samples: PosteriorSamples) -> BlockConfig:
    """most visited configuration among retained draws"""
    _require_draws(samples)
    return Counter(samples.configs).most_common(1)[0][0]


# =============================================================
# 1b. intervals
# =============================================================

def credible_intervals(samples: PosteriorSamples, level: float = 0.95) -> Tuple[np.ndarray, np.ndarray]:
    """
    equal tailed marginal intervals, quantiles by linear interpolation
    between order statistics
    """
    if not (isinstance(level, (int, float)) and 0 < level < 1):
        raise DomainError(f"credible level must lie in (0, 1), got {level}")
    _require_draws(samples)
    return _quantile_bounds(samples.fitted_matrix(), level)


def _quantile_bounds(matrix: np.ndarray, level: float) -> Tuple[np.ndarray, np.ndarray]:
    if matrix.shape[0] < MIN_INTERVAL_DRAWS:
        warnings.warn(
            f"only {matrix.shape[0]} retained draws - interval endpoints will be noisy",
            RuntimeWarning,
            stacklevel=3,
        )
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(matrix, [tail, 1.0 - tail], axis=0, method="linear")
    return lo, hi


# =============================================================
# 1c. block count distribution
# =============================================================

def block_size_distribution(samples: PosteriorSamples) -> Dict[int, float]:
    """relative frequency of each |B| among retained draws, sorted by |B|"""
    _require_draws(samples)
    counts = Counter(samples.block_counts().tolist())
    total = len(samples)
    return {int(b): counts[b] / total for b in sorted(counts)}


def complexity_exceedance(pmf: Dict[int, float], b_star: int, c: float = 2.0) -> float:
    """posterior mass on |B| > c |B*|"""
    return float(math.fsum(p for b, p in pmf.items() if b > c * b_star))


def true_block_count(theta: Sequence[float]) -> int:
    return configuration_of(theta).size


# =============================================================
# 1d. putting it together
# =============================================================

def summarize(
    samples: PosteriorSamples, data: Optional[SequenceData] = None, level: float = 0.95
) -> Summary:
    if not (isinstance(level, (int, float)) and 0 < level < 1):
        raise DomainError(f"credible level must lie in (0, 1), got {level}")
    _require_draws(samples)
    matrix = samples.fitted_matrix()
    lo, hi = _quantile_bounds(matrix, level)
    return Summary(
        n=samples.n,
        posterior_mean=matrix.mean(axis=0),
        lo=lo,
        hi=hi,
        level=float(level),
        block_size_pmf=block_size_distribution(samples),
        acceptance_rates=samples.acceptance_rates(),
        n_draws=len(samples),
        median=np.median(matrix, axis=0),
        rb_mean=rao_blackwell_mean(samples, data) if data is not None else None,
    )


def evaluate(truth: Sequence[float], summary: Summary, c: float = 2.0) -> Metrics:
    """score a summary against the true mean vector"""
    truth = np.asarray(truth, dtype=float).ravel()
    if truth.size != summary.n:
        raise ConfigError(f"truth has length {truth.size}, summary is for n={summary.n}")

    b_star = true_block_count(truth)
    rate = target_rate(b_star, summary.n)
    err = summary.point_estimate - truth
    sq_error = float(err @ err)
    covered = (summary.lo <= truth) & (truth <= summary.hi)

    return Metrics(
        sq_error=sq_error,
        normalized_risk=sq_error / rate.epsilon_n,
        coverage=float(covered.mean()),
        mean_width=float(np.mean(summary.hi - summary.lo)),
        b_star=b_star,
        epsilon_n=rate.epsilon_n,
        complexity_exceedance=complexity_exceedance(summary.block_size_pmf, b_star, c),
    )


def mann_kendall(values: Sequence[float]) -> Tuple[float, float]:
    """
    trend test on a sequence in its given order
    returns (kendall tau against position, two sided p value)
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size < 3:
        raise DomainError("trend test needs at least three values")
    tau, p_value = stats.kendalltau(np.arange(values.size), values)
    if not np.isfinite(tau):
        # constant sequence, no ranking to speak of
        return 0.0, 1.0
    return float(tau), float(p_value)
