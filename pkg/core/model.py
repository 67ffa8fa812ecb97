"""
Blockpost - Model Core
=======================
the data model plus every closed form quantity the posterior needs

1a. SequenceData, BlockConfig, Hyperparams, BlockStats, TargetRate
1b. priors on the block configuration (everything in log space)
1c. closed form marginal posterior over configurations
1d. conjugate conditional posterior for the block means
1e. first difference variance estimator and the target rate

all functions here are pure - no caches that change after construction
"""

import math
from bisect import bisect_left
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln, logsumexp

from core.errors import ConfigError, DomainError


# =============================================================
# 1a. data types
# =============================================================

@dataclass(frozen=True, eq=False)
class SequenceData:
    """
    observations Y_1..Y_n plus the noise variance if somebody told us

    prefix sums of the centered data are built once so any segment
    gets its size, mean and residual sum of squares in O(1)
    """

    y: np.ndarray
    sigma2: Optional[float] = None

    def __post_init__(self):
        y = np.array(self.y, dtype=float).ravel()
        if y.size < 1:
            raise ConfigError("sequence needs at least one observation")
        if not np.all(np.isfinite(y)):
            raise DomainError("observations must all be finite")
        if self.sigma2 is not None:
            sigma2 = float(self.sigma2)
            if not (math.isfinite(sigma2) and sigma2 > 0):
                raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
            object.__setattr__(self, "sigma2", sigma2)

        y.setflags(write=False)
        object.__setattr__(self, "y", y)

        center = float(np.mean(y))
        z = y - center
        s1 = np.concatenate(([0.0], np.cumsum(z)))
        s2 = np.concatenate(([0.0], np.cumsum(z * z)))
        object.__setattr__(self, "_center", center)
        object.__setattr__(self, "_s1", s1.tolist())
        object.__setattr__(self, "_s2", s2.tolist())

    @property
    def n(self) -> int:
        return int(self.y.size)

    def segment_stats(self, start: int, stop: int) -> Tuple[int, float, float]:
        """
        (size, mean, rss) of y[start:stop], 0-based half open
        """
        size = stop - start
        t1 = self._s1[stop] - self._s1[start]
        t2 = self._s2[stop] - self._s2[start]
        shift = t1 / size
        rss = t2 - t1 * shift
        if rss < 0.0:
            rss = 0.0
        return size, self._center + shift, rss

    def shifted(self, c: float) -> "SequenceData":
        """same data with c added to every observation"""
        return SequenceData(self.y + c, self.sigma2)


@dataclass(frozen=True)
class BlockConfig:
    """
    a partition of 1..n into consecutive blocks

    stored as sorted change points; a change point at j splits
    between index j and j+1 (1-based)
    """

    n: int
    changepoints: Tuple[int, ...] = ()

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ConfigError(f"sequence length must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

        cps = tuple(int(c) for c in self.changepoints)
        prev = 0
        for c in cps:
            if c <= prev:
                raise ConfigError(f"change points must be strictly increasing: {list(cps)}")
            if c > self.n - 1:
                raise ConfigError(f"change point {c} outside 1..{self.n - 1}")
            prev = c
        object.__setattr__(self, "changepoints", cps)

    @classmethod
    def _trusted(cls, n: int, changepoints: Tuple[int, ...]) -> "BlockConfig":
        """build without validation - callers already know the points are fine"""
        config = object.__new__(cls)
        object.__setattr__(config, "n", n)
        object.__setattr__(config, "changepoints", changepoints)
        return config

    @classmethod
    def single(cls, n: int) -> "BlockConfig":
        return cls(n, ())

    @classmethod
    def saturated(cls, n: int) -> "BlockConfig":
        return cls(n, tuple(range(1, n)))

    @classmethod
    def from_mask(cls, n: int, mask: int) -> "BlockConfig":
        """bit j-1 set means change point at j"""
        return cls(n, tuple(j + 1 for j in range(n - 1) if (mask >> j) & 1))

    def to_mask(self) -> int:
        mask = 0
        for c in self.changepoints:
            mask |= 1 << (c - 1)
        return mask

    @property
    def size(self) -> int:
        """|B|"""
        return len(self.changepoints) + 1

    def edges(self) -> List[int]:
        """0-based block boundaries: block s is y[edges[s]:edges[s+1]]"""
        return [0, *self.changepoints, self.n]

    def blocks(self) -> List[Tuple[int, int]]:
        """(start, end) 1-based inclusive ranges, in order"""
        edges = self.edges()
        return [(edges[s] + 1, edges[s + 1]) for s in range(len(edges) - 1)]

    def block_sizes(self) -> np.ndarray:
        return np.diff(np.asarray(self.edges(), dtype=np.int64))

    def block_of(self, index: int) -> int:
        """0-based block number holding 1-based position index"""
        if not 1 <= index <= self.n:
            raise DomainError(f"index {index} outside 1..{self.n}")
        return bisect_left(self.changepoints, index)

    def split(self, point: int) -> "BlockConfig":
        if point in self.changepoints:
            raise ConfigError(f"change point {point} already present")
        return BlockConfig(self.n, tuple(sorted(self.changepoints + (point,))))

    def merge(self, point: int) -> "BlockConfig":
        if point not in self.changepoints:
            raise ConfigError(f"no change point at {point}")
        return BlockConfig(self.n, tuple(c for c in self.changepoints if c != point))

    def label(self) -> str:
        """change points joined by ';' - empty string for one block"""
        return ";".join(str(c) for c in self.changepoints)


@dataclass(frozen=True)
class Hyperparams:
    """
    tuning triple (alpha, v, lambda) plus the working noise variance

    defaults are the ones that work on the simulated examples:
    alpha=0.99, v=1, lambda=1
    """

    sigma2: float
    alpha: float = 0.99
    v: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("sigma2", "alpha", "v", "lam"):
            value = getattr(self, name)
            try:
                value = float(value)
            except (TypeError, ValueError):
                raise DomainError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise DomainError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, value)
        if not self.alpha < 1:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def rss_weight(self) -> float:
        """alpha / (2 sigma2) - what multiplies the residual sum of squares"""
        return self.alpha / (2.0 * self.sigma2)

    @property
    def block_penalty(self) -> float:
        """log(1 + v alpha / sigma2) / 2 paid per block"""
        return 0.5 * math.log1p(self.v * self.alpha / self.sigma2)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "v": self.v, "lambda": self.lam, "sigma2": self.sigma2}


@dataclass(frozen=True)
class BlockStats:
    """per block size, mean and residual sum of squares"""

    sizes: Tuple[int, ...]
    means: Tuple[float, ...]
    rss: Tuple[float, ...]

    def __post_init__(self):
        if not len(self.sizes) == len(self.means) == len(self.rss):
            raise ConfigError("block stats fields must have one entry per block")

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    @property
    def total_rss(self) -> float:
        return math.fsum(self.rss)

    def means_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=float)

    def sizes_array(self) -> np.ndarray:
        return np.asarray(self.sizes, dtype=np.int64)


@dataclass(frozen=True)
class TargetRate:
    b_star: int
    n: int
    epsilon_n: float


# =============================================================
# 1a. partition plumbing
# =============================================================

def blocks(config: BlockConfig) -> List[Tuple[int, int]]:
    """consecutive 1-based (start, end) ranges covering 1..n"""
    return config.blocks()


def _check_lengths(data: SequenceData, config: BlockConfig):
    if config.n != data.n:
        raise ConfigError(f"configuration is for n={config.n} but data has n={data.n}")


def block_stats(data: SequenceData, config: BlockConfig) -> BlockStats:
    """
    sizes, means and residual SS of every block, computed straight
    from the observations (no prefix sum shortcuts)
    """
    _check_lengths(data, config)
    edges = np.asarray(config.edges(), dtype=np.int64)
    sizes = np.diff(edges)
    starts = edges[:-1]
    means = np.add.reduceat(data.y, starts) / sizes
    resid = data.y - np.repeat(means, sizes)
    rss = np.add.reduceat(resid * resid, starts)
    return BlockStats(tuple(sizes.tolist()), tuple(means.tolist()), tuple(rss.tolist()))


def fitted_vector(config: BlockConfig, theta_B: Sequence[float]) -> np.ndarray:
    """theta_B expanded to an n-vector, entry i = value of the block holding i"""
    theta_B = np.asarray(theta_B, dtype=float).ravel()
    if theta_B.size != config.size:
        raise ConfigError(f"expected {config.size} block values, got {theta_B.size}")
    return np.repeat(theta_B, config.block_sizes())


def configuration_of(theta: Sequence[float]) -> BlockConfig:
    """block configuration of a vector: one block per maximal constant run"""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size < 1:
        raise ConfigError("need a non-empty vector")
    jumps = np.nonzero(theta[1:] != theta[:-1])[0] + 1
    return BlockConfig(int(theta.size), tuple(jumps.tolist()))


# =============================================================
# 1b. priors
# =============================================================

def _check_lambda(lam: float):
    if not (math.isfinite(lam) and lam > 0):
        raise DomainError(f"lambda must be positive, got {lam}")


def log_size_normalizer(n: int, lam: float) -> float:
    """
    log sum_{b=1..n} n^{-lam (b-1)}, closed form of the truncated geometric
    """
    _check_lambda(lam)
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    if n == 1:
        return 0.0
    r = lam * math.log(n)
    return math.log(-math.expm1(-r * n)) - math.log(-math.expm1(-r))


def log_block_size_prior(b: int, n: int, lam: float) -> float:
    """log f_n(b) with f_n(b) proportional to n^{-lam (b-1)}, b = 1..n"""
    if not 1 <= b <= n:
        raise DomainError(f"block count {b} outside 1..{n}")
    return -lam * (b - 1) * math.log(n) - log_size_normalizer(n, lam)


def log_block_size_pmf(n: int, lam: float) -> np.ndarray:
    """the whole log f_n(.) vector, normalized with log-sum-exp over b=1..n"""
    _check_lambda(lam)
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    unnorm = -lam * math.log(n) * np.arange(n, dtype=float)
    return unnorm - logsumexp(unnorm)


def log_binom(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def _log_config_prior_size(b: int, n: int, lam: float) -> float:
    # scalar path used by the sampler hot loop
    log_choose = math.lgamma(n) - math.lgamma(b) - math.lgamma(n - b + 1)
    return log_block_size_prior(b, n, lam) - log_choose


def log_config_prior(config: BlockConfig, lam: float) -> float:
    """
    log pi_n(B) = log f_n(|B|) - log C(n-1, |B|-1)
    uniform over the configurations sharing a block count
    """
    b = config.size
    return log_block_size_prior(b, config.n, lam) - log_binom(config.n - 1, b - 1)


# =============================================================
# 1c. marginal posterior over configurations
# =============================================================

def log_score_from_totals(n_blocks: int, total_rss: float, n: int, hp: Hyperparams) -> float:
    """
    log pi_n(B) - alpha/(2 sigma2) * RSS(B) - |B|/2 * log(1 + v alpha / sigma2)

    only |B| and the total RSS matter, so moves that touch two blocks
    can be scored in O(1)
    """
    return (
        _log_config_prior_size(n_blocks, n, hp.lam)
        - hp.rss_weight * total_rss
        - n_blocks * hp.block_penalty
    )


def log_marginal_posterior_unnorm(
    config: BlockConfig,
    data: SequenceData,
    hp: Hyperparams,
    stats: Optional[BlockStats] = None,
) -> float:
    """unnormalized log pi^n(B), block means integrated out in closed form"""
    if not isinstance(hp, Hyperparams):
        raise DomainError("hyperparameters must be a Hyperparams instance")
    _check_lengths(data, config)
    if stats is None:
        stats = block_stats(data, config)
    return log_score_from_totals(config.size, stats.total_rss, config.n, hp)


def log_likelihood(theta: Sequence[float], data: SequenceData, sigma2: float) -> float:
    """unnormalized Gaussian log likelihood -||Y - theta||^2 / (2 sigma2)"""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size != data.n:
        raise ConfigError(f"theta has length {theta.size}, data has n={data.n}")
    resid = data.y - theta
    return -float(resid @ resid) / (2.0 * sigma2)


# =============================================================
# 1d. conditional posterior of the block means
# =============================================================

def conditional_prior_params(
    config: BlockConfig, data: SequenceData, hp: Hyperparams, stats: Optional[BlockStats] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """data centered prior: theta_B(s) ~ N(block mean, v / |B(s)|), independent"""
    if stats is None:
        stats = block_stats(data, config)
    return stats.means_array(), hp.v / stats.sizes_array()


def log_conditional_prior(
    theta_B: Sequence[float], config: BlockConfig, data: SequenceData, hp: Hyperparams
) -> float:
    """log density of the empirical prior pi_n(theta_B | B)"""
    theta_B = np.asarray(theta_B, dtype=float).ravel()
    if theta_B.size != config.size:
        raise ConfigError(f"expected {config.size} block values, got {theta_B.size}")
    means, variances = conditional_prior_params(config, data, hp)
    resid = theta_B - means
    return float(-0.5 * np.sum(np.log(2.0 * np.pi * variances) + resid * resid / variances))


def conditional_posterior_params(
    config: BlockConfig, data: SequenceData, hp: Hyperparams, stats: Optional[BlockStats] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    per block (mean, variance) of theta_B given B

    completing the square between N(mean, v/m) and the alpha powered
    likelihood leaves the center alone and gives variance
    sigma2 v / (m (alpha v + sigma2))
    """
    if not isinstance(hp, Hyperparams):
        raise DomainError("hyperparameters must be a Hyperparams instance")
    _check_lengths(data, config)
    if stats is None:
        stats = block_stats(data, config)
    sizes = stats.sizes_array()
    variances = hp.sigma2 * hp.v / (sizes * (hp.alpha * hp.v + hp.sigma2))
    return stats.means_array(), variances


# =============================================================
# 1e. variance estimate and target rate
# =============================================================

def estimate_variance(data: SequenceData) -> float:
    """first difference estimator sum (Y_{i+1} - Y_i)^2 / (2 (n-1))"""
    if data.n < 2:
        raise DomainError("variance estimate needs at least two observations")
    diffs = np.diff(data.y)
    return float(diffs @ diffs) / (2.0 * (data.n - 1))


def resolve_sigma2(
    data: SequenceData, override: Union[None, str, float] = None
) -> Tuple[float, str]:
    """
    pick the working noise variance and say where it came from

    explicit number -> "cli", "estimate" -> plug-in, otherwise the
    known variance carried by the data, otherwise the plug-in
    """
    if override is not None and override != "estimate":
        value = float(override)
        if not (math.isfinite(value) and value > 0):
            raise DomainError(f"sigma2 must be positive, got {override}")
        return value, "cli"
    if override is None and data.sigma2 is not None:
        return data.sigma2, "known"

    value = estimate_variance(data)
    if value <= 0:
        raise DomainError("estimated variance is zero (constant data) - pass --sigma2 explicitly")
    return value, "estimate"


def target_rate(b_star: int, n: int) -> TargetRate:
    """1 for a single block, else b* log(e n / b*) in nats"""
    if n < 1 or not 1 <= b_star <= n:
        raise DomainError(f"need 1 <= b_star <= n, got b_star={b_star}, n={n}")
    if b_star == 1:
        eps = 1.0
    else:
        eps = b_star * (1.0 + math.log(n / b_star))
    return TargetRate(b_star=int(b_star), n=int(n), epsilon_n=float(eps))
