"""
Blockpost - Sampler
====================
metropolis-hastings over block configurations, with conjugate draws
of the block means at every retained iteration

1a. split / merge / shift proposals with exact proposal ratios
1b. mh_step keeps the block stats and the score cached, only the
    blocks a move touches get recomputed
1c. run_chain runs every chain on a thread pool, chain k gets its
    own seed from derive_seed(seed, k)
"""

import math
from bisect import bisect_left
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, StateError
from core.model import (
    BlockConfig,
    BlockStats,
    Hyperparams,
    SequenceData,
    block_stats,
    conditional_posterior_params,
    fitted_vector,
    log_marginal_posterior_unnorm,
    log_score_from_totals,
)

# progress bars are optional, same as the rest of the nice-to-haves
try:
    from tqdm import tqdm
except ImportError:
    tqdm = None


SPLIT = "split"
MERGE = "merge"
SHIFT = "shift"
STAY = "stay"
MOVE_KINDS = (SPLIT, MERGE, SHIFT)

DEFAULT_PROPOSAL_WEIGHTS = (0.4, 0.4, 0.2)

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """splitmix64 finalizer"""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, k: int) -> int:
    """
    k-th output of a splitmix64 stream started at seed
    chain k always gets the same seed no matter how many chains run
    """
    return _mix64(int(seed) + (int(k) + 1) * _GOLDEN_GAMMA)


# =============================================================
# types
# =============================================================

@dataclass(frozen=True)
class SamplerConfig:
    """how long, how many chains, which moves"""

    iterations: int = 50000
    burn_in: int = 10000
    thin: int = 10
    seed: int = 0
    chains: int = 2
    proposal_weights: Tuple[float, float, float] = DEFAULT_PROPOSAL_WEIGHTS

    def __post_init__(self):
        for name in ("iterations", "burn_in", "thin", "seed", "chains"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))

        if self.iterations < 1:
            raise ConfigError(f"iterations must be positive, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(
                f"burn-in must be in [0, iterations), got {self.burn_in} with {self.iterations} iterations"
            )
        if self.thin < 1:
            raise ConfigError(f"thin must be positive, got {self.thin}")
        if self.chains < 1:
            raise ConfigError(f"chains must be positive, got {self.chains}")
        if not 0 <= self.seed <= _MASK64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")

        weights = tuple(float(w) for w in self.proposal_weights)
        if len(weights) != 3:
            raise ConfigError("proposal weights are (split, merge, shift)")
        if any(not math.isfinite(w) or w < 0 for w in weights):
            raise ConfigError(f"proposal weights must be nonnegative, got {weights}")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ConfigError(f"proposal weights must sum to 1, got {sum(weights)}")
        if weights[0] <= 0 or weights[1] <= 0:
            raise ConfigError("split and merge weights must both be positive")
        object.__setattr__(self, "proposal_weights", weights)

    @property
    def retained_per_chain(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "chains": self.chains,
            "proposal_weights": list(self.proposal_weights),
        }


@dataclass
class ChainState:
    """
    where a chain is right now

    log_score is always log_marginal_posterior_unnorm(config) and stats
    always block_stats(config), up to rounding - check_cache verifies it
    """

    config: BlockConfig
    stats: BlockStats
    log_score: float
    rng: np.random.Generator
    proposed: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVE_KINDS, 0))
    accepted: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(MOVE_KINDS, 0))
    last_accepted: bool = False


@dataclass(frozen=True)
class Proposal:
    """
    one candidate move

    block is the first block the move touches; point is the change
    point added (split), removed (merge) or moved (shift); target is
    where a shifted point lands
    """

    kind: str
    candidate: BlockConfig
    log_ratio: float
    block: int = 0
    point: int = 0
    target: int = 0


@dataclass(frozen=True)
class Draw:
    chain: int
    iteration: int
    config: BlockConfig
    theta: np.ndarray


@dataclass
class PosteriorSamples:
    """retained (B, theta_B) draws from one or more chains"""

    n: int
    draws: List[Draw]
    proposed: Dict[str, int]
    accepted: Dict[str, int]
    seed: int
    hyperparams: Hyperparams
    sampler_config: Optional[SamplerConfig] = None
    chains: int = 1

    def __len__(self) -> int:
        return len(self.draws)

    @property
    def configs(self) -> List[BlockConfig]:
        return [d.config for d in self.draws]

    def block_counts(self) -> np.ndarray:
        return np.array([d.config.size for d in self.draws], dtype=np.int64)

    def config_frequencies(self) -> Dict[BlockConfig, float]:
        if not self.draws:
            raise StateError("no retained draws")
        counts = Counter(d.config for d in self.draws)
        total = len(self.draws)
        return {config: c / total for config, c in counts.items()}

    def fitted_matrix(self) -> np.ndarray:
        """draws x n matrix of theta_B expanded to full length"""
        if not self.draws:
            raise StateError("no retained draws")
        return np.vstack([fitted_vector(d.config, d.theta) for d in self.draws])

    def acceptance_rates(self) -> Dict[str, float]:
        rates = {}
        for kind in MOVE_KINDS:
            tried = self.proposed.get(kind, 0)
            rates[kind] = self.accepted.get(kind, 0) / tried if tried else 0.0
        return rates


# =============================================================
# 1a. proposals
# =============================================================

def _kind_probabilities(k: int, n: int, weights: Sequence[float]) -> Tuple[float, float, float]:
    """
    move kind probabilities with k change points present, infeasible
    kinds dropped and the rest renormalized
    """
    slots = n - 1
    w_split = weights[0] if k < slots else 0.0
    w_merge = weights[1] if k >= 1 else 0.0
    w_shift = weights[2] if 1 <= k < slots else 0.0
    total = w_split + w_merge + w_shift
    if total <= 0.0:
        return 0.0, 0.0, 0.0
    return w_split / total, w_merge / total, w_shift / total


def _free_neighbours(cps: Sequence[int], j: int, n: int) -> List[int]:
    """positions next to cps[j] that hold no change point"""
    c = cps[j]
    free = []
    if c - 1 >= 1 and (j == 0 or cps[j - 1] != c - 1):
        free.append(c - 1)
    if c + 1 <= n - 1 and (j == len(cps) - 1 or cps[j + 1] != c + 1):
        free.append(c + 1)
    return free


def _nth_free_position(cps: Sequence[int], r: int) -> int:
    """r-th (0-based) position in 1..n-1 that is not a change point"""
    pos = r + 1
    for c in cps:
        if c <= pos:
            pos += 1
        else:
            break
    return pos


def propose(
    state: ChainState,
    rng: Optional[np.random.Generator] = None,
    weights: Sequence[float] = DEFAULT_PROPOSAL_WEIGHTS,
) -> Proposal:
    """
    draw one move from the current configuration

    log_ratio is log q(B | B') - log q(B' | B)
    """
    rng = state.rng if rng is None else rng
    config = state.config
    n = config.n
    cps = config.changepoints
    k = len(cps)

    p_split, p_merge, p_shift = _kind_probabilities(k, n, weights)
    if p_split + p_merge + p_shift == 0.0:
        # n = 1, nothing can move
        return Proposal(STAY, config, 0.0)

    u = rng.random()

    if u < p_split:
        free = n - 1 - k
        point = _nth_free_position(cps, int(rng.random() * free))
        s = bisect_left(cps, point)
        candidate = BlockConfig._trusted(n, cps[:s] + (point,) + cps[s:])
        back = _kind_probabilities(k + 1, n, weights)[1]
        log_ratio = math.log(back / (k + 1)) - math.log(p_split / free)
        return Proposal(SPLIT, candidate, log_ratio, block=s, point=point)

    if u < p_split + p_merge or p_shift == 0.0:
        j = int(rng.random() * k)
        point = cps[j]
        candidate = BlockConfig._trusted(n, cps[:j] + cps[j + 1:])
        back = _kind_probabilities(k - 1, n, weights)[0]
        log_ratio = math.log(back / (n - k)) - math.log(p_merge / k)
        return Proposal(MERGE, candidate, log_ratio, block=j, point=point)

    j = int(rng.random() * k)
    point = cps[j]
    free = _free_neighbours(cps, j, n)
    if not free:
        # boxed in on both sides, propose staying put
        return Proposal(SHIFT, config, 0.0, block=j, point=point, target=point)
    target = free[int(rng.random() * len(free))]
    new_cps = cps[:j] + (target,) + cps[j + 1:]
    candidate = BlockConfig._trusted(n, new_cps)
    free_back = _free_neighbours(new_cps, j, n)
    log_ratio = math.log(len(free)) - math.log(len(free_back))
    return Proposal(SHIFT, candidate, log_ratio, block=j, point=point, target=target)


def move_probabilities(
    config: BlockConfig, weights: Sequence[float] = DEFAULT_PROPOSAL_WEIGHTS
) -> Dict[BlockConfig, float]:
    """
    the full proposal kernel q(. | config), by listing every move

    slow on purpose - it is the brute force reference for the
    ratios propose() works out incrementally
    """
    n = config.n
    cps = config.changepoints
    k = len(cps)
    p_split, p_merge, p_shift = _kind_probabilities(k, n, weights)
    kernel: Dict[BlockConfig, float] = {}

    def add(target: BlockConfig, prob: float):
        kernel[target] = kernel.get(target, 0.0) + prob

    if p_split > 0:
        absent = [p for p in range(1, n) if p not in cps]
        for p in absent:
            add(config.split(p), p_split / len(absent))
    if p_merge > 0:
        for c in cps:
            add(config.merge(c), p_merge / k)
    if p_shift > 0:
        for j in range(k):
            free = _free_neighbours(cps, j, n)
            if not free:
                add(config, p_shift / k)
                continue
            for target in free:
                moved = BlockConfig(n, cps[:j] + (target,) + cps[j + 1:])
                add(moved, p_shift / k / len(free))
    if not kernel:
        kernel[config] = 1.0
    return kernel


# =============================================================
# 1b. chain steps
# =============================================================

def initial_state(
    data: SequenceData,
    hp: Hyperparams,
    rng: np.random.Generator,
    config: Optional[BlockConfig] = None,
) -> ChainState:
    """chains start from a single block unless told otherwise"""
    if config is None:
        config = BlockConfig.single(data.n)
    stats = block_stats(data, config)
    score = log_marginal_posterior_unnorm(config, data, hp, stats=stats)
    return ChainState(config=config, stats=stats, log_score=score, rng=rng)


def _edge(cps: Sequence[int], i: int, n: int) -> int:
    """0-based start of block i (= n past the last block)"""
    if i <= 0:
        return 0
    if i > len(cps):
        return n
    return cps[i - 1]


def _replacement_blocks(
    state: ChainState, proposal: Proposal, data: SequenceData
) -> Tuple[int, int, List[Tuple[int, float, float]]]:
    """
    which slice of blocks the move replaces, and the stats of the
    blocks that go in its place
    """
    cps = state.config.changepoints
    n = state.config.n
    s = proposal.block

    if proposal.kind == SPLIT:
        start, stop = _edge(cps, s, n), _edge(cps, s + 1, n)
        parts = [data.segment_stats(start, proposal.point), data.segment_stats(proposal.point, stop)]
        return s, s + 1, parts

    start, stop = _edge(cps, s, n), _edge(cps, s + 2, n)
    if proposal.kind == MERGE:
        return s, s + 2, [data.segment_stats(start, stop)]

    parts = [data.segment_stats(start, proposal.target), data.segment_stats(proposal.target, stop)]
    return s, s + 2, parts


def mh_step(
    state: ChainState,
    data: SequenceData,
    hp: Hyperparams,
    rng: Optional[np.random.Generator] = None,
    weights: Sequence[float] = DEFAULT_PROPOSAL_WEIGHTS,
) -> ChainState:
    """
    one metropolis-hastings update, in place

    rejected moves leave config, stats and score exactly as they were;
    only the rng and the counters move
    """
    rng = state.rng if rng is None else rng
    state.last_accepted = False

    proposal = propose(state, rng, weights)
    if proposal.kind == STAY:
        return state
    state.proposed[proposal.kind] += 1
    if proposal.candidate is state.config:
        return state

    lo, hi, parts = _replacement_blocks(state, proposal, data)
    old = state.stats
    sizes = old.sizes[:lo] + tuple(p[0] for p in parts) + old.sizes[hi:]
    means = old.means[:lo] + tuple(p[1] for p in parts) + old.means[hi:]
    rss = old.rss[:lo] + tuple(p[2] for p in parts) + old.rss[hi:]
    total_rss = math.fsum(rss)

    score = log_score_from_totals(len(sizes), total_rss, data.n, hp)
    log_accept = score - state.log_score + proposal.log_ratio

    if log_accept >= 0.0 or rng.random() < math.exp(log_accept):
        state.config = proposal.candidate
        state.stats = BlockStats(sizes, means, rss)
        state.log_score = score
        state.accepted[proposal.kind] += 1
        state.last_accepted = True
    return state


def check_cache(state: ChainState, data: SequenceData, hp: Hyperparams, tol: float = 1e-8):
    """recompute score and stats from scratch, raise if the cache drifted"""
    fresh = block_stats(data, state.config)
    score = log_marginal_posterior_unnorm(state.config, data, hp, stats=fresh)
    if abs(score - state.log_score) > tol:
        raise StateError(f"cached score {state.log_score} drifted from {score}")
    if fresh.sizes != state.stats.sizes:
        raise StateError("cached block sizes do not match the configuration")


def sample_theta(
    config: BlockConfig,
    data: SequenceData,
    hp: Hyperparams,
    rng: np.random.Generator,
    stats: Optional[BlockStats] = None,
) -> np.ndarray:
    """independent gaussian draw per block from the conditional posterior"""
    means, variances = conditional_posterior_params(config, data, hp, stats=stats)
    return means + np.sqrt(variances) * rng.standard_normal(means.size)


# =============================================================
# 1c. whole chains
# =============================================================

def run_single_chain(
    data: SequenceData,
    hp: Hyperparams,
    sc: SamplerConfig,
    chain_index: int = 0,
    show_progress: bool = False,
    check_every_accept: bool = False,
) -> PosteriorSamples:
    """run chain number chain_index start to finish"""
    rng = np.random.default_rng(derive_seed(sc.seed, chain_index))
    state = initial_state(data, hp, rng)
    weights = sc.proposal_weights

    iterations = range(sc.iterations)
    if show_progress and tqdm is not None:
        iterations = tqdm(iterations, desc=f"chain {chain_index}", position=chain_index, leave=False)

    draws = []
    for t in iterations:
        mh_step(state, data, hp, rng, weights)
        if check_every_accept and state.last_accepted:
            check_cache(state, data, hp)
        if t >= sc.burn_in and (t - sc.burn_in + 1) % sc.thin == 0:
            theta = sample_theta(state.config, data, hp, rng, stats=state.stats)
            draws.append(Draw(chain_index, t, state.config, theta))

    return PosteriorSamples(
        n=data.n,
        draws=draws,
        proposed=dict(state.proposed),
        accepted=dict(state.accepted),
        seed=sc.seed,
        hyperparams=hp,
        sampler_config=sc,
        chains=1,
    )


def merge_samples(parts: Sequence[PosteriorSamples]) -> PosteriorSamples:
    """pool chains, draws ordered by chain index then iteration"""
    if not parts:
        raise StateError("nothing to merge")
    first = parts[0]
    for p in parts[1:]:
        if p.n != first.n or p.hyperparams != first.hyperparams:
            raise ConfigError("can only merge chains run on the same data and hyperparameters")

    draws = sorted((d for p in parts for d in p.draws), key=lambda d: (d.chain, d.iteration))
    proposed = {k: sum(p.proposed.get(k, 0) for p in parts) for k in MOVE_KINDS}
    accepted = {k: sum(p.accepted.get(k, 0) for p in parts) for k in MOVE_KINDS}
    chains = len({d.chain for d in draws}) or len(parts)
    return PosteriorSamples(
        n=first.n,
        draws=draws,
        proposed=proposed,
        accepted=accepted,
        seed=first.seed,
        hyperparams=first.hyperparams,
        sampler_config=first.sampler_config,
        chains=chains,
    )


def run_chain(
    data: SequenceData,
    hp: Hyperparams,
    sc: SamplerConfig,
    workers: Optional[int] = None,
    show_progress: bool = False,
    on_progress: Optional[Callable[[str], None]] = None,
    check_every_accept: bool = False,
) -> PosteriorSamples:
    """
    run sc.chains independent chains and pool them

    the worker count only changes wall time, never the draws
    """
    if not isinstance(sc, SamplerConfig):
        raise ConfigError("sampler settings must be a SamplerConfig")
    workers = max(1, min(workers or sc.chains, sc.chains))

    def one(k: int) -> PosteriorSamples:
        if on_progress:
            on_progress(f"[Sampler] chain {k} started ({sc.iterations} iterations)")
        part = run_single_chain(data, hp, sc, k, show_progress, check_every_accept)
        if on_progress:
            rates = ", ".join(f"{kind} {rate:.3f}" for kind, rate in part.acceptance_rates().items())
            on_progress(f"[Sampler] chain {k} done - kept {len(part)} draws, acceptance {rates}")
        return part

    if workers == 1:
        parts = [one(k) for k in range(sc.chains)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, range(sc.chains)))
    return merge_samples(parts)
