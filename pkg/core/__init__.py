"""
Blockpost - Core Module
========================
model, sampler, oracle and summaries

imports for easy access from other modules
"""

from .errors import (
    BlockpostError,
    CapacityError,
    ConfigError,
    DomainError,
    InputError,
    StateError,
)
from .model import BlockConfig, Hyperparams, SequenceData
from .sampler import PosteriorSamples, SamplerConfig, run_chain
from .oracle import ExactPosterior, enumerate_exact_posterior
from .summaries import Summary, summarize

# safety monitoring
try:
    from .safety_monitor import SafetyMonitor
except ImportError:
    pass

__all__ = [
    "BlockpostError",
    "CapacityError",
    "ConfigError",
    "DomainError",
    "InputError",
    "StateError",
    "BlockConfig",
    "Hyperparams",
    "SequenceData",
    "PosteriorSamples",
    "SamplerConfig",
    "run_chain",
    "ExactPosterior",
    "enumerate_exact_posterior",
    "Summary",
    "summarize",
    "SafetyMonitor",
]
