"""
Blockpost - Signals
====================
where the data comes from

1a. SignalSpec - a piecewise constant truth plus noise level, loadable
    from the json files in scenarios/
1b. simulate - truth + gaussian noise, deterministic given the seed
1c. csv in / csv out - one observation per line, optional header,
    17 significant digits so nothing gets lost on the way around
"""

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from core.errors import ConfigError, InputError
from core.model import BlockConfig, SequenceData, fitted_vector
from utils.helpers import atomic_write_text, csv_text


@dataclass(frozen=True)
class SignalSpec:
    """
    piecewise constant truth: n, change points, block values, noise sd

    block values are either listed outright or drawn iid uniform from
    value_range using the seed
    """

    n: int
    changepoints: Tuple[int, ...]
    values: Optional[Tuple[float, ...]] = None
    value_range: Optional[Tuple[float, float]] = None
    sigma: float = 1.0
    seed: Optional[int] = None
    label: str = ""

    def __post_init__(self):
        config = BlockConfig(self.n, tuple(self.changepoints))
        object.__setattr__(self, "n", config.n)
        object.__setattr__(self, "changepoints", config.changepoints)

        if (self.values is None) == (self.value_range is None):
            raise ConfigError("signal needs exactly one of: values, value_range")
        if self.values is not None:
            values = tuple(float(v) for v in self.values)
            if len(values) != config.size:
                raise ConfigError(f"{config.size} blocks but {len(values)} values")
            if not all(math.isfinite(v) for v in values):
                raise ConfigError("block values must be finite")
            object.__setattr__(self, "values", values)
        else:
            lo, hi = (float(v) for v in self.value_range)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"value range must be finite with low < high, got {self.value_range}")
            object.__setattr__(self, "value_range", (lo, hi))

        sigma = float(self.sigma)
        if not (math.isfinite(sigma) and sigma >= 0):
            raise ConfigError(f"noise sd must be nonnegative, got {self.sigma}")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def equal_blocks(cls, n: int, n_blocks: int, **kwargs) -> "SignalSpec":
        """n_blocks blocks as equal as integer division allows"""
        if not 1 <= n_blocks <= n:
            raise ConfigError(f"cannot cut n={n} into {n_blocks} blocks")
        cps = tuple(round(s * n / n_blocks) for s in range(1, n_blocks))
        return cls(n=n, changepoints=cps, **kwargs)

    @property
    def config(self) -> BlockConfig:
        return BlockConfig(self.n, self.changepoints)

    def scaled(self, n: int) -> "SignalSpec":
        """same shape stretched to length n, change points at the same fractions"""
        cps = tuple(int(round(c * n / self.n)) for c in self.changepoints)
        return replace(self, n=int(n), changepoints=cps)


def load_signal_spec(path: str) -> SignalSpec:
    """
    read a scenario json

    keys: n, changepoints or blocks (equal blocks count), values or
    valueRange, sigma, seed, label
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InputError(f"could not read signal spec {path}: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"signal spec {path} must be a json object")

    try:
        n = int(raw["n"])
        common = {
            "values": tuple(raw["values"]) if "values" in raw else None,
            "value_range": tuple(raw["valueRange"]) if "valueRange" in raw else None,
            "sigma": float(raw.get("sigma", 1.0)),
            "seed": int(raw["seed"]) if raw.get("seed") is not None else None,
            "label": str(raw.get("label", os.path.splitext(os.path.basename(path))[0])),
        }
        if "blocks" in raw:
            return SignalSpec.equal_blocks(n, int(raw["blocks"]), **common)
        return SignalSpec(n=n, changepoints=tuple(raw.get("changepoints", ())), **common)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad signal spec {path}: {e}")


def simulate(spec: SignalSpec, seed: Optional[int] = None) -> Tuple[SequenceData, np.ndarray]:
    """
    draw Y = truth + sigma * noise

    seed overrides spec.seed; block values from value_range come off
    the same generator before the noise does
    """
    if seed is None:
        seed = spec.seed if spec.seed is not None else 0
    rng = np.random.default_rng(int(seed))

    if spec.values is not None:
        values = np.asarray(spec.values, dtype=float)
    else:
        lo, hi = spec.value_range
        values = rng.uniform(lo, hi, size=len(spec.changepoints) + 1)

    truth = fitted_vector(spec.config, values)
    if spec.sigma > 0:
        y = truth + spec.sigma * rng.standard_normal(spec.n)
        sigma2 = spec.sigma ** 2
    else:
        y = truth.copy()
        sigma2 = None
    return SequenceData(y, sigma2), truth


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def read_sequence_csv(path: str, sigma2: Optional[float] = None) -> SequenceData:
    """one observation per line, first line may be a header"""
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = [line.strip() for line in f]
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"could not read {path}: {e}")

    lines = [line for line in lines if line]
    if lines and not _is_number(lines[0]):
        lines = lines[1:]
    if not lines:
        raise InputError(f"{path} holds no observations")

    try:
        y = np.array([float(line) for line in lines])
    except ValueError as e:
        raise InputError(f"{path} has a line that is not a single number: {e}")
    if not np.all(np.isfinite(y)):
        raise InputError(f"{path} has non-finite values")
    return SequenceData(y, sigma2)


def write_sequence_csv(path: str, values, header: str = "y") -> str:
    """write one value per line with a header, atomically"""
    return atomic_write_text(path, csv_text([header], ([v] for v in np.asarray(values, dtype=float))))
