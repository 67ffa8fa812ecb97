#!/usr/bin/env python3
"""
Blockpost - Signal Tests
=========================
scenario files, simulation and the csv round trip

run: python test_signals.py  (or pytest)
"""

import json
import os
import sys
import tempfile

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

# add project root to path
ROOT = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, ROOT)

from core.errors import ConfigError, InputError
from core.model import configuration_of
from core.signals import SignalSpec, load_signal_spec, read_sequence_csv, simulate, write_sequence_csv
from utils.helpers import run_tests

SCENARIOS = os.path.join(ROOT, "scenarios")


def _raises(exc, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc:
        return
    raise AssertionError(f"{fn.__name__} did not raise {exc.__name__}")


def test_zero_noise_gives_the_truth():
    spec = SignalSpec(n=6, changepoints=(2, 4), values=(1.0, -1.0, 0.5), sigma=0.0)
    data, truth = simulate(spec)
    assert_array_equal(data.y, truth)
    assert data.sigma2 is None
    assert truth.tolist() == [1.0, 1.0, -1.0, -1.0, 0.5, 0.5]


def test_simulation_is_deterministic_in_the_seed():
    spec = SignalSpec.equal_blocks(100, 4, value_range=(-2.0, 2.0), sigma=0.5)
    a, ta = simulate(spec, seed=7)
    b, tb = simulate(spec, seed=7)
    c, _ = simulate(spec, seed=8)
    assert_array_equal(a.y, b.y)
    assert_array_equal(ta, tb)
    assert not np.array_equal(a.y, c.y)
    assert a.sigma2 == 0.25


def test_spec_validation():
    _raises(ConfigError, SignalSpec, n=5, changepoints=(2,), values=(1.0,))
    _raises(ConfigError, SignalSpec, n=5, changepoints=(2,))
    _raises(ConfigError, SignalSpec, n=5, changepoints=(2,), values=(1.0, 2.0), value_range=(0, 1))
    _raises(ConfigError, SignalSpec, n=5, changepoints=(), values=(1.0,), sigma=-1.0)
    _raises(ConfigError, SignalSpec, n=5, changepoints=(), value_range=(1.0, 1.0))
    _raises(ConfigError, SignalSpec.equal_blocks, 5, 6, values=(0.0,) * 6)


def test_example2_scenario():
    spec = load_signal_spec(os.path.join(SCENARIOS, "example2.json"))
    assert spec.n == 1000
    assert len(spec.changepoints) == 19
    assert spec.config.block_sizes().tolist() == [50] * 20
    data, truth = simulate(spec)
    assert np.all(np.abs(truth) <= 2.0)
    assert configuration_of(truth).size == 20
    assert_allclose(data.sigma2, 0.25)


def test_example1_standin_scenario():
    spec = load_signal_spec(os.path.join(SCENARIOS, "example1_standin.json"))
    assert spec.n == 497
    assert spec.config.size == 7
    assert_allclose(spec.sigma, 0.2)


def test_scaled_keeps_the_shape():
    spec = load_signal_spec(os.path.join(SCENARIOS, "rate_shape.json"))
    big = spec.scaled(400)
    assert big.n == 400
    assert big.changepoints == tuple(4 * c for c in spec.changepoints)
    assert big.values == spec.values


def test_csv_round_trip_is_exact():
    data, _ = simulate(SignalSpec.equal_blocks(50, 5, value_range=(-3.0, 3.0), sigma=0.37), seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        path = write_sequence_csv(os.path.join(tmp, "data.csv"), data.y)
        back = read_sequence_csv(path)
    assert_array_equal(back.y, data.y)


def test_csv_without_header():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "plain.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("1.5\n-2\n\n3e-1\n")
        data = read_sequence_csv(path, sigma2=2.0)
    assert data.y.tolist() == [1.5, -2.0, 0.3]
    assert data.sigma2 == 2.0


def test_bad_inputs():
    with tempfile.TemporaryDirectory() as tmp:
        _raises(InputError, read_sequence_csv, os.path.join(tmp, "missing.csv"))

        empty = os.path.join(tmp, "empty.csv")
        with open(empty, "w", encoding="utf-8") as f:
            f.write("y\n")
        _raises(InputError, read_sequence_csv, empty)

        junk = os.path.join(tmp, "junk.csv")
        with open(junk, "w", encoding="utf-8") as f:
            f.write("y\n1.0\n1,000\n")
        _raises(InputError, read_sequence_csv, junk)

        garbled = os.path.join(tmp, "garbled.csv")
        with open(garbled, "wb") as f:
            f.write(b"y\n1.0\n\xff\xfe2.0\n")
        _raises(InputError, read_sequence_csv, garbled)
        _raises(InputError, load_signal_spec, garbled)

        spec = os.path.join(tmp, "spec.json")
        with open(spec, "w", encoding="utf-8") as f:
            json.dump({"n": 10, "changepoints": [3], "values": [1.0]}, f)
        _raises(ConfigError, load_signal_spec, spec)
        _raises(InputError, load_signal_spec, os.path.join(tmp, "nope.json"))


if __name__ == "__main__":
    sys.exit(0 if run_tests("SIGNAL TESTS", dict(globals())) else 1)
