#!/usr/bin/env python3
"""
Blockpost - Fit Runner
=======================
command line front end for the whole thing

subcommands:
- fit       sample the posterior, write summary json + plot ready csvs
- oracle    exact posterior by enumeration (n <= 20)
- simulate  write data.csv / truth.csv for a scenario
- study     risk over the target rate across a grid of n

exit codes: 0 ok, 2 input, 3 config, 4 domain, 5 capacity
"""

import argparse
import json
import os
import sys
import time
import traceback
from dataclasses import dataclass, replace
from datetime import datetime
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

# make sure we can import our modules
CORE_DIR = os.path.dirname(os.path.abspath(__file__))
ROOT_DIR = os.path.dirname(CORE_DIR)
sys.path.insert(0, ROOT_DIR)

from core.errors import BlockpostError, CapacityError, ConfigError, DomainError
from core.model import Hyperparams, SequenceData, estimate_variance, resolve_sigma2
from core.oracle import MAX_ORACLE_N, enumerate_exact_posterior, exact_posterior_mean
from core.safety_monitor import SafetyMonitor, estimate_fit_bytes, estimate_oracle_bytes
from core.sampler import SamplerConfig, derive_seed, run_chain
from core.signals import load_signal_spec, read_sequence_csv, simulate, write_sequence_csv
from core.summaries import evaluate, map_config, mann_kendall, summarize
from utils.helpers import (
    atomic_write_text,
    csv_text,
    ensure_dir,
    error,
    format_duration,
    log,
    parse_int_list,
)


DEFAULT_SETTINGS = {
    "alpha": 0.99,
    "v": 1.0,
    "lambda": 1.0,
    "sigma2": None,  # None -> known variance if the data has one, else estimate
    "iterations": 50000,
    "burnIn": 10000,
    "thin": 10,
    "chains": 2,
    "seed": None,  # None -> 0 for the sampler, the scenario's own seed for simulation
    "level": 0.95,
    "outDir": "blockpost_out",
    "workers": None,
    "proposalWeights": [0.4, 0.4, 0.2],
    "progress": False,
}

# flag dest -> settings key
FLAG_KEYS = {
    "alpha": "alpha",
    "v": "v",
    "lam": "lambda",
    "sigma2": "sigma2",
    "iters": "iterations",
    "burnin": "burnIn",
    "thin": "thin",
    "chains": "chains",
    "seed": "seed",
    "level": "level",
    "out_dir": "outDir",
    "workers": "workers",
}


def _parse_sigma2(value) -> Union[None, str, float]:
    if value is None or value == "estimate":
        return value
    try:
        sigma2 = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"sigma2 must be a positive number or 'estimate', got {value!r}")
    if not sigma2 > 0 or sigma2 == float("inf"):
        raise ConfigError(f"sigma2 must be a positive number or 'estimate', got {value!r}")
    return sigma2


def _parse_flag(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "1", "yes", "on", "false", "0", "no", "off", ""):
        return value.strip().lower() in ("true", "1", "yes", "on")
    if isinstance(value, (int, float)) and value in (0, 1):
        return bool(value)
    raise ConfigError(f"expected true or false, got {value!r}")


@dataclass(frozen=True)
class RunConfig:
    """everything a run needs, checked up front"""

    alpha: float
    v: float
    lam: float
    sigma2: Union[None, str, float]
    sampler: SamplerConfig
    seed: Optional[int]
    level: float
    out_dir: str
    workers: Optional[int]
    progress: bool

    @classmethod
    def from_settings(cls, settings: Optional[dict] = None) -> "RunConfig":
        merged = dict(DEFAULT_SETTINGS)
        merged.update({k: v for k, v in (settings or {}).items() if v is not None})

        try:
            seed = merged.get("seed")
            seed = int(seed) if seed is not None else None
            sampler = SamplerConfig(
                iterations=int(merged["iterations"]),
                burn_in=int(merged["burnIn"]),
                thin=int(merged["thin"]),
                seed=seed if seed is not None else 0,
                chains=int(merged["chains"]),
                proposal_weights=tuple(float(w) for w in merged["proposalWeights"]),
            )
            level = float(merged["level"])
            workers = merged.get("workers")
            workers = int(workers) if workers is not None else None
            config = cls(
                alpha=float(merged["alpha"]),
                v=float(merged["v"]),
                lam=float(merged["lambda"]),
                sigma2=_parse_sigma2(merged.get("sigma2")),
                sampler=sampler,
                seed=seed,
                level=level,
                out_dir=str(merged["outDir"]),
                workers=workers,
                progress=_parse_flag(merged.get("progress", False)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"invalid settings: {e}")

        if not 0 < config.level < 1:
            raise ConfigError(f"level must lie in (0, 1), got {config.level}")
        if config.workers is not None and config.workers < 1:
            raise ConfigError(f"workers must be positive, got {config.workers}")
        try:
            config.hyperparams(1.0)
        except DomainError as e:
            raise ConfigError(f"invalid hyperparameters: {e}")
        return config

    def hyperparams(self, sigma2: float) -> Hyperparams:
        return Hyperparams(sigma2=sigma2, alpha=self.alpha, v=self.v, lam=self.lam)


class FitRunner:
    """
    runs one command start to finish

    keeps a timeline of the steps in the log, never in the output
    files - those have to come out byte identical every time
    """

    def __init__(self, settings: Optional[dict] = None):
        self.config = RunConfig.from_settings(settings)
        self.out_dir = self.config.out_dir
        self.monitor = SafetyMonitor()

        # time tracking
        self.start_time = time.time()
        self.timeline: List[Dict] = []
        self.system_info: Dict = {}

    def _log_step(self, step_name: str, status: str = "start"):
        """log step to timeline"""
        elapsed = time.time() - self.start_time
        entry = {
            "step": step_name,
            "status": status,
            "elapsed_seconds": round(elapsed, 1),
            "timestamp": datetime.now().isoformat(),
        }
        self.timeline.append(entry)

        if status == "start":
            log(f"[TIMELINE] > {step_name} started at {format_duration(elapsed)}")
        else:
            log(f"[TIMELINE] ok {step_name} {status} at {format_duration(elapsed)}")

    def _check_resources(self, required_bytes: int):
        status = self.monitor.check(required_bytes, self.out_dir)
        if not status["safe"]:
            raise CapacityError(f"system not safe to run: {status}")
        if status["memory"] == "LOW":
            log(f"WARNING: memory is tight for this run ({status['required']} needed)")

    def _path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    # =============================================================
    # loading
    # =============================================================

    def load(
        self, input_path: Optional[str] = None, simulate_path: Optional[str] = None
    ) -> Tuple[SequenceData, Optional[np.ndarray]]:
        """data from a csv or from a scenario; truth only comes with scenarios"""
        if bool(input_path) == bool(simulate_path):
            raise ConfigError("give exactly one of --input or --simulate")

        if input_path:
            data = read_sequence_csv(input_path)
            log(f"loaded {data.n} observations from {input_path}")
            return data, None

        spec = load_signal_spec(simulate_path)
        data, truth = simulate(spec, seed=self.config.seed)
        log(f"simulated {spec.label or 'signal'}: n={spec.n}, {len(spec.changepoints) + 1} blocks, sigma={spec.sigma}")
        return data, truth

    def _write_simulated(self, data: SequenceData, truth: np.ndarray):
        write_sequence_csv(self._path("data.csv"), data.y, header="y")
        write_sequence_csv(self._path("truth.csv"), truth, header="theta")

    # =============================================================
    # fit
    # =============================================================

    def fit(self, data: SequenceData, truth: Optional[np.ndarray] = None) -> dict:
        """sample, summarize, write summary.json + coordinates.csv + block_size_pmf.csv"""
        cfg = self.config
        sigma2, source = resolve_sigma2(data, cfg.sigma2)
        hp = cfg.hyperparams(sigma2)
        sc = cfg.sampler
        log(f"sigma2 = {sigma2:.6g} ({source}), alpha={hp.alpha}, v={hp.v}, lambda={hp.lam}")

        self._check_resources(estimate_fit_bytes(data.n, sc.chains, sc.retained_per_chain))
        workers = self.monitor.recommended_workers(sc.chains, cfg.workers)

        self._log_step("sample", "start")
        samples = run_chain(data, hp, sc, workers=workers, show_progress=cfg.progress, on_progress=log)
        self._log_step("sample", "done")

        self._log_step("summarize", "start")
        summary = summarize(samples, data, cfg.level)
        metrics = {
            "n_draws": summary.n_draws,
            "map_block_count": map_config(samples).size,
            "sigma2_estimate": estimate_variance(data) if data.n >= 2 else None,
        }
        if truth is not None:
            metrics.update(evaluate(truth, summary).to_dict())
        self._log_step("summarize", "done")

        report = {
            "n": data.n,
            "hyperparams": hp.to_dict(),
            "sigma2_used": sigma2,
            "sigma2_source": source,
            "block_size_pmf": {str(b): p for b, p in summary.block_size_pmf.items()},
            "acceptance_rates": summary.acceptance_rates,
            "metrics": metrics,
        }

        ensure_dir(self.out_dir)
        atomic_write_text(self._path("summary.json"), json.dumps(report, indent=2) + "\n")
        rows = (
            (i + 1, data.y[i], summary.point_estimate[i], summary.lo[i], summary.hi[i])
            for i in range(data.n)
        )
        atomic_write_text(self._path("coordinates.csv"), csv_text(["index", "y", "post_mean", "lo", "hi"], rows))
        atomic_write_text(
            self._path("block_size_pmf.csv"),
            csv_text(["block_count", "probability"], summary.block_size_pmf.items()),
        )

        mode = max(summary.block_size_pmf, key=summary.block_size_pmf.get)
        log(f"posterior |B| mode = {mode} ({summary.block_size_pmf[mode]:.3f}), {summary.n_draws} draws kept")
        return report

    # =============================================================
    # oracle
    # =============================================================

    def oracle(self, data: SequenceData) -> dict:
        """exact posterior dump: exact_posterior.csv (every configuration) + exact_posterior.json"""
        if data.n > MAX_ORACLE_N:
            raise CapacityError(f"oracle is capped at n={MAX_ORACLE_N}, got n={data.n}")
        self._check_resources(estimate_oracle_bytes(data.n))

        sigma2, source = resolve_sigma2(data, self.config.sigma2)
        hp = self.config.hyperparams(sigma2)

        self._log_step("enumerate", "start")
        exact = enumerate_exact_posterior(data, hp)
        mean = exact_posterior_mean(data, hp, exact)
        self._log_step("enumerate", "done")

        probs = exact.probabilities()
        rows = (
            (exact.config(i).label() or "-", int(exact.sizes[i]), probs[i], exact.log_weights[i])
            for i in range(len(exact))
        )
        report = {
            "n": data.n,
            "hyperparams": hp.to_dict(),
            "sigma2_used": sigma2,
            "sigma2_source": source,
            "configurations": len(exact),
            "block_size_pmf": {str(b): p for b, p in exact.block_size_pmf().items()},
            "posterior_mean": mean.tolist(),
        }

        ensure_dir(self.out_dir)
        atomic_write_text(
            self._path("exact_posterior.csv"),
            csv_text(["changepoints", "block_count", "probability", "log_probability"], rows),
        )
        atomic_write_text(self._path("exact_posterior.json"), json.dumps(report, indent=2) + "\n")
        log(f"[Oracle] {len(exact)} configurations enumerated")
        return report

    # =============================================================
    # study
    # =============================================================

    def study(self, shape_path: str, n_grid: List[int], replicates: int) -> dict:
        """
        fixed block shape stretched over n_grid; per n, median of
        ||theta_hat - theta*||^2 / eps_n over replicate seeds
        """
        if replicates < 1 or len(n_grid) < 1:
            raise ConfigError("study needs at least one n and one replicate")
        spec = load_signal_spec(shape_path)
        cfg = self.config
        base_seed = cfg.seed if cfg.seed is not None else 0
        workers = self.monitor.recommended_workers(cfg.sampler.chains, cfg.workers)

        rows = []
        for g, n in enumerate(n_grid):
            scaled = spec.scaled(n)
            self._check_resources(estimate_fit_bytes(n, cfg.sampler.chains, cfg.sampler.retained_per_chain))
            self._log_step(f"study n={n}", "start")
            for r in range(replicates):
                seed = derive_seed(derive_seed(base_seed, g), r)
                data, truth = simulate(scaled, seed=seed)
                sigma2, _ = resolve_sigma2(data, cfg.sigma2)
                samples = run_chain(data, cfg.hyperparams(sigma2), replace(cfg.sampler, seed=seed), workers=workers)
                m = evaluate(truth, summarize(samples, data, cfg.level))
                rows.append((n, r, seed, m.sq_error, m.normalized_risk, m.coverage, m.complexity_exceedance))
            self._log_step(f"study n={n}", "done")

        medians = [float(np.median([row[4] for row in rows if row[0] == n])) for n in n_grid]
        # None when some median risk is zero
        band = max(medians) / min(medians) if min(medians) > 0 else None
        tau, p_value = mann_kendall(medians) if len(medians) >= 3 else (0.0, 1.0)
        report = {
            "n_grid": list(n_grid),
            "replicates": replicates,
            "median_normalized_risk": medians,
            "risk_band_ratio": band,
            "trend_tau": tau,
            "trend_p_value": p_value,
            "mean_complexity_exceedance": float(np.mean([row[6] for row in rows])),
            "mean_coverage": float(np.mean([row[5] for row in rows])),
        }

        ensure_dir(self.out_dir)
        header = ["n", "replicate", "seed", "sq_error", "normalized_risk", "coverage", "complexity_exceedance"]
        atomic_write_text(self._path("study.csv"), csv_text(header, rows))
        atomic_write_text(self._path("study.json"), json.dumps(report, indent=2) + "\n")
        spread = "n/a" if band is None else f"x{band:.2f}"
        log(f"[Study] median risk/eps_n by n: {', '.join(f'{m:.3f}' for m in medians)} (band {spread})")
        return report

    # =============================================================
    # dispatch
    # =============================================================

    def run(self, command: str, input_path: Optional[str] = None, simulate_path: Optional[str] = None,
            n_grid: Optional[List[int]] = None, replicates: int = 20) -> int:
        """main entry - returns the exit code"""
        log(f"blockpost {command} -> {self.out_dir}")

        self._log_step("system_check", "start")
        status = self.monitor.check(0, self.out_dir)
        if not status["safe"]:
            raise CapacityError(f"system not safe to run: {status}")
        self.system_info = self.monitor.get_system_info()
        log("[System] " + ", ".join(f"{k}={v}" for k, v in self.system_info.items()))
        self._log_step("system_check", "done")

        if command == "study":
            if not simulate_path:
                raise ConfigError("study needs --simulate <shape.json>")
            self.study(simulate_path, n_grid or [100, 200, 400, 800], replicates)
        else:
            self._log_step("load", "start")
            data, truth = self.load(input_path, simulate_path)
            self._log_step("load", "done")

            if truth is not None:
                ensure_dir(self.out_dir)
                self._write_simulated(data, truth)

            if command == "fit":
                self.fit(data, truth)
            elif command == "oracle":
                self.oracle(data)
            elif command == "simulate":
                if truth is None:
                    raise ConfigError("simulate needs --simulate <spec.json>")
                log(f"wrote data.csv and truth.csv to {self.out_dir}")
            else:
                raise ConfigError(f"unknown command {command!r}")

        elapsed = time.time() - self.start_time
        log(f"{command} completed in {format_duration(elapsed)}")
        return 0


# =============================================================
# cli
# =============================================================

class _Parser(argparse.ArgumentParser):
    """usage errors are config errors (exit 3), not argparse's exit 2"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", help="CSV with one observation per line")
    common.add_argument("--simulate", help="scenario json to simulate data from")
    common.add_argument("--settings", help="JSON string or path to a JSON settings file")
    common.add_argument("--alpha", type=float, help="fractional likelihood power (default 0.99)")
    common.add_argument("--v", type=float, help="prior variance scale (default 1.0)")
    common.add_argument("--lambda", dest="lam", type=float, help="block count penalty exponent (default 1.0)")
    common.add_argument("--sigma2", help="noise variance: a number or 'estimate'")
    common.add_argument("--iters", type=int, help="MH iterations per chain (default 50000)")
    common.add_argument("--burnin", type=int, help="burn-in iterations (default 10000)")
    common.add_argument("--thin", type=int, help="keep every thin-th iteration (default 10)")
    common.add_argument("--chains", type=int, help="independent chains (default 2)")
    common.add_argument("--seed", type=int, help="the one seed everything derives from")
    common.add_argument("--level", type=float, help="credible level (default 0.95)")
    common.add_argument("--out-dir", dest="out_dir", help="where results go")
    common.add_argument("--workers", type=int, help="threads for chains (results do not depend on it)")
    common.add_argument("--progress", action="store_true", help="show progress bars")

    parser = _Parser(description="Blockpost - empirical Bayes piecewise constant posterior")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("fit", parents=[common], help="sample the posterior and summarize")
    sub.add_parser("oracle", parents=[common], help="exact posterior by enumeration (n <= 20)")
    sub.add_parser("simulate", parents=[common], help="write data.csv / truth.csv for a scenario")
    study = sub.add_parser("study", parents=[common], help="normalized risk across a grid of n")
    study.add_argument("--n-grid", dest="n_grid", default="100,200,400,800", help="comma separated n values")
    study.add_argument("--replicates", type=int, default=20, help="seeds per n")
    return parser


def _load_settings(text: Optional[str]) -> dict:
    if not text:
        return {}
    try:
        if os.path.isfile(text):
            with open(text, "r", encoding="utf-8") as f:
                settings = json.load(f)
        else:
            settings = json.loads(text)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"invalid settings JSON: {e}")
    if not isinstance(settings, dict):
        raise ConfigError("settings must be a JSON object")
    return settings


def settings_from_args(args: argparse.Namespace) -> dict:
    """settings file/string first, explicit flags on top"""
    settings = _load_settings(args.settings)
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    if args.progress:
        settings["progress"] = True
    return settings


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        runner = FitRunner(settings_from_args(args))
        n_grid = None
        if getattr(args, "n_grid", None):
            try:
                n_grid = parse_int_list(args.n_grid)
            except ValueError:
                raise ConfigError(f"--n-grid must be comma separated integers, got {args.n_grid!r}")
        return runner.run(
            args.command,
            input_path=args.input,
            simulate_path=args.simulate,
            n_grid=n_grid,
            replicates=getattr(args, "replicates", 20),
        )
    except BlockpostError as e:
        error(str(e))
        return e.exit_code
    except Exception as e:
        error(f"run failed: {e}")
        traceback.print_exc(file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
