"""Error-versus-budget sweeps, classical baseline, scaling fits and calibration."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import set_settings
from .hard import HardFamily, RegimeError
from .mean import MeanConfig, log_factor, mean_algorithm
from .query import Estimate, Resources
from .sequences import SequenceInstance, as_sequence, mean, random_ball_instance, single_spike
from .tail import choose_tail_params, tail_algorithm, tail_success_probability

log = logging.getLogger(__name__)

WORKERS_ENV = "QSUM_WORKERS"
PROFILES = ("uniform", "spiky", "single-spike", "hard")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    N_list: list = field(default_factory=lambda: [8, 16, 32, 64])
    p_list: list = field(default_factory=lambda: [1.0])
    n_grid: list = field(default_factory=lambda: [4, 8, 12, 16])
    mode: str = "sampled"
    trials: int = 10_000
    seeds: list = field(default_factory=lambda: [0])
    profiles: list = field(default_factory=lambda: list(PROFILES))
    pool_size: int = 2  # instances per random profile
    spike_counts: list = field(default_factory=lambda: [1, 2, 4])
    c_cal: float = 1.0
    c0: float = 1.0
    c1: float = 1.0
    repetitions: int = 3
    split: float = 0.5
    lstar_multiplier: float = 1.0
    qubit_cap: int = 22
    baseline: bool = True
    success_scale: float = 1.0
    record_timing: bool = False
    calibration_grid: list = field(default_factory=lambda: [0.05, 0.1, 0.25, 0.5, 1.0])
    calibration_M: list = field(default_factory=lambda: [2, 3, 4])
    calibration_target: float = 0.75
    calibration_eps: float = 2.0**-6
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("N_list", "p_list", "n_grid", "seeds", "profiles"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if self.mode not in ("exact", "sampled"):
            raise ConfigError(f"mode must be exact or sampled, got {self.mode!r}")
        if any(int(N) < 1 for N in self.N_list) or any(int(n) < 1 for n in self.n_grid):
            raise ConfigError("N and n values must be positive")
        if any(not 1 <= p < 2 for p in self.p_list):
            raise ConfigError("p values must lie in [1, 2)")
        if self.trials < 1 or self.pool_size < 1:
            raise ConfigError("trials and pool_size must be positive")
        unknown = set(self.profiles) - set(PROFILES)
        if unknown:
            raise ConfigError(f"unknown profiles {sorted(unknown)}")
        if self.c1 < 1 or self.c_cal < 1:
            raise ConfigError("c1 and c_cal must be >= 1")
        if self.mode == "exact":
            for N in self.N_list:
                need = choose_tail_params(int(N), 1, 1.0, qubit_cap=self.qubit_cap).m
                if need > self.qubit_cap:
                    raise ConfigError(f"exact mode at N={N} needs {need} qubits > cap {self.qubit_cap}")

    def mean_config(self) -> MeanConfig:
        return MeanConfig(
            c0=self.c0, c1=self.c1, split=self.split, repetitions=self.repetitions, lstar_multiplier=self.lstar_multiplier
        )

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, order=True)
class ResultRow:
    N: int
    p: float
    n_requested: int
    n_actual: int
    algorithm: str
    instance: str
    error_at_quarter: float
    success_probability: float
    wall_time: float | None
    seed: int


COLUMNS = [f.name for f in dataclasses.fields(ResultRow)]


def rate(n: float, N: int, p: float) -> float:
    """min(1, n^(-2/p) N^(2/p-1) max(log(n/sqrt N), 1)^(2/p-1))."""
    if n >= N:
        return 0.0
    return min(1.0, n ** (-2.0 / p) * N ** (2.0 / p - 1.0) * log_factor(n, N) ** (2.0 / p - 1.0))


# -- instances ------------------------------------------------------------------------------


def instance_pool(N: int, p: float, n: int, config: ExperimentConfig, seed: int) -> list[SequenceInstance]:
    """The finite pool over which the worst error of a grid point is taken."""
    pool = []
    base = seed * 1000
    for profile in config.profiles:
        if profile == "uniform":
            pool += [random_ball_instance(N, p, "uniform", seed=base + s) for s in range(config.pool_size)]
        elif profile == "spiky":
            for count in config.spike_counts:
                if count > N:
                    continue
                for s in range(config.pool_size):
                    pool.append(random_ball_instance(N, p, "spiky", seed=base + 100 * count + s, count=count))
        elif profile == "single-spike":
            pool.append(single_spike(N, p))
        elif profile == "hard":
            try:
                family = HardFamily.for_budget(n, N, p, config.c0)
            except RegimeError as exc:
                log.info("N=%d p=%g n=%d: hard family skipped (%s)", N, p, n, exc)
                continue
            pool += family.sample(2 * config.pool_size, seed=base)
    return pool


# -- classical baseline ------------------------------------------------------------------


def monte_carlo_baseline(
    f, n: int, trials: int = 10_000, seed: int = 0, replace: bool = True, full_enumeration: bool = False
) -> Estimate:
    """Mean of n uniformly sampled entries; n queries per trial.

    With ``full_enumeration`` and n >= N every entry is read once (exact).
    """
    f = as_sequence(f)
    if n < 1:
        raise ValueError("n must be >= 1")
    res = Resources(queries=n, qubits=0, measurements=0, gates=0.0, classical_ops=float(n))
    if full_enumeration and n >= f.N:
        return Estimate.constant(mean(f), Resources(queries=f.N, classical_ops=float(f.N)), "sampled", trials)
    rng = np.random.default_rng(seed)
    if replace:
        idx = rng.integers(0, f.N, size=(trials, n))
    else:
        if n > f.N:
            raise ValueError("sampling without replacement needs n <= N")
        idx = np.argsort(rng.random((trials, f.N)), axis=1)[:, :n]
    return Estimate(res, samples=f.values[idx].mean(axis=1))


# -- sweeps -----------------------------------------------------------------------------


def _grid(config: ExperimentConfig):
    for N in config.N_list:
        for p in config.p_list:
            for seed in config.seeds:
                for n in config.n_grid:
                    yield int(N), float(p), int(n), int(seed)


def _run_point(args) -> list[ResultRow]:
    config, N, p, n, seed = args
    previous = set_settings(qubit_cap=config.qubit_cap)
    try:
        return _point_rows(config, N, p, n, seed)
    finally:
        set_settings(previous)


def _point_rows(config: ExperimentConfig, N: int, p: float, n: int, seed: int) -> list[ResultRow]:
    rows = []
    mcfg = config.mean_config()
    tol = config.success_scale * rate(n, N, p)
    for i, inst in enumerate(instance_pool(N, p, n, config, seed)):
        name = f"{i:02d}-{inst.label}"
        truth = mean(inst)
        t0 = time.perf_counter()
        est = mean_algorithm(inst, n, p, config.mode, seed=seed, trials=config.trials, config=mcfg)
        elapsed = time.perf_counter() - t0
        rows.append(
            ResultRow(
                N, p, n, int(est.resources.queries), "quantum", name,
                float(est.error(truth)), float(est.success_probability(truth, tol)),
                elapsed if config.record_timing else None, seed,
            )
        )
        if config.baseline:
            t0 = time.perf_counter()
            mc = monte_carlo_baseline(inst, n, config.trials, seed)
            elapsed = time.perf_counter() - t0
            rows.append(
                ResultRow(
                    N, p, n, n, "monte-carlo", name,
                    float(mc.error(truth)), float(mc.success_probability(truth, tol)),
                    elapsed if config.record_timing else None, seed,
                )
            )
    return rows


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(config: ExperimentConfig, workers: int | None = None) -> list[ResultRow]:
    """Rows for every (N, p, seed, n) grid point, sorted for stable output."""
    config.validate()
    workers = worker_count() if workers is None else workers
    jobs = [(config, N, p, n, seed) for N, p, n, seed in _grid(config)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_point, jobs))
    else:
        chunks = [_run_point(job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    return sorted(rows, key=lambda r: (r.N, r.p, r.seed, r.n_requested, r.algorithm, r.instance))


def worst_rows(rows: Iterable[ResultRow], algorithm: str = "quantum") -> list[ResultRow]:
    """The row with the largest error per (N, p, seed, n), for one algorithm."""
    best: dict = {}
    for r in rows:
        if r.algorithm != algorithm:
            continue
        key = (r.N, r.p, r.seed, r.n_requested)
        if key not in best or r.error_at_quarter > best[key].error_at_quarter:
            best[key] = r
    return [best[k] for k in sorted(best)]


# -- output ----------------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def write_csv(rows: Sequence[ResultRow], path) -> None:
    Path(path).write_text(rows_to_csv(rows))


def write_json(rows: Sequence[ResultRow], path) -> None:
    Path(path).write_text(json.dumps([dataclasses.asdict(r) for r in rows], indent=1) + "\n")


def read_csv(path) -> list[ResultRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(
                ResultRow(
                    int(rec["N"]), float(rec["p"]), int(rec["n_requested"]), int(rec["n_actual"]),
                    rec["algorithm"], rec["instance"], float(rec["error_at_quarter"]),
                    float(rec["success_probability"]),
                    float(rec["wall_time"]) if rec["wall_time"] else None, int(rec["seed"]),
                )
            )
    return out


# -- scaling fits -----------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    residual: float
    points: int


def fit_scaling(rows, regime: Callable[[float], bool] | tuple | None = None, algorithm: str = "quantum") -> ScalingFit:
    """Least-squares fit of log(error) against log(n), worst instance per n.

    ``rows`` holds ResultRow objects or (n, error) pairs; ``regime`` is a
    predicate on n or an inclusive (lo, hi) range. Zero errors are dropped.
    """
    pairs: dict = {}
    for r in rows:
        if isinstance(r, ResultRow):
            if r.algorithm != algorithm:
                continue
            n, e = r.n_requested, r.error_at_quarter
        else:
            n, e = r
        pairs[n] = max(pairs.get(n, 0.0), float(e))
    if isinstance(regime, tuple):
        lo, hi = regime
        keep = lambda n: lo <= n <= hi  # noqa: E731
    else:
        keep = regime or (lambda n: True)
    pts = sorted((n, e) for n, e in pairs.items() if keep(n) and e > 0)
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points with nonzero error, got {len(pts)}")
    x = np.log([n for n, _ in pts])
    y = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return ScalingFit(float(slope), float(intercept), resid, len(pts))


# -- calibration ------------------------------------------------------------------------


@dataclass
class CalibrationRecord:
    name: str
    value: float | None
    passed: bool
    target: float
    searched: list
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"


def calibrate_constant(
    name: str, grid: Sequence[float], success: Callable[[float], float], target: float = 0.75
) -> CalibrationRecord:
    """Smallest grid value whose success probability reaches ``target``."""
    searched = sorted(grid)
    diag = {}
    for c in searched:
        s = float(success(c))
        diag[repr(c)] = s
        if s >= target:
            return CalibrationRecord(name, c, True, target, searched, diag)
    return CalibrationRecord(name, None, False, target, searched, diag)


def tail_success_floor(config: ExperimentConfig, multiplier: float) -> float:
    """Smallest exact success probability of the tail search over the pool.

    Runs the search (forced quantum) for every N, p, M in the calibration
    grid with M^p <= N, on uniform and spiky pool instances.
    """
    worst = 1.0
    previous = set_settings(qubit_cap=config.qubit_cap)
    try:
        for N in config.N_list:
            for p in config.p_list:
                pool = instance_pool(int(N), float(p), 1, dataclasses.replace(config, profiles=["uniform", "spiky"]), 0)
                for M in config.calibration_M:
                    if M**p > N:
                        continue
                    for f in pool:
                        est = tail_algorithm(
                            f,
                            int(N),
                            int(M),
                            float(p),
                            epsilon_enc=config.calibration_eps,
                            mode="exact",
                            lstar_multiplier=multiplier,
                            force_quantum=True,
                        )
                        worst = min(worst, tail_success_probability(est, f, int(M)))
    finally:
        set_settings(previous)
    return worst


def calibrate(config: ExperimentConfig) -> CalibrationRecord:
    """Smallest repetition multiplier of the tail search meeting the success target."""
    rec = calibrate_constant(
        "lstar_multiplier",
        config.calibration_grid,
        lambda c: tail_success_floor(config, c),
        config.calibration_target,
    )
    rec.diagnostics["N_list"] = list(config.N_list)
    rec.diagnostics["p_list"] = list(config.p_list)
    rec.diagnostics["M"] = list(config.calibration_M)
    return rec
