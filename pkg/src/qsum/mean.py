"""The composed mean estimator: truncated part by counting, tail by search."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .counting import convolve, median_law, truncated_mean_algorithm
from .query import Estimate, Resources
from .sequences import as_sequence, mean
from .tail import tail_algorithm


@dataclass(frozen=True)
class MeanConfig:
    """Tunable constants of the composed estimator.

    c0: below n = c0 * sqrt(N) the zero estimate is returned.
    c1: calibration of the truncation level in ``choose_k``.
    split: share of n given to the truncated part.
    repetitions: runs per component; each component outputs their lower median.
    """

    c0: float = 1.0
    c1: float = 1.0
    split: float = 0.5
    repetitions: int = 3
    lstar_multiplier: float = 1.0
    r_planes: int | None = None

    def __post_init__(self):
        if self.c1 < 1:
            raise ValueError("c1 must be >= 1")
        if not 0 < self.split <= 1:
            raise ValueError("split must lie in (0, 1]")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def log_factor(n: float, N: int) -> float:
    return max(math.log2(n / math.sqrt(N)), 1.0)


def choose_k(n: int, N: int, p: float, c1_cal: float = 1.0) -> int:
    """The k with 2^(k-1) < c1 (N/n)^(2/p) max(log(n/sqrt N), 1)^(2/p) <= 2^k."""
    if not math.sqrt(N) <= n < N:
        raise ValueError(f"choose_k needs sqrt(N) <= n < N, got n={n}, N={N}")
    if c1_cal < 1:
        raise ValueError("c1_cal must be >= 1")
    bound = c1_cal * ((N / n) * log_factor(n, N)) ** (2.0 / p)
    k = max(0, math.ceil(math.log2(bound)))
    # guard against rounding in log2 at exact powers of two
    while k > 0 and 2.0 ** (k - 1) >= bound:
        k -= 1
    while 2.0**k < bound:
        k += 1
    return k


def median_compose(runs: Sequence[float]) -> float:
    """Lower median of repeated runs of one component."""
    if len(runs) == 0:
        raise ValueError("no runs to compose")
    s = sorted(runs)
    return s[(len(s) + 1) // 2 - 1]


def composed_success(p_trunc: float, p_tail: float, repetitions: int = 3) -> float:
    """Lower bound on P(both boosted components are within tolerance).

    Each component is replaced by the lower median of ``repetitions``
    independent runs, which is within tolerance whenever a majority of the
    runs are; the two components are independent.
    """
    from scipy.stats import binom

    need = repetitions // 2 + 1
    return float(binom.sf(need - 1, repetitions, p_trunc) * binom.sf(need - 1, repetitions, p_tail))


def _boost(est: Estimate, reps: int, trials: int) -> Estimate:
    if est.info.get("path") in ("zero", "classical"):
        # deterministic component: one run suffices
        if est.samples is not None:
            return Estimate(est.resources, samples=est.samples[:trials], info=est.info)
        return est
    if est.distribution is not None:
        return Estimate(est.resources.times(reps), distribution=median_law(est.distribution, reps), info=est.info)
    runs = est.samples.reshape(trials, reps).copy()
    runs.sort(axis=1)
    return Estimate(est.resources.times(reps), samples=runs[:, (reps + 1) // 2 - 1], info=est.info)


def mean_algorithm(
    f,
    n: int,
    p: float,
    mode: str = "sampled",
    seed: int = 0,
    trials: int = 1,
    config: MeanConfig | None = None,
) -> Estimate:
    """Estimate S_N f with query budget parameter n.

    n >= N reads every entry (exact, N queries). n < max(c0, 1) sqrt(N)
    returns 0.
    Otherwise S_N f = S_{N,2^k} f + S'_{N,2^k} f with k from ``choose_k``;
    the truncated part gets split * n, the tail search runs with M = 2^k
    (falling back to N classical queries when its quantum cost exceeds N),
    each component is replaced by the lower median of ``repetitions``
    independent runs, and the two are added.
    """
    f = as_sequence(f)
    cfg = MeanConfig() if config is None else config
    N = f.N
    if n < 1:
        raise ValueError("n must be >= 1")
    if n >= N:
        res = Resources(queries=N, qubits=0, measurements=0, gates=0.0, classical_ops=float(N))
        return Estimate.constant(mean(f), res, mode, trials, {"path": "classical"})
    if n < cfg.c0 * math.sqrt(N) or n < math.sqrt(N):
        return Estimate.constant(0.0, Resources(), mode, trials, {"path": "zero"})

    k = choose_k(n, N, p, cfg.c1)
    M = 2**k
    n_trunc = max(1, math.floor(cfg.split * n))
    reps = cfg.repetitions
    seeds = np.random.SeedSequence(seed).generate_state(2)
    inner = 1 if mode == "exact" else trials * reps
    trunc = truncated_mean_algorithm(f, k, n_trunc, p, mode, int(seeds[0]), inner, cfg.r_planes)
    tail = tail_algorithm(
        f, N, M, p, mode=mode, seed=int(seeds[1]), trials=inner, budget=N, lstar_multiplier=cfg.lstar_multiplier
    )
    trunc, tail = _boost(trunc, reps, trials), _boost(tail, reps, trials)
    res = trunc.resources + tail.resources
    info = {
        "path": "composed",
        "k": k,
        "M": M,
        "n_trunc": n_trunc,
        "truncated_path": trunc.info.get("path"),
        "tail_path": tail.info.get("path"),
        "truncated": trunc,
        "tail": tail,
    }
    if mode == "exact":
        return Estimate(res, distribution=convolve(trunc.distribution, tail.distribution), info=info)
    return Estimate(res, samples=trunc.samples + tail.samples, info=info)
