"""Truncated mean S_{N,2^k} f via quantum counting on level windows.

Each level window {i : 2^(l-1) <= (-1)^s f(i) < 2^l} is rescaled to values
g(i) in [1/2, 1) (or [0, 1) at level 0). Writing g in binary, the window
mean becomes sum_j 2^-j |{i : bit j of g(i) is set}| / N and every count is
estimated by phase estimation of a Grover iterate (quantum counting).
Levels are boosted by lower-median repetition and combined linearly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .config import BudgetExceeded, get_settings
from .query import (
    Estimate,
    Hadamards,
    MeasuredAlgorithm,
    Permutation,
    PhaseFlip,
    QueryDescriptor,
    Resources,
    SubregisterUnitary,
    UnmeasuredAlgorithm,
    build_query_unitary,
    run_unmeasured,
)
from .sequences import SequenceInstance, as_sequence, level_window
from .simcore import OutcomeDistribution, RegisterLayout, measure_distribution
from .tail import index_qubits

MAX_PLANES = 52


def inverse_qft(t: int) -> np.ndarray:
    size = 1 << t
    w, y = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    return np.exp(-2j * np.pi * w * y / size) / np.sqrt(size)


def phase_qubits(n_budget: int) -> int:
    """Largest t with 2^t - 1 <= n_budget."""
    if n_budget < 1:
        raise ValueError("a counting run needs a budget of at least one query")
    return int(math.floor(math.log2(n_budget + 1) + 1e-12))


def amplitude_from_outcome(omega, t: int):
    return np.sin(np.pi * np.asarray(omega) / (1 << t)) ** 2


@dataclass(frozen=True)
class CountingConfig:
    m_prime: int
    t: int

    @property
    def layout(self) -> RegisterLayout:
        return RegisterLayout(self.m_prime + 1 + self.t, self.m_prime, 1)

    @property
    def queries(self) -> int:
        return (1 << self.t) - 1

    def resources(self) -> Resources:
        m = self.layout.m
        gates = self.queries * (2 * self.m_prime + 6) + self.t**2
        return Resources(self.queries, m, 1, float(gates), float(self.t))


def counting_query(N: int, beta: Callable[[float], int], cfg: CountingConfig) -> QueryDescriptor:
    layout = cfg.layout
    return QueryDescriptor(layout.m, cfg.m_prime, 1, Z=range(N), tau=lambda i: i, beta=beta)


def build_amplitude_estimation(query: QueryDescriptor, cfg: CountingConfig) -> UnmeasuredAlgorithm:
    """Phase estimation of the Grover iterate, one query per iterate.

    Phase qubit j controls G^(2^(t-1-j)). Each controlled query is realised by
    phase kickback: the value qubit is prepared in |-> when the control is
    set and in |+> otherwise, so Q_f flips the sign of marked indices only
    under control. The diffusion 2|s><s| - I is applied under the same
    control.
    """
    layout = cfg.layout
    i1, _, anc = layout.basis_fields()
    value = layout.value_qubits[0]
    phase = layout.ancilla_qubits
    m = layout.m
    W = Hadamards(layout.index_qubits)
    Hv = Hadamards((value,))
    idx = np.arange(layout.dim, dtype=np.int64)
    prep, unprep, diffusion = {}, {}, {}
    for j, q in enumerate(phase):
        ctrl = (idx >> (m - 1 - q)) & 1
        cnot = Permutation(idx ^ (ctrl << (m - 1 - value)), f"cnot{j}")
        prep[j] = (cnot, Hv)
        unprep[j] = (Hv, cnot)
        flip = PhaseFlip(np.where((ctrl == 1) & (i1 != 0), -1.0, 1.0), f"diff{j}")
        diffusion[j] = (W, flip, W)
    controls = [j for j in range(cfg.t) for _ in range(1 << (cfg.t - 1 - j))]
    iqft = SubregisterUnitary(phase, inverse_qft(cfg.t), "iqft")
    unitaries = [(Hadamards(phase), W) + prep[controls[0]]]
    for a, b in zip(controls, controls[1:]):
        unitaries.append(unprep[a] + diffusion[a] + prep[b])
    last = controls[-1]
    unitaries.append(unprep[last] + diffusion[last] + (iqft,))
    return UnmeasuredAlgorithm(query, unitaries)


def counting_algorithm(N: int, beta, cfg: CountingConfig) -> MeasuredAlgorithm:
    layout = cfg.layout
    return MeasuredAlgorithm(
        [build_amplitude_estimation(counting_query(N, beta, cfg), cfg)],
        b0=0,
        phi=lambda h: float(amplitude_from_outcome(layout.decompose(h[0])[2], cfg.t)),
        name="amplitude-estimation",
        gate_estimate=cfg.resources().gates,
    )


_AE_CACHE: dict = {}


def amplitude_estimation(f, beta, t: int, m_prime: int | None = None) -> OutcomeDistribution:
    """Exact law of the estimate sin^2(pi w / 2^t) of the marked fraction.

    Marked indices are {i < N : beta(f(i)) == 1} inside an index register of
    2^m' states (default m' = ceil(log2 N)).
    """
    f = as_sequence(f)
    m_prime = index_qubits(f.N) if m_prime is None else m_prime
    cfg = CountingConfig(m_prime, t)
    if cfg.layout.m > get_settings().qubit_cap:
        raise BudgetExceeded(f"{cfg.layout.m} qubits exceed the exact-simulation cap")
    query = counting_query(f.N, beta, cfg)
    codes = query.codes(f)
    key = (codes.tobytes(), m_prime, t)
    if key not in _AE_CACHE:
        alg = build_amplitude_estimation(query, cfg)
        state = run_unmeasured(alg, f, 0, build_query_unitary(query, f))
        layout = cfg.layout
        phase_law = measure_distribution(state).map(lambda x: int(layout.decompose(x)[2]))
        _AE_CACHE[key] = phase_law.map(lambda w: _key(float(amplitude_from_outcome(w, t))))
    return _AE_CACHE[key]


def amplitude_estimation_marked(marked, m_prime: int, t: int) -> OutcomeDistribution:
    """Same as amplitude_estimation for an explicit marked set of indices."""
    size = 1 << m_prime
    mask = np.zeros(size)
    mask[list(marked)] = 1.0
    return amplitude_estimation(SequenceInstance(mask), lambda z: int(z), t, m_prime)


def count_estimate(f, window: Callable[[float], bool], n_budget: int, m_prime: int | None = None) -> OutcomeDistribution:
    """Law of the count estimate 2^m' * a_hat for the entries inside ``window``."""
    f = as_sequence(f)
    m_prime = index_qubits(f.N) if m_prime is None else m_prime
    t = phase_qubits(n_budget)
    law = amplitude_estimation(f, lambda z: int(bool(window(z))), t, m_prime)
    scale = float(1 << m_prime)
    return law.map(lambda a: scale * a)


# -- distribution arithmetic -------------------------------------------------------


def _key(v: float) -> float:
    return round(v, 12) + 0.0


def convolve(a: OutcomeDistribution, b: OutcomeDistribution, scale_b: float = 1.0) -> OutcomeDistribution:
    """Law of X + scale_b * Y for independent X ~ a, Y ~ b.

    Atoms lighter than the pruning tolerance are dropped and the remainder
    renormalised. If more than ``max_atoms`` distinct values remain, atoms are
    pooled into equal-width bins placed at their conditional mean, so every
    value moves by less than the support span / max_atoms per call.
    """
    settings = get_settings()
    xa, pa = a.values(), a.probabilities
    xb, pb = scale_b * b.values(), b.probabilities
    if len(xa) * len(xb) > settings.support_budget:
        cap = max(settings.support_budget // min(len(xa), len(xb)), 2)
        if len(xa) >= len(xb):
            xa, pa = _pool(*_sorted(xa, pa), cap)
        else:
            xb, pb = _pool(*_sorted(xb, pb), cap)
    x = np.add.outer(xa, xb).ravel()
    w = np.multiply.outer(pa, pb).ravel()
    keys = np.round(x, 12) + 0.0
    uniq, inv = np.unique(keys, return_inverse=True)
    probs = np.bincount(inv, weights=w, minlength=len(uniq))
    keep = probs > settings.prune_tol
    uniq, probs = uniq[keep], probs[keep]
    if len(uniq) > settings.max_atoms:
        uniq, probs = _pool(uniq, probs, settings.max_atoms)
    return OutcomeDistribution([float(v) for v in uniq], probs / probs.sum())


def _sorted(values: np.ndarray, probs: np.ndarray):
    order = np.argsort(values)
    return values[order], probs[order]


def _pool(values: np.ndarray, probs: np.ndarray, bins: int):
    edges = np.linspace(values[0], values[-1], bins + 1)
    which = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    mass = np.bincount(which, weights=probs, minlength=bins)
    moment = np.bincount(which, weights=probs * values, minlength=bins)
    used = mass > 0
    return np.round(moment[used] / mass[used], 12) + 0.0, mass[used]


def median_law(dist: OutcomeDistribution, nu: int) -> OutcomeDistribution:
    """Exact law of the lower median of nu i.i.d. draws."""
    from scipy.stats import binom

    if nu < 1:
        raise ValueError("nu must be >= 1")
    merged = dist.map(_key)
    vals = merged.values()
    order = np.argsort(vals)
    vals = vals[order]
    cdf = np.clip(np.cumsum(merged.probabilities[order]), 0.0, 1.0)
    r = (nu + 1) // 2
    # P(median <= v) = P(at least r of nu draws are <= v)
    med_cdf = binom.sf(r - 1, nu, cdf)
    med_cdf[-1] = 1.0
    probs = np.diff(np.concatenate([[0.0], med_cdf]))
    keep = probs > 0
    return OutcomeDistribution([float(v) for v in vals[keep]], probs[keep] / probs[keep].sum())


def median_boost(run: Callable[[], float], nu: int) -> float:
    """Lower median of nu independent calls of ``run``."""
    if nu < 1:
        raise ValueError("nu must be >= 1")
    s = sorted(run() for _ in range(nu))
    return s[(nu + 1) // 2 - 1]


def boosted_failure(p_fail: float, nu: int) -> float:
    """P(lower median of nu runs fails) when each run fails w.p. p_fail.

    Counts the event that at least half of the runs fail, which covers a
    failing lower median on either side.
    """
    from scipy.stats import binom

    return float(binom.sf(math.ceil(nu / 2) - 1, nu, p_fail))


# -- level estimators -------------------------------------------------------


def plane_budgets(n_level: int, r_planes: int | None = None) -> list[int]:
    """Query budget of bit plane j = 1, 2, ...: floor(n_level * 2^(-(j-1)/2)).

    Planes whose budget drops below one query are skipped; the geometric
    decay keeps the total under 3.42 * n_level.
    """
    r = MAX_PLANES if r_planes is None else min(r_planes, MAX_PLANES)
    out = []
    for j in range(1, r + 1):
        b = int(math.floor(n_level * 2.0 ** (-(j - 1) / 2) + 1e-9))
        if b < 1:
            break
        out.append(b)
    return out


def plane_indicator(level: int, sign: int, plane: int, r_planes: int) -> Callable[[float], int]:
    """beta for bit ``plane`` of the r-bit truncation of g = (-1)^s 2^-l f."""

    def beta(z: float) -> int:
        if not level_window(np.array([z]), level, sign)[0]:
            return 0
        g = (-z if sign else z) * 2.0**-level
        q = min(int(math.floor(g * 2.0**r_planes)), (1 << r_planes) - 1)
        return (q >> (r_planes - plane)) & 1

    return beta


@dataclass(frozen=True)
class LevelPlan:
    level: int
    sign: int
    n_level: int
    budgets: tuple

    @property
    def r_planes(self) -> int:
        return len(self.budgets)

    def configs(self, m_prime: int) -> list[CountingConfig]:
        return [CountingConfig(m_prime, phase_qubits(b)) for b in self.budgets]

    def resources(self, m_prime: int) -> Resources:
        total = Resources()
        for cfg in self.configs(m_prime):
            total = total + cfg.resources()
        return total


def _plane_laws(f: SequenceInstance, plan: LevelPlan, m_prime: int) -> list[tuple[float, OutcomeDistribution]]:
    laws = []
    for j, cfg in enumerate(plan.configs(m_prime), start=1):
        beta = plane_indicator(plan.level, plan.sign, j, plan.r_planes)
        law = amplitude_estimation(f, beta, cfg.t, m_prime)
        weight = 2.0**-j * (1 << m_prime) / f.N
        laws.append((weight, law))
    return laws


def level_estimator(
    f,
    level: int,
    sign: int,
    n_level: int,
    r_planes: int | None = None,
    mode: str = "exact",
    seed: int = 0,
    trials: int = 1,
) -> Estimate:
    """One run of the estimator of S_N^{l,s} f (the unsigned window mean of g)."""
    f = as_sequence(f)
    m_prime = index_qubits(f.N)
    plan = LevelPlan(level, sign, n_level, tuple(plane_budgets(n_level, r_planes)))
    laws = _plane_laws(f, plan, m_prime)
    res = plan.resources(m_prime)
    if mode == "exact":
        law = OutcomeDistribution.point_mass(0.0)
        for weight, plane_law in laws:
            law = convolve(law, plane_law, weight)
        return Estimate(res, distribution=law, info={"plan": plan})
    rng = np.random.default_rng(seed)
    return Estimate(res, samples=_sample_runs(laws, rng, (trials,)), info={"plan": plan})


def _sample_runs(laws, rng: np.random.Generator, shape) -> np.ndarray:
    total = np.zeros(shape)
    for weight, law in laws:
        vals = law.values()
        if len(vals) == 1:
            total += weight * vals[0]
            continue
        p = law.probabilities / law.probabilities.sum()
        total += weight * vals[rng.choice(len(vals), size=shape, p=p)]
    return total


# -- the truncated-mean estimator ---------------------------------------------------------


@dataclass(frozen=True)
class LevelSchedule:
    k: int
    n: int
    p: float
    n_levels: tuple
    nus: tuple

    @classmethod
    def build(cls, k: int, n: int, p: float) -> LevelSchedule:
        expo = 0.5 - p / 4.0
        n_levels = tuple(math.ceil(2.0 ** (-expo * (k - l)) * n - 1e-9) for l in range(k + 1))
        nus = tuple(math.ceil(2 * math.log2(k - l + 1) - 1e-12) + 4 for l in range(k + 1))
        return cls(k, n, p, n_levels, nus)

    def query_bound(self) -> int:
        """2 * sum_l nu_l * n_l (the nominal budget, one counting run per level)."""
        return 2 * sum(nu * nl for nu, nl in zip(self.nus, self.n_levels))


def guarantee_threshold(k: int, p: float) -> float:
    return 2.0 ** ((1 - p / 2) * k)


def combine_levels(level_values: dict, k: int) -> float:
    """sum over l <= k, s in {0,1} of (-1)^s 2^l * value[(l, s)]."""
    return math.fsum((-1) ** s * 2.0**l * level_values[(l, s)] for l in range(k + 1) for s in (0, 1))


def truncated_mean_algorithm(
    f,
    k: int,
    n: int,
    p: float,
    mode: str = "sampled",
    seed: int = 0,
    trials: int = 1,
    r_planes: int | None = None,
) -> Estimate:
    """Estimate S_{N,2^k} f with a budget parameter n.

    Below n = 2^((1 - p/2) k) the zero estimate is returned (error <= 1 on
    the ball). Reported queries equal sum over (l, s) of nu_l times the
    queries of one level run.
    """
    f = as_sequence(f)
    if k < 0:
        raise ValueError("k must be >= 0")
    if n < guarantee_threshold(k, p):
        return Estimate.constant(0.0, Resources(), mode, trials, {"path": "zero"})
    sched = LevelSchedule.build(k, n, p)
    m_prime = index_qubits(f.N)
    total_res = Resources()
    info = {"path": "counting", "schedule": sched}
    if mode == "exact":
        law = OutcomeDistribution.point_mass(0.0)
    else:
        rng = np.random.default_rng(seed)
        acc = np.zeros(trials)
    for l in range(k + 1):
        nu = sched.nus[l]
        for s in (0, 1):
            plan = LevelPlan(l, s, sched.n_levels[l], tuple(plane_budgets(sched.n_levels[l], r_planes)))
            total_res = total_res + plan.resources(m_prime).times(nu)
            coeff = (-1) ** s * 2.0**l
            laws = _plane_laws(f, plan, m_prime)
            if mode == "exact":
                run = OutcomeDistribution.point_mass(0.0)
                for weight, plane_law in laws:
                    run = convolve(run, plane_law, weight)
                law = convolve(law, median_law(run, nu), coeff)
            else:
                runs = _sample_runs(laws, rng, (trials, nu))
                runs.sort(axis=1)
                acc += coeff * runs[:, (nu + 1) // 2 - 1]
    if mode == "exact":
        return Estimate(total_res, distribution=law, info=info)
    return Estimate(total_res, samples=acc, info=info)
