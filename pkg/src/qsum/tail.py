"""Exact recovery of the tail mean S'_{N,M} f by amplitude amplification.

Entries with |f(i)| >= M ("heavy" entries) are found by Grover search over
the index register; every heavy index found also reveals an encoding of
f(i). Repeating the search L* times and summing the distinct heavy values
gives S'_{N,M} f up to the encoding resolution with probability >= 3/4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

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
    UnmeasuredAlgorithm,
    build_query_unitary,
    run_unmeasured,
)
from .sequences import as_sequence, heavy_count, in_ball, tail_mean
from .simcore import OutcomeDistribution, RegisterLayout, apply_permutation, basis_state, measure_distribution

# success-probability constant of a single search: rho >= C2 * M^p / N
C2 = 2.0 / (9.0 * math.pi**2)
LSTAR_CONSTANT = 3.0 / (C2 * math.log2(math.e))
DEFAULT_RESOLUTION_BITS = 20


def minimal_threshold(p: float) -> int:
    return math.ceil(6.0 ** (2.0 / p) - 1e-12)


def grover_iterations(M: float, p: float) -> int:
    return math.floor(M ** (p / 2.0) / 3.0 + 1e-12)


def repetitions(N: int, M: float, p: float, multiplier: float = 1.0) -> int:
    ratio = N * M ** (-p)
    return max(1, math.ceil(multiplier * LSTAR_CONSTANT * ratio * max(math.log2(ratio), 1.0) - 1e-9))


def index_qubits(N: int) -> int:
    return max(1, math.ceil(math.log2(N))) if N > 1 else 1


@dataclass(frozen=True)
class TailParams:
    N: int
    M: int
    p: float
    m_prime: int
    m_dprime: int
    L: int
    L_star: int
    M_0: int
    regime: str  # "zero" (M^p > N), "classical" (M < M_0) or "quantum"

    @property
    def m(self) -> int:
        return self.m_prime + self.m_dprime

    @property
    def resolution(self) -> float:
        """Decoding step 2^(-m'' + m' + 1)."""
        return 2.0 ** (-self.m_dprime + self.m_prime + 1)

    @property
    def queries_per_run(self) -> int:
        return 2 * self.L + 1

    @property
    def quantum_queries(self) -> int:
        return self.queries_per_run * self.L_star


def choose_tail_params(
    N: int,
    M: int,
    p: float,
    epsilon_enc: float | None = None,
    lstar_multiplier: float = 1.0,
    qubit_cap: int | None = None,
) -> TailParams:
    """Parameters of the tail search for threshold M.

    ``epsilon_enc`` bounds the decoding step; ``None`` picks the finest step
    (at most 2^-20) whose register still fits the exact-simulation cap.
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    if not 1 <= p < 2:
        raise ValueError("p must lie in [1, 2)")
    M = int(M)
    m_prime = index_qubits(N)
    if epsilon_enc is None:
        cap = get_settings().qubit_cap if qubit_cap is None else qubit_cap
        m_dprime = min(m_prime + 1 + DEFAULT_RESOLUTION_BITS, cap - m_prime)
        m_dprime = max(m_dprime, m_prime + 2)
    else:
        if epsilon_enc <= 0:
            raise ValueError("epsilon_enc must be positive")
        m_dprime = max(m_prime + 2, m_prime + 1 + math.ceil(-math.log2(epsilon_enc) - 1e-12))
    M_0 = minimal_threshold(p)
    if M**p > N:
        regime = "zero"
    elif M < M_0:
        regime = "classical"
    else:
        regime = "quantum"
    return TailParams(
        N=N,
        M=M,
        p=p,
        m_prime=m_prime,
        m_dprime=m_dprime,
        L=grover_iterations(M, p),
        L_star=repetitions(N, M, p, lstar_multiplier),
        M_0=M_0,
        regime=regime,
    )


def choose_M(n: int, N: int, p: float, c_cal: float = 1.0) -> int:
    """Smallest integer M >= c (N/n)^(2/p) max(log(n/sqrt N), 1)^(2/p)."""
    if n < 1 or N < 1:
        raise ValueError("n and N must be >= 1")
    if c_cal < 1:
        raise ValueError("c_cal must be >= 1")
    bound = c_cal * (N / n) ** (2.0 / p) * max(math.log2(n / math.sqrt(N)), 1.0) ** (2.0 / p)
    return max(1, math.ceil(bound * (1 - 1e-12)))


# -- encoding -----------------------------------------------------------------


def beta_encode(z: float, M: float, m_prime: int, m_dprime: int) -> int:
    if m_dprime <= m_prime + 1:
        raise ValueError("need m'' > m' + 1")
    if abs(z) < M:
        return 1 << (m_dprime - 1)
    if z >= 2.0**m_prime:
        return (1 << m_dprime) - 1
    if z <= -(2.0**m_prime):
        return 0
    return int(math.floor(2.0 ** (m_dprime - m_prime - 1) * (z + 2.0**m_prime)))


def phi_decode(i: int, x: int, m_prime: int, m_dprime: int) -> tuple[int, float]:
    if not 0 <= x < 1 << m_dprime:
        raise ValueError("encoded value out of range")
    return i, -(2.0**m_prime) + 2.0 ** (-m_dprime + m_prime + 1) * x


def combine_psi(outputs, N: int) -> float:
    """Drop non-heavy pairs (i >= N or y == 0), keep one pair per index, sum / N."""
    seen: dict[int, float] = {}
    for i, y in outputs:
        if i >= N or y == 0:
            continue
        if i not in seen:
            seen[i] = y
        elif get_settings().debug and seen[i] != y:
            raise AssertionError(f"index {i} decoded to {seen[i]} and {y}")
    return math.fsum(seen.values()) / N


# -- the search algorithm ----------------------------------------------------------


def tail_query(params: TailParams) -> QueryDescriptor:
    return QueryDescriptor(
        m=params.m,
        m_prime=params.m_prime,
        m_dprime=params.m_dprime,
        Z=range(params.N),
        tau=lambda i: i,
        beta=lambda z: beta_encode(z, params.M, params.m_prime, params.m_dprime),
    )


class _Operators:
    """W, X, T, J on H_m' (x) H_m''."""

    def __init__(self, params: TailParams):
        layout = RegisterLayout(params.m, params.m_prime, params.m_dprime)
        i1, i2, _ = layout.basis_fields()
        half = 1 << (params.m_dprime - 1)
        self.W = Hadamards(layout.index_qubits)
        self.X = PhaseFlip(np.where(i1 == 0, -1.0, 1.0), "X")
        self.T = PhaseFlip(np.where((i1 < params.N) & (i2 != half), 1.0, -1.0), "T")
        negated = (-i2) % (1 << params.m_dprime)
        self.J = Permutation((i1 << params.m_dprime) + negated, "J")


def build_grover_iterate(params: TailParams) -> list:
    """Programs between the two queries of Y_f = W X W Q_f J T Q_f."""
    ops = _Operators(params)
    return [(ops.T, ops.J), (ops.W, ops.X, ops.W)]


def build_A0(params: TailParams) -> UnmeasuredAlgorithm:
    """Unitary Q_f Y_f^L W as the alternating program U_n Q_f ... Q_f U_0."""
    ops = _Operators(params)
    unitaries = [(ops.W,)]
    for _ in range(params.L):
        unitaries += [(ops.T, ops.J), (ops.W, ops.X, ops.W)]
    unitaries.append(())
    return UnmeasuredAlgorithm(tail_query(params), unitaries)


def _decoder(params: TailParams):
    layout = RegisterLayout(params.m, params.m_prime, params.m_dprime)

    def decode(x: int):
        i, v, _ = layout.decompose(x)
        return phi_decode(int(i), int(v), params.m_prime, params.m_dprime)

    return decode


def a0_algorithm(params: TailParams) -> MeasuredAlgorithm:
    decode = _decoder(params)
    return MeasuredAlgorithm(
        [build_A0(params)],
        b0=0,
        phi=lambda h: decode(h[0]),
        name="tail-search",
        gate_estimate=float(params.queries_per_run * params.m_dprime),
    )


def tail_pipeline(params: TailParams) -> MeasuredAlgorithm:
    """L* independent runs of the search composed by combine_psi."""
    stage = build_A0(params)
    decode = _decoder(params)
    return MeasuredAlgorithm(
        [stage] * params.L_star,
        b0=0,
        starts=[lambda h: 0] * (params.L_star - 1),
        phi=lambda h: combine_psi([decode(x) for x in h], params.N),
        name="tail-mean",
        gate_estimate=float(params.quantum_queries * params.m_dprime),
        classical_ops=float(params.L_star * params.m_dprime),
    )


def run_A0(f, params: TailParams) -> OutcomeDistribution:
    """Exact distribution of the decoded pair (i, y) from one search."""
    f = as_sequence(f)
    alg = build_A0(params)
    state = run_unmeasured(alg, f, 0)
    return measure_distribution(state).map(_decoder(params))


def inner_block_signs(f, params: TailParams) -> np.ndarray:
    """Sign of Q_f J T Q_f on |i>|0> for each index i (debug check)."""
    f = as_sequence(f)
    layout = RegisterLayout(params.m, params.m_prime, params.m_dprime)
    perm = build_query_unitary(tail_query(params), f)
    ops = _Operators(params)
    signs = np.empty(1 << params.m_prime)
    for i in range(1 << params.m_prime):
        state = basis_state(layout, layout.compose(i, 0))
        state = apply_permutation(state, perm, check=False)
        state = ops.J.apply(ops.T.apply(state))
        state = apply_permutation(state, perm, check=False)
        amp = state.amplitudes[layout.compose(i, 0)]
        if abs(abs(amp) - 1) > 1e-12:
            raise AssertionError(f"inner block does not return |{i}>|0> to itself")
        signs[i] = amp.real
    return signs


# -- exact and sampled pipelines -------------------------------------------------------


def _kept_outcomes(a0: OutcomeDistribution, N: int):
    ys, ps, idx = [], [], []
    for (i, y), prob in a0.items():
        if i < N and y != 0:
            if i in idx:
                raise ValueError(f"index {i} decodes to more than one value")
            idx.append(i)
            ys.append(y)
            ps.append(prob)
    return np.array(ys), np.array(ps)


def pipeline_distribution(a0: OutcomeDistribution, N: int, L_star: int, max_kept: int = 20) -> OutcomeDistribution:
    """Exact law of combine_psi over L* i.i.d. runs with per-run law ``a0``.

    The output depends only on the set S of distinct heavy outcomes seen;
    P(seen == S) follows from inclusion-exclusion over subsets of S.
    """
    ys, ps = _kept_outcomes(a0, N)
    K = len(ys)
    if K > max_kept:
        raise BudgetExceeded(f"{K} heavy outcomes; subset enumeration is 2^{K}")
    dropped = max(0.0, 1.0 - ps.sum())
    masks = np.arange(1 << K)
    bits = (masks[:, None] >> np.arange(K)) & 1
    mass = bits @ ps if K else np.zeros(1)
    h = (dropped + mass) ** L_star
    for b in range(K):
        has = (masks >> b) & 1 == 1
        h[has] -= h[masks[has] ^ (1 << b)]
    h = np.clip(h, 0.0, None)
    values = (bits @ ys) / N if K else np.zeros(1)
    table: dict = {}
    for v, prob in zip(values, h):
        if prob > 0:
            table[float(v)] = table.get(float(v), 0.0) + float(prob)
    total = sum(table.values())
    return OutcomeDistribution.from_mapping({k: v / total for k, v in table.items()})


def pipeline_samples(a0: OutcomeDistribution, N: int, L_star: int, rng: np.random.Generator, trials: int) -> np.ndarray:
    ys, ps = _kept_outcomes(a0, N)
    if len(ys) == 0:
        return np.zeros(trials)
    # outcome K stands for every dropped pair
    probs = np.append(ps, max(0.0, 1.0 - ps.sum()))
    draws = rng.choice(len(probs), size=(trials, L_star), p=probs / probs.sum())
    seen = np.zeros((trials, len(probs)), dtype=bool)
    seen[np.arange(trials)[:, None], draws] = True
    return seen[:, :-1].astype(np.float64) @ ys / N


def tail_algorithm(
    f,
    N: int | None = None,
    M: int = 1,
    p: float = 1.0,
    epsilon_enc: float | None = None,
    mode: str = "exact",
    seed: int = 0,
    trials: int = 1,
    budget: int | None = None,
    lstar_multiplier: float = 1.0,
    force_quantum: bool = False,
) -> Estimate:
    """Estimate S'_{N,M} f.

    Paths: ``zero`` when M^p > N (tail vanishes on the ball, no queries);
    ``classical`` when M < M_0 or the search would exceed ``budget``
    (N classical queries, exact); otherwise the quantum search.
    ``force_quantum`` runs the search even below M_0.
    """
    f = as_sequence(f)
    N = f.N if N is None else N
    if N != f.N:
        raise ValueError("N does not match the instance length")
    params = choose_tail_params(N, M, p, epsilon_enc, lstar_multiplier)
    info = {"params": params, "heavy": heavy_count(f, M)}
    path = params.regime
    if force_quantum:
        path = "quantum"
    elif path == "quantum" and budget is not None and params.quantum_queries > budget:
        path = "classical"
    info["path"] = path

    if path == "zero":
        if not in_ball(f, p):
            warnings.warn("instance outside the unit ball; zero tail is not guaranteed", stacklevel=2)
        return Estimate.constant(0.0, Resources(), mode, trials, info)
    if path == "classical":
        res = Resources(queries=N, qubits=0, measurements=0, gates=0.0, classical_ops=float(N))
        return Estimate.constant(tail_mean(f, M), res, mode, trials, info)

    if not in_ball(f, p):
        warnings.warn("instance outside the unit ball; success guarantee void", stacklevel=2)
    if get_settings().debug:
        heavy = np.abs(f.values) >= M
        expected = np.where(np.arange(1 << params.m_prime) < N, 1.0, -1.0)
        expected[:N] = np.where(heavy, 1.0, -1.0)
        if not np.array_equal(inner_block_signs(f, params), expected):
            raise AssertionError("inner block does not mark exactly the heavy set")
    a0 = run_A0(f, params)
    res = Resources(
        queries=params.quantum_queries,
        qubits=params.m,
        measurements=params.L_star,
        gates=float(params.quantum_queries * params.m_dprime),
        classical_ops=float(params.L_star * params.m_dprime),
    )
    info["a0"] = a0
    if mode == "exact":
        return Estimate(res, distribution=pipeline_distribution(a0, N, params.L_star), info=info)
    rng = np.random.default_rng(seed)
    return Estimate(res, samples=pipeline_samples(a0, N, params.L_star, rng, trials), info=info)


def tail_success_probability(est: Estimate, f, M: int) -> float:
    """P(|estimate - S'_{N,M} f| <= resolution * mu_f / N)."""
    f = as_sequence(f)
    params = est.info["params"]
    tol = params.resolution * heavy_count(f, M) / f.N + 1e-12
    return est.success_probability(tail_mean(f, M), tol)
