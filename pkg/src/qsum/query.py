"""Quantum query model: query unitaries, staged algorithms and their errors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import simcore
from .config import BudgetExceeded, get_settings
from .sequences import SequenceInstance, as_sequence
from .simcore import OutcomeDistribution, RegisterLayout, StateVector


# -- unitary programs --------------------------------------------------------


class Op:
    def apply(self, state: StateVector) -> StateVector:
        raise NotImplementedError


@dataclass(eq=False)
class Hadamards(Op):
    qubits: tuple[int, ...]

    def apply(self, state):
        return simcore.apply_hadamards(state, self.qubits)


@dataclass(eq=False)
class Permutation(Op):
    perm: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.perm = np.asarray(self.perm, dtype=np.int64)
        simcore.validate_permutation(self.perm, self.perm.size)

    def apply(self, state):
        return simcore.apply_permutation(state, self.perm, check=False)


@dataclass(eq=False)
class PhaseFlip(Op):
    signs: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.signs = simcore.phase_signs(self.signs, np.size(self.signs))

    def apply(self, state):
        return StateVector(state.layout, state.amplitudes * self.signs)


@dataclass(eq=False)
class SubregisterUnitary(Op):
    qubits: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        k = len(self.qubits)
        if self.matrix.shape != (1 << k, 1 << k):
            raise ValueError("matrix size does not match qubit count")
        if not np.allclose(self.matrix.conj().T @ self.matrix, np.eye(1 << k), atol=1e-12):
            raise ValueError("matrix is not unitary")

    def apply(self, state):
        return simcore.apply_subregister_unitary(state, self.qubits, self.matrix)


Program = tuple  # sequence of Op applied left to right


def run_program(program: Iterable[Op], state: StateVector) -> StateVector:
    for op in program:
        state = op.apply(state)
    return state


# -- queries -----------------------------------------------------------------


@dataclass(eq=False)
class QueryDescriptor:
    """The tuple (m, m', m'', Z, tau, beta) defining Q_f."""

    m: int
    m_prime: int
    m_dprime: int
    Z: frozenset
    tau: Callable[[int], int]
    beta: Callable[[float], int]

    def __post_init__(self):
        self.Z = frozenset(int(i) for i in self.Z)
        if not self.Z:
            raise ValueError("Z must be nonempty")
        if any(i < 0 or i >= 1 << self.m_prime for i in self.Z):
            raise ValueError("Z must lie inside the index register")
        RegisterLayout(self.m, self.m_prime, self.m_dprime)

    @property
    def layout(self) -> RegisterLayout:
        return RegisterLayout(self.m, self.m_prime, self.m_dprime)

    def codes(self, f: SequenceInstance) -> np.ndarray:
        """beta(f(tau(i))) for every index-register value; 0 outside Z."""
        out = np.zeros(1 << self.m_prime, dtype=np.int64)
        for i in self.Z:
            d = self.tau(i)
            if not 0 <= d < f.N:
                raise ValueError(f"tau({i}) = {d} is outside the domain of f (N={f.N})")
            code = int(self.beta(float(f.values[d])))
            if not 0 <= code < 1 << self.m_dprime:
                raise ValueError(f"beta returned {code}, outside [0, 2^{self.m_dprime})")
            out[i] = code
        return out


def build_query_unitary(Q: QueryDescriptor, f) -> np.ndarray:
    """Permutation |i>|x>|y> -> |i>|x + beta(f(tau(i))) mod 2^m''>|y> (i in Z)."""
    f = as_sequence(f)
    layout = Q.layout
    codes = Q.codes(f)
    i1, i2, i3 = layout.basis_fields()
    shifted = (i2 + codes[i1]) % (1 << Q.m_dprime)
    return (((i1 << Q.m_dprime) + shifted) << layout.m_anc) + i3


# -- algorithms ---------------------------------------------------------------


@dataclass(eq=False)
class UnmeasuredAlgorithm:
    """A_f = U_n Q_f U_{n-1} ... U_1 Q_f U_0."""

    query: QueryDescriptor
    unitaries: list

    def __post_init__(self):
        if len(self.unitaries) < 1:
            raise ValueError("need at least U_0")

    @property
    def n_queries(self) -> int:
        return len(self.unitaries) - 1

    @property
    def m(self) -> int:
        return self.query.m

    @property
    def layout(self) -> RegisterLayout:
        return self.query.layout


def run_unmeasured(A: UnmeasuredAlgorithm, f, start: int, query_perm: np.ndarray | None = None) -> StateVector:
    state = simcore.basis_state(A.layout, start)
    if A.n_queries and query_perm is None:
        query_perm = build_query_unitary(A.query, f)
    for j, program in enumerate(A.unitaries):
        if j:
            state = simcore.apply_permutation(state, query_perm, check=False)
        state = run_program(program, state)
    return state


@dataclass
class Resources:
    queries: int = 0
    qubits: int = 0
    measurements: int = 0
    gates: float = 0.0
    classical_ops: float = 0.0

    def __add__(self, other: Resources) -> Resources:
        return Resources(
            self.queries + other.queries,
            max(self.qubits, other.qubits),
            self.measurements + other.measurements,
            self.gates + other.gates,
            self.classical_ops + other.classical_ops,
        )

    def times(self, k: int) -> Resources:
        return Resources(self.queries * k, self.qubits, self.measurements * k, self.gates * k, self.classical_ops * k)

    def as_dict(self) -> dict:
        return {
            "queries": self.queries,
            "qubits": self.qubits,
            "measurements": self.measurements,
            "gates": self.gates,
            "classical_ops": self.classical_ops,
        }


@dataclass
class Estimate:
    """Output law of a randomized estimator plus the resources it used.

    Exact mode carries ``distribution``; sampled mode carries ``samples``
    (one realised output per independent trial).
    """

    resources: Resources
    distribution: OutcomeDistribution | None = None
    samples: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, value: float, resources: Resources, mode: str = "exact", trials: int = 1, info=None) -> Estimate:
        info = {} if info is None else info
        if mode == "exact":
            return cls(resources, distribution=OutcomeDistribution.point_mass(float(value)), info=info)
        return cls(resources, samples=np.full(trials, float(value)), info=info)

    @property
    def mode(self) -> str:
        return "exact" if self.distribution is not None else "sampled"

    @property
    def value(self) -> float:
        """One realised output (sampled) or the lower median of the law (exact)."""
        if self.samples is not None:
            return float(self.samples[0])
        return distribution_lower_median(self.distribution)

    def law(self) -> OutcomeDistribution:
        if self.distribution is not None:
            return self.distribution
        return OutcomeDistribution.from_samples(float(v) for v in self.samples)

    def error(self, true_value: float, theta: float = 0.25) -> float:
        if self.distribution is not None:
            return error_at_confidence(true_value, self.distribution, theta)
        return error_from_samples(true_value, self.samples, theta)

    def success_probability(self, true_value: float, tol: float) -> float:
        if self.distribution is not None:
            return self.distribution.probability_of(lambda v: abs(v - true_value) <= tol)
        return float(np.mean(np.abs(self.samples - true_value) <= tol))


def distribution_lower_median(dist: OutcomeDistribution) -> float:
    vals = dist.values()
    order = np.argsort(vals, kind="stable")
    cdf = np.cumsum(dist.probabilities[order]) / dist.total()
    return float(vals[order][np.searchsorted(cdf, 0.5 - 1e-12)])


@dataclass(eq=False)
class MeasuredAlgorithm:
    """((A_l), (b_l), phi): k measured stages, classical glue in between.

    Stage 0 starts from basis state ``b0``; ``starts[l - 1]`` maps the tuple
    of outcomes of stages 0..l-1 to the start state of stage l.
    """

    stages: list
    b0: int = 0
    starts: list = field(default_factory=list)
    phi: Callable[[tuple], Any] = tuple
    name: str = ""
    gate_estimate: float | None = None
    classical_ops: float = 0.0

    def __post_init__(self):
        if not self.stages:
            raise ValueError("need at least one stage")
        if not 0 <= self.b0 < 1 << self.stages[0].m:
            raise ValueError("b0 out of range for stage 0")
        if self.starts and len(self.starts) != len(self.stages) - 1:
            raise ValueError("need one start map per later stage")

    @property
    def k(self) -> int:
        return len(self.stages)

    @property
    def n_queries(self) -> int:
        return sum(stage.n_queries for stage in self.stages)

    def start_for(self, stage: int, history: tuple) -> int:
        if stage == 0:
            return self.b0
        start = int(self.starts[stage - 1](history)) if self.starts else 0
        if not 0 <= start < 1 << self.stages[stage].m:
            raise ValueError(f"start state {start} out of range for stage {stage}")
        return start


def resource_report(A: MeasuredAlgorithm) -> Resources:
    gates = A.gate_estimate
    if gates is None:
        gates = float(sum(s.n_queries * s.query.m_dprime for s in A.stages))
    return Resources(A.n_queries, max(s.m for s in A.stages), A.k, gates, A.classical_ops)


class _StageCache:
    """Memoises stage distributions per (stage, start); simulation is deterministic."""

    def __init__(self, A: MeasuredAlgorithm, f: SequenceInstance):
        self.A = A
        self.f = f
        self._dist: dict = {}
        self._perm: dict = {}

    def __call__(self, stage: int, start: int) -> OutcomeDistribution:
        key = (id(self.A.stages[stage]), start)
        if key not in self._dist:
            alg = self.A.stages[stage]
            qkey = id(alg.query)
            if alg.n_queries and qkey not in self._perm:
                self._perm[qkey] = build_query_unitary(alg.query, self.f)
            state = run_unmeasured(alg, self.f, start, self._perm.get(qkey))
            self._dist[key] = simcore.measure_distribution(state)
        return self._dist[key]


def run_measured_exact(A: MeasuredAlgorithm, f) -> OutcomeDistribution:
    """Exact law of phi(x_0..x_{k-1}) under the product measurement rule."""
    f = as_sequence(f)
    settings = get_settings()
    cache = _StageCache(A, f)
    table: dict = {}
    visited = 0

    def descend(stage: int, history: tuple, prob: float):
        nonlocal visited
        dist = cache(stage, A.start_for(stage, history))
        for x, px in dist.items():
            q = prob * px
            if q < settings.prune_tol:
                continue
            visited += 1
            if visited > settings.enumeration_budget:
                raise BudgetExceeded("outcome-tuple enumeration exceeded its budget; use sampling")
            h = history + (x,)
            if stage + 1 == A.k:
                out = A.phi(h)
                table[out] = table.get(out, 0.0) + q
            else:
                descend(stage + 1, h, q)

    descend(0, (), 1.0)
    total = sum(table.values())
    # pruned branches leave a deficit of at most prune_tol per branch
    return OutcomeDistribution.from_mapping({k: v / total for k, v in table.items()})


def run_measured_sampled(A: MeasuredAlgorithm, f, trials: int, rng_seed: int = 0) -> OutcomeDistribution:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    f = as_sequence(f)
    rng = np.random.default_rng(rng_seed)
    cache = _StageCache(A, f)
    outputs = []
    for _ in range(trials):
        history: tuple = ()
        for stage in range(A.k):
            dist = cache(stage, A.start_for(stage, history))
            history += (dist.sample(rng),)
        outputs.append(A.phi(history))
    return OutcomeDistribution.from_samples(outputs)


# -- error functionals ----------------------------------------------------------


def error_at_confidence(true_value: float, dist: OutcomeDistribution, theta: float = 0.25) -> float:
    """inf{eps : P(|true - zeta| > eps) <= theta} for zeta ~ dist."""
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    if len(dist) == 0:
        raise ValueError("empty distribution")
    dev = np.abs(dist.values() - true_value)
    return _error_from_deviations(dev, dist.probabilities / dist.total(), theta)


def error_from_samples(true_value: float, samples: Sequence[float], theta: float = 0.25) -> float:
    dev = np.abs(np.asarray(samples, dtype=np.float64) - true_value)
    if dev.size == 0:
        raise ValueError("empty sample")
    return _error_from_deviations(dev, np.full(dev.size, 1.0 / dev.size), theta)


def _error_from_deviations(dev: np.ndarray, prob: np.ndarray, theta: float) -> float:
    slack = 1e-12
    if prob[dev > 0].sum() <= theta + slack:
        return 0.0
    order = np.argsort(dev, kind="stable")
    dev, prob = dev[order], prob[order]
    above = prob.sum() - np.cumsum(prob)
    for j in range(dev.size):
        if j + 1 < dev.size and dev[j + 1] == dev[j]:
            continue
        if above[j] <= theta + slack:
            return float(dev[j])
    return float(dev[-1])


def worst_case_error(S: Callable, A, instances: Sequence, theta: float = 0.25) -> float:
    """Maximum of error_at_confidence over an explicit instance list.

    ``A`` is a MeasuredAlgorithm (run exactly) or any callable mapping an
    instance to an OutcomeDistribution.
    """
    if not instances:
        raise ValueError("need at least one instance")
    worst = 0.0
    for f in instances:
        dist = run_measured_exact(A, f) if isinstance(A, MeasuredAlgorithm) else A(f)
        worst = max(worst, error_at_confidence(S(f), dist, theta))
    return worst


def lower_median(values: Sequence[float]) -> float:
    s = sorted(values)
    return s[(len(s) + 1) // 2 - 1]


__all__ = [
    "Hadamards",
    "Permutation",
    "PhaseFlip",
    "SubregisterUnitary",
    "QueryDescriptor",
    "UnmeasuredAlgorithm",
    "MeasuredAlgorithm",
    "Resources",
    "Estimate",
    "build_query_unitary",
    "run_unmeasured",
    "run_measured_exact",
    "run_measured_sampled",
    "error_at_confidence",
    "error_from_samples",
    "worst_case_error",
    "resource_report",
]
