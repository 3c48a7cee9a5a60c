"""Dense state-vector simulation.

Basis index convention: qubit 0 is the most significant bit, so a basis
state |i>|x>|y> of the (index, value, ancilla) registers has composite index
``(i * 2**m_dprime + x) * 2**m_anc + y``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np

from .config import get_settings

@dataclass(frozen=True)
class RegisterLayout:
    m: int
    m_prime: int
    m_dprime: int

    def __post_init__(self):
        if self.m_prime < 1 or self.m_dprime < 1:
            raise ValueError("index and value registers need at least one qubit")
        if self.m_prime + self.m_dprime > self.m:
            raise ValueError(f"m'={self.m_prime} + m''={self.m_dprime} exceeds m={self.m}")

    @classmethod
    def minimal(cls, m_prime: int, m_dprime: int, m_anc: int = 0) -> RegisterLayout:
        return cls(m_prime + m_dprime + m_anc, m_prime, m_dprime)

    @property
    def m_anc(self) -> int:
        return self.m - self.m_prime - self.m_dprime

    @property
    def dim(self) -> int:
        return 1 << self.m

    @property
    def index_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.m_prime))

    @property
    def value_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.m_prime, self.m_prime + self.m_dprime))

    @property
    def ancilla_qubits(self) -> tuple[int, ...]:
        return tuple(range(self.m_prime + self.m_dprime, self.m))

    def compose(self, i1: int, i2: int, i3: int = 0) -> int:
        if not 0 <= i1 < 1 << self.m_prime:
            raise ValueError(f"index register value {i1} out of range")
        if not 0 <= i2 < 1 << self.m_dprime:
            raise ValueError(f"value register value {i2} out of range")
        if not 0 <= i3 < 1 << self.m_anc:
            raise ValueError(f"ancilla register value {i3} out of range")
        return (((i1 << self.m_dprime) + i2) << self.m_anc) + i3

    def decompose(self, index):
        """Split composite basis indices (int or array) into (i1, i2, i3)."""
        i3 = index & ((1 << self.m_anc) - 1)
        rest = index >> self.m_anc
        i2 = rest & ((1 << self.m_dprime) - 1)
        i1 = rest >> self.m_dprime
        return i1, i2, i3

    def basis_fields(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.decompose(np.arange(self.dim, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class StateVector:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.layout.dim,):
            raise ValueError(f"expected {self.layout.dim} amplitudes, got {amps.shape}")
        object.__setattr__(self, "amplitudes", amps)
        settings = get_settings()
        if settings.check_norm:
            norm2 = float(np.vdot(amps, amps).real)
            if abs(norm2 - 1.0) > settings.norm_tol:
                raise ValueError(f"state not normalised: |psi|^2 = {norm2!r}")

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def allclose(self, other: StateVector, atol: float = 1e-12) -> bool:
        return self.layout == other.layout and np.allclose(self.amplitudes, other.amplitudes, atol=atol)


def _check_qubit_cap(layout: RegisterLayout) -> None:
    cap = get_settings().qubit_cap
    if layout.m > cap:
        raise MemoryError(f"{layout.m} qubits exceed the exact-simulation cap of {cap}")


def make_basis_state(layout: RegisterLayout, i1: int, i2: int, i3: int = 0) -> StateVector:
    return basis_state(layout, layout.compose(i1, i2, i3))


def basis_state(layout: RegisterLayout, index: int) -> StateVector:
    if not 0 <= index < layout.dim:
        raise ValueError(f"basis index {index} out of range for {layout.m} qubits")
    _check_qubit_cap(layout)
    amps = np.zeros(layout.dim, dtype=np.complex128)
    amps[index] = 1.0
    return StateVector(layout, amps)


def _hadamard_inplace(amps: np.ndarray, m: int, qubits: Iterable[int]) -> None:
    for q in qubits:
        view = amps.reshape(1 << q, 2, 1 << (m - q - 1))
        a = view[:, 0, :].copy()
        b = view[:, 1, :]
        view[:, 0, :] = (a + b) / np.sqrt(2.0)
        view[:, 1, :] = (a - b) / np.sqrt(2.0)


def apply_hadamards(state: StateVector, qubits: Iterable[int]) -> StateVector:
    amps = state.amplitudes.copy()
    _hadamard_inplace(amps, state.layout.m, qubits)
    return StateVector(state.layout, amps)


def apply_walsh_hadamard_index_register(state: StateVector) -> StateVector:
    """H on every index-register qubit, identity on value and ancilla."""
    return apply_hadamards(state, state.layout.index_qubits)


def apply_permutation(state: StateVector, perm, check: bool = True) -> StateVector:
    """Move the amplitude of basis state x to basis state perm(x).

    ``perm`` is an integer array of length 2**m or a vectorised callable.
    """
    dim = state.layout.dim
    perm = _as_index_map(perm, dim)
    if check:
        validate_permutation(perm, dim)
    out = np.empty_like(state.amplitudes)
    out[perm] = state.amplitudes
    return StateVector(state.layout, out)


def validate_permutation(perm: np.ndarray, dim: int) -> None:
    if perm.shape != (dim,):
        raise ValueError(f"permutation must have length {dim}")
    if perm.min(initial=0) < 0 or perm.max(initial=0) >= dim:
        raise ValueError("permutation maps outside the basis")
    if not np.all(np.bincount(perm, minlength=dim) == 1):
        raise ValueError("map is not a bijection on basis indices")


def _as_index_map(perm, dim: int) -> np.ndarray:
    if callable(perm):
        perm = perm(np.arange(dim, dtype=np.int64))
    return np.asarray(perm, dtype=np.int64)


def apply_phase_flip(state: StateVector, predicate) -> StateVector:
    """Multiply amplitude x by predicate(x) in {+1, -1}."""
    signs = phase_signs(predicate, state.layout.dim)
    return StateVector(state.layout, state.amplitudes * signs)


def phase_signs(predicate, dim: int) -> np.ndarray:
    if callable(predicate):
        predicate = predicate(np.arange(dim, dtype=np.int64))
    signs = np.broadcast_to(np.asarray(predicate, dtype=np.float64), (dim,))
    if not np.all(np.abs(signs) == 1.0):
        raise ValueError("phase flip predicate must return +1 or -1")
    return signs


def apply_subregister_unitary(state: StateVector, qubits: Sequence[int], matrix: np.ndarray) -> StateVector:
    """Apply a 2**k x 2**k matrix to the listed qubits (first listed = MSB)."""
    k = len(qubits)
    m = state.layout.m
    tensor = state.amplitudes.reshape((2,) * m)
    tensor = np.moveaxis(tensor, list(qubits), list(range(k)))
    shape = tensor.shape
    flat = matrix @ tensor.reshape(1 << k, -1)
    tensor = np.moveaxis(flat.reshape(shape), list(range(k)), list(qubits))
    return StateVector(state.layout, tensor.reshape(-1))


@dataclass
class OutcomeDistribution:
    """Finite-support probability measure over hashable outcomes."""

    outcomes: list
    probabilities: np.ndarray
    mode: str = "exact"
    trials: int | None = None

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        if len(self.outcomes) != len(self.probabilities):
            raise ValueError("outcomes and probabilities differ in length")
        if np.any(self.probabilities < 0):
            raise ValueError("negative probability")
        if self.mode == "exact" and len(self.outcomes):
            total = self.probabilities.sum()
            if abs(total - 1.0) > get_settings().dist_tol:
                raise ValueError(f"exact distribution sums to {total!r}")

    @classmethod
    def from_mapping(cls, table: dict, mode: str = "exact", trials: int | None = None) -> OutcomeDistribution:
        items = list(table.items())
        return cls([k for k, _ in items], np.array([v for _, v in items], dtype=np.float64), mode, trials)

    @classmethod
    def point_mass(cls, outcome: Hashable) -> OutcomeDistribution:
        return cls([outcome], np.array([1.0]))

    @classmethod
    def from_samples(cls, samples: Iterable[Hashable]) -> OutcomeDistribution:
        counts: dict = {}
        n = 0
        for s in samples:
            counts[s] = counts.get(s, 0) + 1
            n += 1
        if n == 0:
            raise ValueError("no samples")
        return cls.from_mapping({k: v / n for k, v in counts.items()}, mode="sampled", trials=n)

    def __len__(self) -> int:
        return len(self.outcomes)

    def items(self):
        return zip(self.outcomes, self.probabilities)

    def as_dict(self) -> dict:
        table: dict = {}
        for o, p in self.items():
            table[o] = table.get(o, 0.0) + float(p)
        return table

    def total(self) -> float:
        return float(self.probabilities.sum())

    def probability(self, outcome: Hashable) -> float:
        return float(sum(p for o, p in self.items() if o == outcome))

    def probability_of(self, event: Callable[[Any], bool]) -> float:
        return float(sum(p for o, p in self.items() if event(o)))

    def map(self, fn: Callable[[Any], Hashable]) -> OutcomeDistribution:
        """Push forward through fn, merging equal images."""
        table: dict = {}
        for o, p in self.items():
            key = fn(o)
            table[key] = table.get(key, 0.0) + float(p)
        return OutcomeDistribution.from_mapping(table, self.mode, self.trials)

    def values(self) -> np.ndarray:
        return np.array([float(o) for o in self.outcomes])

    def expectation(self) -> float:
        return float(np.dot(self.values(), self.probabilities))

    def tv_distance(self, other: OutcomeDistribution) -> float:
        a, b = self.as_dict(), other.as_dict()
        return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        p = self.probabilities / self.probabilities.sum()
        idx = rng.choice(len(self.outcomes), size=size, p=p)
        if size is None:
            return self.outcomes[int(idx)]
        return [self.outcomes[i] for i in idx]


def measure_distribution(state: StateVector) -> OutcomeDistribution:
    probs = state.probabilities()
    keep = np.flatnonzero(probs > get_settings().zero_tol)
    p = probs[keep]
    return OutcomeDistribution([int(i) for i in keep], p)


def sample_outcome(state: StateVector, rng_seed: int) -> int:
    rng = np.random.default_rng(rng_seed)
    probs = state.probabilities()
    return int(rng.choice(state.layout.dim, p=probs / probs.sum()))
