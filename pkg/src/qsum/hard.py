"""Adversarial instances: disjoint spikes whose count differs by one.

For u in {0,1}^N with |u| in {l, l+1}, f_u places a spike of height
(l+1)^(-1/p) N^(1/p) at each set coordinate. Every f_u lies in the unit L_p
ball, f_u(t) depends on u_t alone, and the means of the two weight classes
differ by (l+1)^(-1/p) N^(1/p-1), so no algorithm that cannot tell |u| = l
from |u| = l+1 can have error below half of that.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .sequences import SequenceInstance


class RegimeError(ValueError):
    """Parameters outside the range where the family gives a valid bound."""


def rho(L: int, ell: int, ell_prime: int) -> float:
    """sqrt(L/|l-l'|) + min_{j in {l,l'}} sqrt(j(L-j)) / |l-l'|."""
    if ell == ell_prime:
        raise ValueError("rho needs l != l'")
    if not (0 <= ell <= L and 0 <= ell_prime <= L):
        raise ValueError("rho needs 0 <= l, l' <= L")
    d = abs(ell - ell_prime)
    inner = min(math.sqrt(j * (L - j)) for j in (ell, ell_prime))
    return math.sqrt(L / d) + inner / d


def choose_hard_params(n: int, N: int, c0: float = 1.0) -> tuple[int, int]:
    """l = ceil(2 n^2 / (c0^2 N)) and l' = l + 1, with the regime checks."""
    c1 = c0 / math.sqrt(12)
    if n < c0 * math.sqrt(N):
        raise RegimeError(f"n={n} < c0*sqrt(N)={c0 * math.sqrt(N):.6g}")
    if n > c1 * N:
        raise RegimeError(f"n={n} > c0/sqrt(12)*N={c1 * N:.6g}")
    ell = math.ceil(2 * n * n / (c0 * c0 * N) - 1e-12)
    if n > c0 * math.sqrt(ell * N / 2) * (1 + 1e-12):
        raise RegimeError(f"n={n} > c0*sqrt(l*N/2) with l={ell}")
    if ell + 1 > N / 2:
        raise RegimeError(f"l+1={ell + 1} > N/2={N / 2:g}")
    return ell, ell + 1


@dataclass(frozen=True)
class HardFamily:
    N: int
    p: float
    ell: int
    n: int | None = None
    c0: float = 1.0

    @classmethod
    def for_budget(cls, n: int, N: int, p: float, c0: float = 1.0) -> HardFamily:
        ell, _ = choose_hard_params(n, N, c0)
        return cls(N, p, ell, n, c0)

    @property
    def ell_prime(self) -> int:
        return self.ell + 1

    @property
    def spike_height(self) -> float:
        return (self.ell + 1) ** (-1.0 / self.p) * self.N ** (1.0 / self.p)

    @property
    def gap(self) -> float:
        return (self.ell + 1) ** (-1.0 / self.p) * self.N ** (1.0 / self.p - 1.0)

    def psi(self, j: int) -> SequenceInstance:
        values = np.zeros(self.N)
        values[j] = self.spike_height
        return SequenceInstance(values, f"psi-{j}")

    def make(self, u) -> SequenceInstance:
        return make_f_u(self, u)

    def random_u(self, weight: int, rng: np.random.Generator) -> np.ndarray:
        u = np.zeros(self.N, dtype=np.int8)
        u[rng.choice(self.N, size=weight, replace=False)] = 1
        return u

    def sample(self, count: int, seed: int = 0) -> list[SequenceInstance]:
        """``count`` members alternating between weights l and l+1."""
        rng = np.random.default_rng(seed)
        out = []
        for c in range(count):
            w = self.ell if c % 2 == 0 else self.ell + 1
            out.append(self.make(self.random_u(w, rng)))
        return out

    def d11_chain(self) -> tuple[float, float, float, float]:
        """(n, c0 sqrt(l N / 2), c0 min_j sqrt(j(N-j)), c0 rho(N, l, l+1))."""
        ell, N, c0 = self.ell, self.N, self.c0
        n = float("nan") if self.n is None else float(self.n)
        return (
            n,
            c0 * math.sqrt(ell * N / 2),
            c0 * min(math.sqrt(j * (N - j)) for j in (ell, ell + 1)),
            c0 * rho(N, ell, ell + 1),
        )

    def d11_holds(self, tol: float = 1e-12) -> bool:
        chain = [v for v in self.d11_chain() if not math.isnan(v)]
        return all(a <= b * (1 + tol) for a, b in zip(chain, chain[1:]))

    def manifest(self) -> dict:
        return {
            "N": self.N,
            "p": self.p,
            "ell": self.ell,
            "ell_prime": self.ell_prime,
            "spike_height": self.spike_height,
            "gap": self.gap,
            "c0": self.c0,
            "n": self.n,
        }


def make_f_u(family: HardFamily, u) -> SequenceInstance:
    u = np.asarray(u).reshape(-1)
    if u.size != family.N or not np.isin(u, (0, 1)).all():
        raise ValueError(f"u must be a 0/1 vector of length {family.N}")
    weight = int(u.sum())
    label = f"hard-w{weight}" if weight in (family.ell, family.ell + 1) else f"hard-w{weight}-outside"
    return SequenceInstance(u * family.spike_height, label)


def lower_bound_value(n: int, N: int, p: float, c0: float = 1.0) -> float:
    """Half the mean gap of the family chosen for budget n."""
    return 0.5 * HardFamily.for_budget(n, N, p, c0).gap


@dataclass
class ConditionIResult:
    ok: bool
    coordinate: dict = field(default_factory=dict)
    witness: tuple | None = None
    pairs_checked: int = 0

    def __bool__(self) -> bool:
        return self.ok


def condition_I_check(
    builder: Callable[[np.ndarray], SequenceInstance],
    N: int,
    sample_size: int = 10_000,
    seed: int = 0,
    exhaustive_limit: int = 16,
) -> ConditionIResult:
    """Check that every f_u(t) is a function of a single coordinate u_j(t).

    j(t) is found by single-bit flips from random base points, then every
    (exhaustive for N <= exhaustive_limit, else ``sample_size`` random) pair
    u, u' with u_j(t) = u'_j(t) is checked for f_u(t) = f_u'(t). A witness
    (t, u, u') is returned on failure.
    """
    rng = np.random.default_rng(seed)

    def values(u):
        return np.asarray(builder(np.asarray(u, dtype=np.int8)).values)

    coord: dict[int, int] = {}
    probes = [np.zeros(N, dtype=np.int8), np.ones(N, dtype=np.int8)]
    probes += [rng.integers(0, 2, N).astype(np.int8) for _ in range(2)]
    for base in probes:
        fb = values(base)
        for j in range(N):
            flipped = base.copy()
            flipped[j] ^= 1
            changed = np.flatnonzero(values(flipped) != fb)
            for t in changed:
                t = int(t)
                if coord.setdefault(t, j) != j:
                    # base and flipped agree at coord[t] but f(t) differs
                    return ConditionIResult(False, coord, (t, base, flipped))
    for t in range(N):
        coord.setdefault(t, t)  # f(t) never changed: any coordinate works

    if N <= exhaustive_limit:
        us = (np.array(bits, dtype=np.int8) for bits in itertools.product((0, 1), repeat=N))
    else:
        us = (rng.integers(0, 2, N).astype(np.int8) for _ in range(sample_size))
    # f_u(t) must equal the value it takes at any reference point agreeing at j(t)
    ref = {b: values(np.full(N, b, dtype=np.int8)) for b in (0, 1)}
    checked = 0
    for u in us:
        fu = values(u)
        for t in range(N):
            b = int(u[coord[t]])
            if fu[t] != ref[b][t]:
                return ConditionIResult(False, coord, (t, u, np.full(N, b, dtype=np.int8)), checked)
        checked += 1
    return ConditionIResult(True, coord, None, checked)


def export_family(family: HardFamily, directory, count: int = 8, seed: int = 0, fmt: str = "json") -> Path:
    """Write ``count`` members plus manifest.json; returns the manifest path."""
    if fmt not in ("json", "bin"):
        raise ValueError("fmt must be 'json' or 'bin'")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for c, inst in enumerate(family.sample(count, seed)):
        name = f"instance_{c:03d}.{fmt}"
        inst.save(directory / name)
        files.append({"file": name, "weight": int(np.count_nonzero(inst.values))})
    manifest = dict(family.manifest(), instances=files, seed=seed)
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
