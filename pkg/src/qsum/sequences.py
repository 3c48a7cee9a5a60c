"""Finite sequences, normalised L_p norms and the mean functionals."""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .config import get_settings


class SequenceInstance:
    """A real sequence f(0), ..., f(N-1); immutable once built."""

    __slots__ = ("_values", "_norms", "label")

    def __init__(self, values, label: str = ""):
        arr = np.array(values, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ValueError("a sequence needs at least one entry")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sequence values must be finite")
        arr.setflags(write=False)
        self._values = arr
        self._norms: dict[float, float] = {}
        self.label = label

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def N(self) -> int:
        return int(self._values.size)

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, i):
        return self._values[i]

    def __neg__(self) -> SequenceInstance:
        return SequenceInstance(-self._values, self.label and f"-{self.label}")

    def __repr__(self) -> str:
        tag = f" {self.label!r}" if self.label else ""
        return f"SequenceInstance(N={self.N}{tag})"

    def norm(self, p: float) -> float:
        if p not in self._norms:
            self._norms[p] = _lp_norm(self._values, p)
        return self._norms[p]

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"N": self.N, "values": [float(v) for v in self._values]})

    @classmethod
    def from_json(cls, text: str) -> SequenceInstance:
        obj = json.loads(text)
        values = obj["values"]
        if int(obj["N"]) != len(values):
            raise ValueError(f"header N={obj['N']} but {len(values)} values")
        return cls(values)

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.N) + self._values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> SequenceInstance:
        if len(data) < 8:
            raise ValueError("missing length header")
        (n,) = struct.unpack("<Q", data[:8])
        body = data[8:]
        if len(body) != 8 * n:
            raise ValueError(f"header says {n} values, payload holds {len(body) / 8:g}")
        return cls(np.frombuffer(body, dtype="<f8"))

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json())
        else:
            path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> SequenceInstance:
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_json(path.read_text())
        return cls.from_bytes(path.read_bytes())


def _lp_norm(values: np.ndarray, p: float) -> float:
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max())
    peak = a.max()
    if peak == 0.0:
        return 0.0
    # scale by the peak to avoid overflow of |f|^p
    return float(peak * (np.mean((a / peak) ** p)) ** (1.0 / p))


def as_sequence(f) -> SequenceInstance:
    return f if isinstance(f, SequenceInstance) else SequenceInstance(f)


def lp_norm(f, p: float) -> float:
    return as_sequence(f).norm(p)


def in_ball(f, p: float) -> bool:
    return lp_norm(f, p) <= 1.0 + get_settings().ball_slack


def mean(f) -> float:
    f = as_sequence(f)
    return math.fsum(f.values) / f.N


def truncated_mean(f, M: float) -> float:
    """(1/N) * sum of f(i) over entries with |f(i)| < M."""
    if M <= 0:
        raise ValueError("threshold M must be positive")
    f = as_sequence(f)
    v = f.values
    return math.fsum(v[np.abs(v) < M]) / f.N


def tail_mean(f, M: float) -> float:
    """(1/N) * sum of f(i) over entries with |f(i)| >= M (ties go to the tail)."""
    if M <= 0:
        raise ValueError("threshold M must be positive")
    f = as_sequence(f)
    v = f.values
    return math.fsum(v[np.abs(v) >= M]) / f.N


def level_window(values: np.ndarray, level: int, sign: int) -> np.ndarray:
    """Mask of entries with 2^(l-1) <= (-1)^sign f < 2^l, or [0, 1) at level 0."""
    if level < 0 or sign not in (0, 1):
        raise ValueError("level must be >= 0 and sign in {0, 1}")
    s = -values if sign else values
    if level == 0:
        return (s >= 0.0) & (s < 1.0)
    return (s >= 2.0 ** (level - 1)) & (s < 2.0**level)


def level_mean(f, level: int, sign: int) -> float:
    f = as_sequence(f)
    v = f.values
    total = math.fsum(v[level_window(v, level, sign)])
    return (-1) ** sign * 2.0**-level * total / f.N


def heavy_count(f, M: float) -> int:
    return int(np.count_nonzero(np.abs(as_sequence(f).values) >= M))


def random_ball_instance(
    N: int,
    p: float,
    profile: str = "uniform",
    seed: int = 0,
    count: int = 1,
    level: float | None = None,
    radius: float | None = None,
) -> SequenceInstance:
    """Random member of the unit L_p^N ball.

    ``uniform`` draws i.i.d. values and rescales to a random radius in (0.5, 1].
    ``spiky`` places ``count`` entries of magnitude ``level`` (random signs and
    positions) and fills the rest with small values that keep the norm <= 1.
    """
    rng = np.random.default_rng(seed)
    if N < 1:
        raise ValueError("N must be positive")
    if profile == "uniform":
        values = rng.uniform(-1.0, 1.0, N)
        r = rng.uniform(0.5, 1.0) if radius is None else radius
        nrm = _lp_norm(values, p)
        if nrm > 0:
            values *= r / nrm
        return SequenceInstance(values, f"uniform-{seed}")
    if profile == "spiky":
        if level is None:
            level = (N / (2 * count)) ** (1.0 / p)
        if count < 0 or count > N or level < 0:
            raise ValueError("infeasible spike profile")
        mass = count * level**p
        if mass > N * (1 + get_settings().ball_slack):
            raise ValueError(f"{count} spikes of height {level} leave the unit ball")
        values = np.zeros(N)
        if count < N:
            spare = max(N - mass, 0.0) / (N - count)
            fill = 0.5 * spare ** (1.0 / p)
            values[:] = rng.uniform(-fill, fill, N)
        where = rng.choice(N, size=count, replace=False)
        values[where] = level * rng.choice([-1.0, 1.0], size=count)
        return SequenceInstance(values, f"spiky-{count}-{seed}")
    raise ValueError(f"unknown profile {profile!r}")


def single_spike(N: int, p: float, position: int = 0, height: float | None = None) -> SequenceInstance:
    values = np.zeros(N)
    values[position] = N ** (1.0 / p) if height is None else height
    return SequenceInstance(values, "single-spike")
