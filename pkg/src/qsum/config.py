"""Numerical tolerances and simulation limits shared by every module."""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Settings:
    norm_tol: float = 1e-10
    dist_tol: float = 1e-9
    # exact multi-stage enumeration drops branches below this probability
    prune_tol: float = 1e-15
    # measured basis states with |amplitude|^2 at or below this are omitted
    zero_tol: float = 1e-24
    ball_slack: float = 1e-12
    qubit_cap: int = 24
    enumeration_budget: int = 10**7
    support_budget: int = 10**6
    max_atoms: int = 4096
    check_norm: bool = True
    debug: bool = False


DEFAULT = Settings()

_current = DEFAULT


def get_settings() -> Settings:
    return _current


def set_settings(settings: Settings | None = None, **changes) -> Settings:
    """Install new global settings; returns the previous ones."""
    global _current
    previous = _current
    base = settings if settings is not None else _current
    _current = replace(base, **changes) if changes else base
    return previous


class BudgetExceeded(RuntimeError):
    """Exact enumeration would exceed the configured budget; sample instead."""
