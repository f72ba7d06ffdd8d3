"""Curriculum trade-off schedule and the hybrid three-environment risk."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .environments import EnvironmentKind
from .risk import RiskValue


@dataclass(frozen=True)
class LambdaSchedule:
    """Piecewise schedule: flat at ``lambda_max`` up to T, linear decay over (T, 2T], then ``lambda_min``.

    ``lambda_min`` is always ``1 - lambda_max``.
    """

    T: int = 3000
    lambda_max: float = 0.9
    lambda_min: float = field(init=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be a positive integer, got {self.T}")
        if not 0.5 <= self.lambda_max <= 1.0:
            raise ValueError(f"lambda_max must lie in [0.5, 1] so that lambda_min <= lambda_max, got {self.lambda_max}")
        object.__setattr__(self, "lambda_min", 1.0 - self.lambda_max)


def decay(schedule: LambdaSchedule, t: int) -> float:
    """H(t) = (2T - t) / T * (lambda_max - lambda_min)."""
    T = schedule.T
    return (2 * T - t) / T * (schedule.lambda_max - schedule.lambda_min)


def lambda_at(schedule: LambdaSchedule, t: int) -> float:
    # H(T+) = lambda_max - lambda_min, so the value jumps down right after T; kept as written.
    if t < 0:
        raise ValueError(f"iteration must be non-negative, got {t}")
    if t <= schedule.T:
        return schedule.lambda_max
    if t <= 2 * schedule.T:
        return max(decay(schedule, t), schedule.lambda_min)
    return schedule.lambda_min


class AblationMode(enum.Enum):
    FULL = "full"
    NO_CURRICULUM = "no_curriculum"
    NO_NORM_SCHEDULE = "no_norm_schedule"
    NO_OVER_SCHEDULE = "no_over_schedule"

    @classmethod
    def parse(cls, text: str) -> "AblationMode":
        try:
            return cls(text.strip().lower().replace("-", "_"))
        except ValueError:
            raise ValueError(f"unknown ablation mode {text!r}; expected one of {[m.value for m in cls]}") from None


def coefficients(lam: float, mode: AblationMode) -> dict[EnvironmentKind, float]:
    """Mixing coefficients of the normal, over-balanced and balanced risks."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    norm = 1.0 if mode in (AblationMode.NO_CURRICULUM, AblationMode.NO_NORM_SCHEDULE) else lam
    over = 1.0 if mode in (AblationMode.NO_CURRICULUM, AblationMode.NO_OVER_SCHEDULE) else 1.0 - lam
    return {EnvironmentKind.NORMAL: norm, EnvironmentKind.OVER_BALANCED: over, EnvironmentKind.BALANCED: 1.0}


@dataclass
class HybridRisk:
    """Combined value plus each environment's coefficient-scaled logit gradient.

    Environments are evaluated on separate batches, so the gradients stay
    keyed by environment instead of being summed into one matrix.
    """

    value: float
    coefficients: dict[EnvironmentKind, float]
    dlogits: dict[EnvironmentKind, np.ndarray]


def hybrid_risk(lam: float, r_norm: RiskValue | None, r_over: RiskValue | None,
                r_balanced: RiskValue | None, mode: AblationMode = AblationMode.FULL) -> HybridRisk:
    """``a * R_norm + b * R_over + R_balanced`` with (a, b) set by ``mode``.

    Pass ``None`` for an environment that is not trained; its term is dropped.
    The schedule trades the normal risk off against the over-balanced one, so
    when either is missing the survivor gets a unit coefficient.
    """
    coef = coefficients(lam, mode)
    if r_norm is None or r_over is None:
        coef = coefficients(lam, AblationMode.NO_CURRICULUM)
    parts = {EnvironmentKind.NORMAL: r_norm, EnvironmentKind.OVER_BALANCED: r_over,
             EnvironmentKind.BALANCED: r_balanced}
    value = 0.0
    used: dict[EnvironmentKind, float] = {}
    grads: dict[EnvironmentKind, np.ndarray] = {}
    for env in (EnvironmentKind.NORMAL, EnvironmentKind.OVER_BALANCED, EnvironmentKind.BALANCED):
        r = parts[env]
        if r is None:
            continue
        used[env] = coef[env]
        value += coef[env] * r.value
        grads[env] = coef[env] * r.dlogits
    if not used:
        raise ValueError("hybrid_risk needs at least one environment risk")
    return HybridRisk(value=value, coefficients=used, dlogits=grads)
