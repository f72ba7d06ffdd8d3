"""Environment risks: (weighted) cross-entropy and the IRM gradient-norm penalty.

All risks are means over the batch, and every function returns the exact
gradient with respect to the logits alongside the value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environments import EnvironmentKind, SamplingPlan


@dataclass
class RiskValue:
    value: float
    dlogits: np.ndarray
    # the penalty share already included in ``value`` (for logging)
    risk: float = float("nan")
    penalty: float = 0.0


def _prepare(logits, labels, weights):
    s = np.asarray(logits, dtype=np.float64)
    if s.ndim != 2:
        raise ValueError(f"logits must be 2-D, got shape {s.shape}")
    B, C = s.shape
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (B,):
        raise ValueError(f"labels must have shape ({B},), got {y.shape}")
    if np.any(y < 0) or np.any(y >= C):
        raise ValueError(f"labels must lie in [0, {C})")
    if weights is None:
        wt = np.ones(B)
    else:
        wt = np.asarray(weights, dtype=np.float64)
        if wt.shape != (B,):
            raise ValueError(f"weights must have shape ({B},), got {wt.shape}")
        if not np.all(wt > 0):
            raise ValueError("weights must be strictly positive")
    return s, y, wt


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels, weights=None) -> RiskValue:
    """``sum_b weight_b * -log softmax(logits_b)[label_b] / B``."""
    s, y, wt = _prepare(logits, labels, weights)
    B = s.shape[0]
    rows = np.arange(B)
    z = s - s.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    nll = log_norm - z[rows, y]
    value = float(np.dot(wt, nll) / B)
    p = np.exp(z - log_norm[:, None])
    grad = p
    grad[rows, y] -= 1.0
    grad *= (wt / B)[:, None]
    return RiskValue(value=value, dlogits=grad, risk=value)


def irm_penalty(logits, labels, weights=None) -> tuple[float, np.ndarray]:
    """Squared derivative of the (weighted) cross-entropy of ``w * logits`` at ``w = 1``.

    That derivative is ``D = sum_b weight_b * (E_p[s_b] - s_b[y_b]) / B``.
    """
    s, y, wt = _prepare(logits, labels, weights)
    B = s.shape[0]
    rows = np.arange(B)
    p = softmax(s)
    mean_s = (p * s).sum(axis=1)
    D = float(np.dot(wt, mean_s - s[rows, y]) / B)
    dD = p * (1.0 + s - mean_s[:, None])
    dD[rows, y] -= 1.0
    dD *= (wt / B)[:, None]
    return D * D, 2.0 * D * dD


def instance_weights(env: EnvironmentKind, labels, plan: SamplingPlan) -> np.ndarray | None:
    """Per-instance loss weights: ``1 / n_label`` for over-balanced, none otherwise."""
    if env is not EnvironmentKind.OVER_BALANCED:
        return None
    y = np.asarray(labels, dtype=np.int64)
    try:
        return np.array([plan.class_weights[int(c)] for c in y])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]} has no class weight in the plan") from None


def env_risk(env: EnvironmentKind, logits, labels, plan: SamplingPlan) -> RiskValue:
    return cross_entropy(logits, labels, instance_weights(env, labels, plan))


def regularized_env_risk(env: EnvironmentKind, logits, labels, plan: SamplingPlan,
                         penalty_weight: float = 1.0) -> RiskValue:
    """Environment risk plus ``penalty_weight`` times its IRM penalty."""
    if penalty_weight < 0:
        raise ValueError(f"penalty_weight must be >= 0, got {penalty_weight}")
    weights = instance_weights(env, labels, plan)
    base = cross_entropy(logits, labels, weights)
    pen, dpen = irm_penalty(logits, labels, weights)
    return RiskValue(
        value=base.value + penalty_weight * pen,
        dlogits=base.dlogits + penalty_weight * dpen,
        risk=base.value,
        penalty=pen,
    )
