"""Task losses, the gate-modulated loss and the weighted multi-task total.

Every loss is written in soft-target form over a batch (targets are rows of a
(B, C) matrix); hard labels are one-hot rows. Each function returns the
per-instance losses together with their gradients w.r.t. the logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax

from .dataset import SIGN_LABELS, TASKS
from .errors import NonFiniteLogit

PAPER_LAMBDAS = {"tag": 1.0, "time": 10.0, "scale": 10.0, "sign": 10.0}
PAPER_TASK_WEIGHTS = {"tag": 10.0, "time": 0.3, "scale": 0.2, "sign": 10.0}
NEGATIVE = SIGN_LABELS.index("negative")


@dataclass
class LossConfig:
    beta: float = 0.99
    alpha: float = 0.25
    gamma: float = 3.0
    lambdas: dict = field(default_factory=lambda: dict(PAPER_LAMBDAS))
    task_weights: dict = field(default_factory=lambda: dict(PAPER_TASK_WEIGHTS))
    focal_alpha_on: str = "minority"

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if any(self.lambdas[a] <= 0 for a in TASKS):
            raise ValueError("every lambda must be > 0")
        if any(self.task_weights[a] < 0 for a in TASKS):
            raise ValueError("task weights must be >= 0")
        if self.focal_alpha_on not in ("minority", "majority"):
            raise ValueError("focal_alpha_on must be 'minority' or 'majority'")


def _check_logits(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise NonFiniteLogit("non-finite logit")
    return logits


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


# --------------------------------------------------------------------------
# batched soft-target losses


def weighted_soft_ce(logits, targets, class_weights):
    """L_i = -sum_c t_ic w_c log p_ic. Returns (L (B,), dL_i/dz_i (B, C))."""
    z = _check_logits(logits)
    logp = log_softmax(z, axis=-1)
    tw = targets * class_weights
    loss = -(tw * logp).sum(axis=-1)
    p = np.exp(logp)
    grad = p * tw.sum(axis=-1, keepdims=True) - tw
    return loss, grad


def soft_focal(logits, targets, alpha_per_class, gamma: float):
    """L_i = sum_c t_ic * (-alpha_c (1 - p_ic)^gamma log p_ic)."""
    z = _check_logits(logits)
    logp = log_softmax(z, axis=-1)
    p = np.exp(logp)
    q = -np.expm1(logp)  # 1 - p without cancellation
    a = np.asarray(alpha_per_class, dtype=np.float64)
    loss = -(targets * a * q ** gamma * logp).sum(axis=-1)
    # p * f'(p) where f(p) = -a (1-p)^g log p
    with np.errstate(divide="ignore", invalid="ignore"):
        focus = np.where(q > 0, gamma * q ** (gamma - 1.0) * p * logp, 0.0) if gamma != 0 else 0.0
    pf = a * (focus - q ** gamma)
    tpf = targets * pf
    grad = tpf - p * tpf.sum(axis=-1, keepdims=True)
    return loss, grad


# --------------------------------------------------------------------------
# single-instance API


def softmax_cross_entropy(logits, label: int):
    z = _check_logits(logits)
    if z.shape[-1] < 2 or not 0 <= label < z.shape[-1]:
        raise ValueError("need C >= 2 and 0 <= label < C")
    loss, grad = weighted_soft_ce(z[None], one_hot([label], z.shape[-1]), 1.0)
    return float(loss[0]), grad[0]


def cb_weight(n, beta: float):
    """Inverse effective sample size (1 - beta) / (1 - beta^n)."""
    n = np.asarray(n, dtype=np.float64)
    w = (1.0 - beta) / (1.0 - beta ** n)
    return float(w) if w.ndim == 0 else w


def cb_class_weights(counts, beta: float) -> np.ndarray:
    return np.asarray(cb_weight(np.maximum(np.asarray(counts, dtype=np.float64), 1.0), beta),
                      dtype=np.float64).reshape(-1)


def cb_cross_entropy_batch(logits, labels, counts, beta: float):
    """Batch mean of cb_weight(n_y) * CE, with B the actual batch size.

    Returns (mean, per_instance, dmean/dlogits).
    """
    z = _check_logits(logits)
    B = z.shape[0]
    if B < 1:
        raise ValueError("empty batch")
    w = cb_class_weights(counts, beta)
    per, grad = weighted_soft_ce(z, one_hot(labels, z.shape[1]), w)
    return float(per.sum() / B), per, grad / B


def inverse_frequency_weights(counts) -> np.ndarray:
    """w_c = N / (C_eff * max(n_c, 1)), C_eff = number of non-empty classes."""
    counts = np.asarray(counts, dtype=np.float64)
    N = counts.sum()
    c_eff = max(int((counts > 0).sum()), 1)
    return N / (c_eff * np.maximum(counts, 1.0))


def weighted_cross_entropy(logits, label: int, class_weights):
    z = _check_logits(logits)
    loss, grad = weighted_soft_ce(z[None], one_hot([label], z.shape[-1]), np.asarray(class_weights))
    return float(loss[0]), grad[0]


def focal_alphas(alpha: float, on: str = "minority") -> np.ndarray:
    a = np.full(len(SIGN_LABELS), 1.0 - alpha)
    a[NEGATIVE] = alpha
    if on == "majority":
        a = 1.0 - a
    return a


def focal_loss(logits, label: int, alpha: float = 0.25, gamma: float = 3.0, alpha_t=None,
               on: str = "minority"):
    """Binary focal loss. ``alpha_t`` (if given) overrides the per-class alpha for every class."""
    z = _check_logits(logits)
    a = np.full(z.shape[-1], alpha_t) if alpha_t is not None else focal_alphas(alpha, on)
    loss, grad = soft_focal(z[None], one_hot([label], z.shape[-1]), a, gamma)
    return float(loss[0]), grad[0]


def gate_modulate(L, g, lam: float):
    """(1 - g) L + lam g^2, with partials w.r.t. L and g."""
    L = np.asarray(L, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    val = (1.0 - g) * L + lam * g * g
    dL = 1.0 - g
    dg = -L + 2.0 * lam * g
    if val.ndim == 0:
        return float(val), float(dL), float(dg)
    return val, dL, dg


def total_loss(modulated: dict, task_weights: dict) -> float:
    s = 0.0
    for a in TASKS:
        s += task_weights[a] * modulated[a]
    return float(s)


# --------------------------------------------------------------------------
# multi-task objective over a batch


@dataclass
class ClassWeights:
    per_task: dict

    @classmethod
    def from_counts(cls, counts: dict, cfg: LossConfig) -> "ClassWeights":
        return cls({
            "tag": cb_class_weights(counts["tag"], cfg.beta),
            "time": inverse_frequency_weights(counts["time"]),
            "scale": inverse_frequency_weights(counts["scale"]),
            "sign": focal_alphas(cfg.alpha, cfg.focal_alpha_on),
        })


def raw_task_loss(task: str, logits, targets, weights: ClassWeights, cfg: LossConfig):
    """Per-instance raw loss L_a and dL_a/dlogits for soft or one-hot targets."""
    if task == "sign":
        return soft_focal(logits, targets, weights.per_task["sign"], cfg.gamma)
    return weighted_soft_ce(logits, targets, weights.per_task[task])


@dataclass
class ObjectiveResult:
    total: float
    modulated: dict      # task -> batch mean of the modulated loss
    raw: dict            # task -> per-instance raw losses (B,)
    dlogits: dict        # task -> dtotal/dlogits (B, C)
    dgates: dict         # task -> dtotal/dg (B,), empty when ungated


def multitask_objective(logits: dict, gates: dict | None, targets: dict, weights: ClassWeights,
                        cfg: LossConfig) -> ObjectiveResult:
    """Sum_a w_a * mean_i[(1 - g_ai) L_ai + lambda_a g_ai^2]; ``gates=None`` means g = 0."""
    modulated, raw, dlogits, dgates = {}, {}, {}, {}
    total = 0.0
    for a in TASKS:
        L, dL = raw_task_loss(a, logits[a], targets[a], weights, cfg)
        B = L.shape[0]
        w = cfg.task_weights[a]
        raw[a] = L
        if gates is None:
            modulated[a] = float(L.sum() / B)
            dlogits[a] = (w / B) * dL
        else:
            Lt, dLt_dL, dLt_dg = gate_modulate(L, gates[a], cfg.lambdas[a])
            modulated[a] = float(Lt.sum() / B)
            dlogits[a] = (w / B) * dLt_dL[:, None] * dL
            dgates[a] = (w / B) * dLt_dg
        total += w * modulated[a]
    return ObjectiveResult(total, modulated, raw, dlogits, dgates)
