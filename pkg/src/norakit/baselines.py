"""Co-teaching and representation-level Mixup, trained with gates disabled.

Both reuse the trainer's data preparation, recorder and evaluation path, so
their logs and metrics line up with the gated model's column for column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .dataset import TASKS, LabelSpaces, SplitSet
from .encoder import Tokenizer, backward_pool, backward_pooled, forward_batch, forward_pooled, pool
from .errors import DivergedLoss
from .losses import multitask_objective, raw_task_loss
from .optimizer import OptimState, adamw_step, current_lrs
from .trainer import (
    DIVERGENCE_LIMIT,
    Model,
    Prepared,
    TrainResult,
    _Recorder,
    gated_step,
    init_params,
    make_context,
    shuffle_rng,
    to_storage_precision,
    total_steps_for,
)


# --------------------------------------------------------------------------
# co-teaching


@dataclass(frozen=True)
class CoTeachingConfig:
    forget_rate: float = 0.2
    ramp_epochs: int = 5
    seed1: int | None = None   # None -> run seed
    seed2: int | None = None   # None -> run seed + 1

    def __post_init__(self):
        if not 0.0 <= self.forget_rate < 1.0:
            raise ValueError("forget_rate must lie in [0, 1)")
        if self.ramp_epochs < 1:
            raise ValueError("ramp_epochs must be >= 1")

    def seeds(self, run_seed: int) -> tuple[int, int]:
        s1 = run_seed if self.seed1 is None else self.seed1
        s2 = run_seed + 1 if self.seed2 is None else self.seed2
        return s1, s2


def keep_rate(t: int, forget_rate: float, ramp_epochs: int) -> float:
    """R(t) = 1 - min(t / T_k, 1) * rho_f, with t counted in epochs from 0."""
    return 1.0 - min(t / ramp_epochs, 1.0) * forget_rate


def keep_count(rate: float, batch: int) -> int:
    return max(1, math.floor(rate * batch + 1e-9))


def small_loss_indices(params, data: Prepared, ctx, n_keep: int) -> np.ndarray:
    """Positions of the n_keep smallest gate-free totals sum_a w_a L_a, in batch order."""
    tr = forward_batch(params, data.batch)
    total = np.zeros(len(data))
    for a in TASKS:
        L, _ = raw_task_loss(a, tr.logits[a], data.targets[a], ctx.weights, ctx.cfg.loss)
        total += ctx.cfg.loss.task_weights[a] * L
    order = np.argsort(total, kind="stable")
    return np.sort(order[:n_keep])


@dataclass
class CoTeachingResult:
    net1: TrainResult
    net2: Model
    kept_per_epoch: list   # (epoch, rate, kept instances summed over batches)


def train_coteaching(splits: SplitSet, spaces: LabelSpaces, cfg: RunConfig,
                     ct: CoTeachingConfig = CoTeachingConfig(), tokenizer: Tokenizer | None = None,
                     external: dict | None = None) -> CoTeachingResult:
    """Two gate-free networks, each updated on the instances its peer finds easiest.

    Evaluation, logs and best-epoch selection follow network 1. With
    forget_rate 0 network 1 reproduces ``train`` with ``gated=False``.
    """
    cfg = cfg.replace(gated=False)
    ctx = make_context(splits, spaces, cfg, tokenizer, external)
    s1, s2 = ct.seeds(cfg.seed)
    p1 = init_params(s1, ctx.dims, cfg.gate_bias_init)
    p2 = init_params(s2, ctx.dims, cfg.gate_bias_init)
    st1, st2 = OptimState.zeros(p1), OptimState.zeros(p2)
    rec = _Recorder(ctx)
    rng = shuffle_rng(cfg.seed)
    n = len(ctx.train)
    total = total_steps_for(n, cfg)
    step = 0
    kept_log = []
    for epoch in range(1, cfg.epochs + 1):
        rate = keep_rate(epoch - 1, ct.forget_rate, ct.ramp_epochs)
        kept_total = 0
        perm = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            part = ctx.train.subset(perm[s:s + cfg.batch_size])
            lrs = current_lrs(cfg.optim, step, total)
            k = keep_count(rate, len(part))
            if k >= len(part):
                keep1 = keep2 = np.arange(len(part))
            else:
                keep1 = small_loss_indices(p1, part, ctx, k)
                keep2 = small_loss_indices(p2, part, ctx, k)
            res = gated_step(p1, st1, part.subset(keep2), ctx.weights, cfg, lrs, False, ctx.frozen)
            gated_step(p2, st2, part.subset(keep1), ctx.weights, cfg, lrs, False, ctx.frozen)
            kept_total += len(keep2)
            step += 1
            rec.step(step, epoch, res, lrs)
        rec.end_epoch(epoch, p1)
        kept_log.append((epoch, rate, kept_total))
    net2 = Model(p2, ctx.spaces, ctx.tokenizer, cfg, ctx.external)
    return CoTeachingResult(rec.result(p1), net2, kept_log)


# --------------------------------------------------------------------------
# mixup


@dataclass(frozen=True)
class MixupConfig:
    beta_param: float = 0.2

    def __post_init__(self):
        if not self.beta_param > 0:
            raise ValueError("beta_param must be > 0")


def mixup_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 2]))


def mixup_step(params, state, data: Prepared, ctx, lrs: dict, lam: float, perm) -> object:
    """One update on pooled vectors mixed as lam * x + (1 - lam) * x[perm].

    Targets mix the same way; gates are off. ``lam = 1`` or ``perm`` equal to
    the identity reproduces the unmixed step exactly.
    """
    cfg = ctx.cfg
    perm = np.asarray(perm, dtype=np.int64)
    lam = float(lam)
    h_cls, h_span = pool(params, data.batch)
    mc = lam * h_cls + (1.0 - lam) * h_cls[perm]
    ms = lam * h_span + (1.0 - lam) * h_span[perm]
    targets = {a: lam * t + (1.0 - lam) * t[perm] for a, t in data.targets.items()}
    trace = forward_pooled(params, mc, ms)
    res = multitask_objective(trace.logits, None, targets, ctx.weights, cfg.loss)
    if not np.isfinite(res.total) or res.total > DIVERGENCE_LIMIT:
        raise DivergedLoss(f"total loss {res.total}")
    grads, d_mc, d_ms = backward_pooled(params, trace, res.dlogits, {})
    d_cls = lam * d_mc
    d_span = lam * d_ms
    np.add.at(d_cls, perm, (1.0 - lam) * d_mc)
    np.add.at(d_span, perm, (1.0 - lam) * d_ms)
    backward_pool(grads, data.batch, d_cls, d_span)
    adamw_step(params, grads, state, lrs, cfg.optim, ctx.frozen)
    to_storage_precision(params)
    return res


def train_mixup(splits: SplitSet, spaces: LabelSpaces, cfg: RunConfig,
                mx: MixupConfig = MixupConfig(), tokenizer: Tokenizer | None = None,
                external: dict | None = None) -> TrainResult:
    if cfg.batch_size < 2:
        raise ValueError("mixup needs batch_size >= 2")
    cfg = cfg.replace(gated=False)
    ctx = make_context(splits, spaces, cfg, tokenizer, external)
    params = init_params(cfg.seed, ctx.dims, cfg.gate_bias_init)
    state = OptimState.zeros(params)
    rec = _Recorder(ctx)
    rng = shuffle_rng(cfg.seed)
    mix = mixup_rng(cfg.seed)
    n = len(ctx.train)
    total = total_steps_for(n, cfg)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            part = ctx.train.subset(perm[s:s + cfg.batch_size])
            lam = mix.beta(mx.beta_param, mx.beta_param)
            pair = mix.permutation(len(part))
            lrs = current_lrs(cfg.optim, step, total)
            res = mixup_step(params, state, part, ctx, lrs, lam, pair)
            step += 1
            rec.step(step, epoch, res, lrs)
        rec.end_epoch(epoch, params)
    return rec.result(params)
