"""Deterministic mini-batch training, gate logging, prediction and embedding."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import TASKS, Instance, LabelSpaces, SplitSet
from .encoder import (
    CLS,
    UNK,
    Batch,
    Dims,
    EncoderParams,
    Tokenizer,
    backward,
    backward_pool,
    backward_pooled,
    build_sequence,
    forward_batch,
    forward_pooled,
    make_batch,
    make_external_batch,
    pool,
)
from .errors import DataError, DivergedLoss
from .losses import ClassWeights, gate_modulate, multitask_objective, one_hot, raw_task_loss
from .metrics import evaluate_tasks
from .optimizer import OptimState, adamw_step, current_lrs

DIVERGENCE_LIMIT = 1e6
LOG_CHUNK = 2048


# --------------------------------------------------------------------------
# parameters


def to_storage_precision(params: EncoderParams) -> EncoderParams:
    """Round every tensor onto the float32 grid (values stay float64)."""
    for n, t in params.items():
        params[n] = t.astype(np.float32).astype(np.float64)
    return params


def init_params(seed: int, dims: Dims, gate_bias: float = 0.0) -> EncoderParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.

    fan_in is the width of the vector each tensor multiplies: d for the
    embedding rows, the trunk and the heads; d_g for the gates. ``gate_bias``
    sets the starting gate logit (0 gives g = 0.5).
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    t = {}
    for name, shape in dims.shapes().items():
        if name in ("b",) or name.startswith(("gate_b.", "head_c.")):
            t[name] = np.zeros(shape)
            continue
        fan_in = dims.d_g if name.startswith("gate_w.") else dims.d
        bound = 1.0 / math.sqrt(fan_in)
        t[name] = rng.uniform(-bound, bound, size=shape)
    for a in TASKS:
        t[f"gate_b.{a}"] = np.asarray(float(gate_bias))
    return to_storage_precision(EncoderParams(t))


# --------------------------------------------------------------------------
# data preparation


@dataclass
class Prepared:
    """A split turned into a batch plus one-hot targets and class indices."""

    batch: Batch
    labels: dict
    targets: dict
    skipped: list = field(default_factory=list)  # (id, reason)

    def __len__(self):
        return len(self.batch)

    def subset(self, idx) -> "Prepared":
        idx = np.asarray(idx, dtype=np.int64)
        return Prepared(self.batch.subset(idx),
                        {a: v[idx] for a, v in self.labels.items()},
                        {a: v[idx] for a, v in self.targets.items()})


def prepare(instances: list[Instance], spaces: LabelSpaces, tokenizer: Tokenizer | None,
            max_len: int, external: dict | None = None, skip_errors: bool = False,
            span_context: bool = True) -> Prepared:
    kept, seqs, skipped = [], [], []
    for inst in instances:
        if external is not None:
            if inst.id not in external:
                if not skip_errors:
                    raise DataError(f"no external embedding for {inst.id!r}")
                skipped.append((inst.id, "missing external embedding"))
                continue
            kept.append(inst)
            continue
        try:
            seqs.append(build_sequence(inst, tokenizer, max_len))
            kept.append(inst)
        except DataError as exc:
            if not skip_errors:
                raise
            skipped.append((inst.id, f"{type(exc).__name__}: {exc}"))
    if external is not None:
        d = len(next(iter(external.values()))) // 2
        batch = make_external_batch([i.id for i in kept], external, d)
    else:
        batch = make_batch(seqs, len(tokenizer), span_context)
    enc = spaces.encode(kept)
    n_cls = spaces.n_classes
    labels = {a: np.asarray(enc[a], dtype=np.int64) for a in TASKS}
    targets = {a: one_hot(labels[a], n_cls[a]) for a in TASKS}
    return Prepared(batch, labels, targets, skipped)


def class_counts(spaces: LabelSpaces) -> dict:
    return {a: np.asarray(spaces.counts(a), dtype=np.float64) for a in TASKS}


# --------------------------------------------------------------------------
# logs


@dataclass
class GateLog:
    """Rows of (epoch, id, task, g, raw_loss, pred, gold)."""

    rows: list = field(default_factory=list)

    def add_epoch(self, epoch: int, ids, gates: dict, raw: dict, preds: dict, golds: dict):
        for i, iid in enumerate(ids):
            for a in TASKS:
                self.rows.append((epoch, iid, a, float(gates[a][i]), float(raw[a][i]),
                                  int(preds[a][i]), int(golds[a][i])))

    def last_epoch(self) -> int | None:
        return max((r[0] for r in self.rows), default=None)

    def epoch_rows(self, epoch: int | None = None, task: str | None = None) -> list:
        epoch = self.last_epoch() if epoch is None else epoch
        return [r for r in self.rows if r[0] == epoch and (task is None or r[2] == task)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "id", "task", "g", "raw_loss", "pred", "gold"])
        for e, iid, a, g, L, p, y in self.rows:
            w.writerow([e, iid, a, repr(g), repr(L), p, y])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "GateLog":
        rd = csv.DictReader(io.StringIO(text))
        return cls([(int(r["epoch"]), r["id"], r["task"], float(r["g"]), float(r["raw_loss"]),
                     int(r["pred"]), int(r["gold"])) for r in rd])


STEP_FIELDS = ["step", "epoch", *(f"loss_{a}" for a in TASKS), "total",
               "lr_backbone", "lr_gate", *(f"lr_{a}_head" for a in TASKS)]
EPOCH_FIELDS = ["epoch", "task", "accuracy", "macro_f1", "weighted_f1"]


def rows_to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else ("" if x is None else x) for x in r])
    return buf.getvalue()


# --------------------------------------------------------------------------
# model bundle


@dataclass
class Model:
    params: EncoderParams
    spaces: LabelSpaces
    tokenizer: Tokenizer
    config: RunConfig
    external: bool = False

    def save(self, path):
        save_checkpoint(path, self.params, self.spaces, self.tokenizer, self.config.to_flat(),
                        self.config.fingerprint(), {"external": self.external})

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "Model":
        return cls(ck.params, ck.spaces, ck.tokenizer, RunConfig.from_flat(ck.config), ck.external)

    @classmethod
    def load(cls, path) -> "Model":
        return cls.from_checkpoint(load_checkpoint(path))


@dataclass
class TrainResult:
    model: Model
    best_model: Model | None
    best_epoch: int | None
    gate_log: GateLog
    step_rows: list
    epoch_rows: list
    epoch_train_loss: list

    def step_csv(self) -> str:
        return rows_to_csv(STEP_FIELDS, self.step_rows)

    def epoch_csv(self) -> str:
        return rows_to_csv(EPOCH_FIELDS, self.epoch_rows)


# --------------------------------------------------------------------------
# training


def total_steps_for(n: int, cfg: RunConfig) -> int:
    return cfg.epochs * math.ceil(n / cfg.batch_size)


def gated_step(params, state, data: Prepared, weights: ClassWeights, cfg: RunConfig, lrs: dict,
               gated: bool, frozen=()):
    trace = forward_batch(params, data.batch)
    res = multitask_objective(trace.logits, trace.gates if gated else None, data.targets,
                              weights, cfg.loss)
    if not np.isfinite(res.total) or res.total > DIVERGENCE_LIMIT:
        raise DivergedLoss(f"total loss {res.total}")
    grads = backward(params, trace, res.dlogits, res.dgates)
    adamw_step(params, grads, state, lrs, cfg.optim, frozen)
    to_storage_precision(params)
    return res


def inference_pass(params: EncoderParams, data: Prepared, weights: ClassWeights, cfg: RunConfig):
    """Gates, raw losses and argmax predictions without touching parameters."""
    gates = {a: [] for a in TASKS}
    raw = {a: [] for a in TASKS}
    preds = {a: [] for a in TASKS}
    for s in range(0, len(data), LOG_CHUNK):
        part = data.subset(np.arange(s, min(s + LOG_CHUNK, len(data))))
        tr = forward_batch(params, part.batch)
        for a in TASKS:
            gates[a].append(tr.gates[a])
            preds[a].append(tr.logits[a].argmax(axis=1))
            raw[a].append(raw_task_loss(a, tr.logits[a], part.targets[a], weights, cfg.loss)[0])
    cat = lambda d: {a: np.concatenate(v) if v else np.zeros(0) for a, v in d.items()}
    return cat(gates), cat(raw), cat(preds)


def _evaluate(params, data: Prepared, weights, cfg: RunConfig, spaces: LabelSpaces):
    _, _, preds = inference_pass(params, data, weights, cfg)
    return evaluate_tasks(data.labels, preds, spaces.n_classes, cfg.macro_include_empty)


@dataclass
class _Ctx:
    """Shared setup for the trainer and the baselines."""

    cfg: RunConfig
    spaces: LabelSpaces
    tokenizer: Tokenizer
    train: Prepared
    valid: Prepared | None
    weights: ClassWeights
    dims: Dims
    external: bool
    frozen: tuple


def make_context(splits: SplitSet, spaces: LabelSpaces, cfg: RunConfig,
                 tokenizer: Tokenizer | None = None, external: dict | None = None) -> _Ctx:
    if not splits.train:
        from .errors import EmptyTraining
        raise EmptyTraining("training split is empty")
    if external is not None:
        tokenizer = Tokenizer([CLS, UNK])
        d = len(next(iter(external.values()))) // 2
    else:
        tokenizer = tokenizer or Tokenizer.build(splits.train, cfg.min_token_count)
        d = cfg.d
    train = prepare(splits.train, spaces, tokenizer, cfg.max_len, external,
                    span_context=cfg.span_context)
    valid = (prepare(splits.valid, spaces, tokenizer, cfg.max_len, external, skip_errors=True,
                     span_context=cfg.span_context)
             if splits.valid else None)
    dims = Dims(len(tokenizer), d, cfg.d_g, spaces.n_classes)
    return _Ctx(cfg, spaces, tokenizer, train, valid, ClassWeights.from_counts(class_counts(spaces), cfg.loss),
                dims, external is not None, ("E",) if external is not None else ())


class _Recorder:
    """End-of-epoch bookkeeping shared by every training loop."""

    def __init__(self, ctx: _Ctx):
        self.ctx = ctx
        self.gate_log = GateLog()
        self.step_rows = []
        self.epoch_rows = []
        self.epoch_train_loss = []
        self.best = None
        self.best_epoch = None
        self.best_score = -1.0
        self._epoch_sum = 0.0
        self._epoch_n = 0

    def step(self, step: int, epoch: int, res, lrs: dict):
        self.step_rows.append([step, epoch, *(res.modulated[a] for a in TASKS), res.total,
                               lrs["backbone"], lrs["gate"], *(lrs[f"{a}_head"] for a in TASKS)])
        self._epoch_sum += res.total
        self._epoch_n += 1

    def end_epoch(self, epoch: int, params: EncoderParams):
        ctx = self.ctx
        self.epoch_train_loss.append(self._epoch_sum / max(self._epoch_n, 1))
        self._epoch_sum, self._epoch_n = 0.0, 0
        if ctx.cfg.gate_log:
            g, raw, preds = inference_pass(params, ctx.train, ctx.weights, ctx.cfg)
            self.gate_log.add_epoch(epoch, ctx.train.batch.ids, g, raw, preds, ctx.train.labels)
        if ctx.valid is not None and len(ctx.valid):
            res = _evaluate(params, ctx.valid, ctx.weights, ctx.cfg, ctx.spaces)
            for a in TASKS:
                s = res[a]
                self.epoch_rows.append([epoch, a, *(None if s is None else s[m]
                                                    for m in ("accuracy", "macro_f1", "weighted_f1"))])
            score = res["tag"]["macro_f1"] if res["tag"] is not None else -1.0
            if score > self.best_score:
                self.best_score = score
                self.best = params.copy()
                self.best_epoch = epoch

    def result(self, params: EncoderParams) -> TrainResult:
        ctx = self.ctx
        mk = lambda p: Model(p, ctx.spaces, ctx.tokenizer, ctx.cfg, ctx.external)
        return TrainResult(mk(params), mk(self.best) if self.best is not None else None,
                           self.best_epoch, self.gate_log, self.step_rows, self.epoch_rows,
                           self.epoch_train_loss)


def shuffle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 1]))


def train(splits: SplitSet, spaces: LabelSpaces, cfg: RunConfig, tokenizer: Tokenizer | None = None,
          external: dict | None = None, checkpoint_dir=None) -> TrainResult:
    """Train the gated model (or its gate-free control when ``cfg.gated`` is false).

    Validation data only feeds the per-epoch metrics and best-epoch selection.
    """
    ctx = make_context(splits, spaces, cfg, tokenizer, external)
    params = init_params(cfg.seed, ctx.dims, cfg.gate_bias_init)
    state = OptimState.zeros(params)
    rec = _Recorder(ctx)
    rng = shuffle_rng(cfg.seed)
    n = len(ctx.train)
    total = total_steps_for(n, cfg)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for s in range(0, n, cfg.batch_size):
            lrs = current_lrs(cfg.optim, step, total)
            res = gated_step(params, state, ctx.train.subset(perm[s:s + cfg.batch_size]), ctx.weights,
                             cfg, lrs, cfg.gated, ctx.frozen)
            step += 1
            rec.step(step, epoch, res, lrs)
        rec.end_epoch(epoch, params)
        if checkpoint_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            Model(params, spaces, ctx.tokenizer, cfg, ctx.external).save(
                f"{checkpoint_dir}/epoch{epoch:03d}.ckpt")
    return rec.result(params)


# --------------------------------------------------------------------------
# inference


@dataclass
class Predictions:
    ids: list
    preds: dict          # task -> (N,) class indices
    gates: dict          # task -> (N,)
    golds: dict          # task -> (N,) class indices of the given labels
    skipped: list

    def to_csv(self, spaces: LabelSpaces) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "task", "pred", "pred_label", "g"])
        for i, iid in enumerate(self.ids):
            for a in TASKS:
                p = int(self.preds[a][i])
                w.writerow([iid, a, p, spaces.class_names(a)[p], repr(float(self.gates[a][i]))])
        return buf.getvalue()


def predict(model: Model, instances: list[Instance], external: dict | None = None) -> Predictions:
    """Argmax per head (ties -> lowest class index); unmappable instances are skipped and reported."""
    data = prepare(instances, model.spaces, model.tokenizer, model.config.max_len, external,
                   skip_errors=True, span_context=model.config.span_context)
    weights = ClassWeights.from_counts(class_counts(model.spaces), model.config.loss)
    gates, _, preds = inference_pass(model.params, data, weights, model.config)
    return Predictions(list(data.batch.ids), preds, gates, data.labels, data.skipped)


def embed(model: Model, instances: list[Instance], which: str = "cls", external: dict | None = None):
    """Pooled vectors (h_cls or h_span) for instances that map cleanly; returns (ids, matrix)."""
    data = prepare(instances, model.spaces, model.tokenizer, model.config.max_len, external,
                   skip_errors=True, span_context=model.config.span_context)
    h_cls, h_span = pool(model.params, data.batch)
    return list(data.batch.ids), (h_cls if which == "cls" else h_span)


# --------------------------------------------------------------------------
# gate-only fitting against frozen losses


def fit_gates(params: EncoderParams, h_cls: np.ndarray, raw_losses: dict, lambdas: dict,
              steps: int = 3000, lr: float = 0.05) -> dict:
    """Minimize mean_i[(1 - g_ai) L_ai + lambda_a g_ai^2] over gate tensors only.

    Raw losses are held fixed; the trunk and heads are not updated. Returns
    the final gate values per task.
    """
    from .optimizer import OptimConfig
    ocfg = OptimConfig(base_lrs={"backbone": lr, "tag_head": lr, "scale_head": lr,
                                 "sign_head": lr, "time_head": lr},
                       weight_decay=0.0, eta_min=0.0)
    frozen = tuple(n for n in params.tensors if not n.startswith("gate_"))
    state = OptimState.zeros(params)
    dummy = np.zeros((h_cls.shape[0], params["E"].shape[1]))
    lrs = ocfg.group_lrs()
    for _ in range(steps):
        tr = forward_pooled(params, h_cls, dummy)
        B = h_cls.shape[0]
        dgates = {}
        for a, L in raw_losses.items():
            _, _, dg = gate_modulate(L, tr.gates[a], lambdas[a])
            dgates[a] = dg / B
        grads, _, _ = backward_pooled(params, tr, {}, dgates)
        adamw_step(params, grads, state, lrs, ocfg, frozen)
    tr = forward_pooled(params, h_cls, dummy)
    return {a: tr.gates[a] for a in raw_losses}

