"""Tokenizer, input-sequence assembly and the reference model.

The backbone is an embedding bag: ``h_cls`` is the mean of every token
embedding in the sequence (the learned [CLS] row included). ``h_span`` is the
mean over the mention's tokens plus ``h_cls``, which stands in for the
context a contextual encoder would mix into each token; ``span_context=False``
drops the ``h_cls`` term. On top sit a shared tanh trunk feeding one
sigmoid noise gate per task, and one linear head per task reading ``h_span``.

All math is batched. A batch stores two row-stochastic sparse matrices
(``pool_cls``, ``pool_span``) of shape (B, V), so pooling is ``pool @ E`` and
its gradient is ``pool.T @ dh``; repeated tokens accumulate naturally.
"""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .dataset import TASKS, Instance
from .errors import ShapeMismatch, SpanTruncated, SpanUnmappable, TraceMismatch

CLS, UNK = "[CLS]", "[UNK]"
SEGMENTS = ("target", "metadata", "prev", "next")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Lowercase whitespace tokenization with edge punctuation split off.

    Returns ``(token, char_start, char_end)`` triples; offsets index ``text``.
    """
    out = []
    n = len(text)
    i = 0
    while i < n:
        if text[i].isspace():
            i += 1
            continue
        j = i
        while j < n and not text[j].isspace():
            j += 1
        lo, hi = i, j
        lead = []
        while lo < hi and _is_punct(text[lo]):
            lead.append((text[lo], lo, lo + 1))
            lo += 1
        trail = []
        while hi > lo and _is_punct(text[hi - 1]):
            trail.append((text[hi - 1], hi - 1, hi))
            hi -= 1
        out.extend(lead)
        if lo < hi:
            out.append((text[lo:hi].lower(), lo, hi))
        out.extend(reversed(trail))
        i = j
    return out


def render_metadata(inst: Instance) -> str:
    d = inst.document
    return (f"company_name: {d.company_name} cik: {d.cik} doc_type: {d.doc_type} "
            f"period_end_date: {d.period_end_date} fiscal_year: {d.fiscal_year}")


def _segment_texts(inst: Instance):
    c = inst.context
    yield "target", c.target_sentence
    yield "metadata", render_metadata(inst)
    if c.prev_sentence:
        yield "prev", c.prev_sentence
    if c.next_sentence:
        yield "next", c.next_sentence


class Tokenizer:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [CLS, UNK]:
            raise ValueError("vocabulary must start with [CLS], [UNK]")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}
        if len(self.stoi) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, train: list[Instance], min_count: int = 1) -> "Tokenizer":
        """Vocabulary of training-split tokens seen at least ``min_count`` times."""
        counts = Counter()
        for inst in train:
            for _, text in _segment_texts(inst):
                counts.update(t for t, _, _ in tokenize(text))
        keep = {t for t, n in counts.items() if n >= min_count} - {CLS, UNK}
        return cls([CLS, UNK, *sorted(keep)])

    def __len__(self):
        return len(self.itos)

    def index(self, token: str) -> int:
        return self.stoi.get(token, 1)


@dataclass(frozen=True)
class SequenceInput:
    token_ids: tuple[int, ...]
    span_range: tuple[int, int]  # inclusive
    segment_map: tuple[str, ...]
    max_len: int
    instance_id: str = ""

    @property
    def span_ids(self) -> tuple[int, ...]:
        a, b = self.span_range
        return self.token_ids[a:b + 1]


def build_sequence(inst: Instance, tokenizer: Tokenizer, max_len: int = 512) -> SequenceInput:
    """[CLS], target, metadata, prev, next; right-truncated to ``max_len``."""
    ids = [0]
    segs = ["cls"]
    span_pos = []
    cs, ce = inst.target_span.char_start, inst.target_span.char_end
    for seg, text in _segment_texts(inst):
        for tok, a, b in tokenize(text):
            if seg == "target" and a < ce and b > cs:
                span_pos.append(len(ids))
            ids.append(tokenizer.index(tok))
            segs.append(seg)
    if not span_pos:
        raise SpanUnmappable(inst.id)
    if span_pos[-1] >= max_len:
        raise SpanTruncated(inst.id, span_pos[-1], max_len)
    if max_len < 8:
        raise ValueError("max_len must be >= 8")
    return SequenceInput(
        token_ids=tuple(ids[:max_len]),
        span_range=(span_pos[0], span_pos[-1]),
        segment_map=tuple(segs[:max_len]),
        max_len=max_len,
        instance_id=inst.id,
    )


# --------------------------------------------------------------------------
# parameters


def param_names(tasks=TASKS) -> list[str]:
    names = ["E", "W", "b"]
    for a in tasks:
        names += [f"gate_w.{a}", f"gate_b.{a}"]
    for a in tasks:
        names += [f"head_U.{a}", f"head_c.{a}"]
    return names


@dataclass(frozen=True)
class Dims:
    vocab: int
    d: int
    d_g: int
    n_classes: dict

    def shapes(self) -> dict:
        s = {"E": (self.vocab, self.d), "W": (self.d_g, self.d), "b": (self.d_g,)}
        for a in TASKS:
            s[f"gate_w.{a}"] = (self.d_g,)
            s[f"gate_b.{a}"] = ()
        for a in TASKS:
            s[f"head_U.{a}"] = (self.n_classes[a], self.d)
            s[f"head_c.{a}"] = (self.n_classes[a],)
        return s


class EncoderParams:
    """Named float64 tensors in a fixed order. Also used as the gradient container."""

    def __init__(self, tensors: dict):
        names = param_names()
        missing = [n for n in names if n not in tensors]
        if missing:
            raise ShapeMismatch(f"missing tensors: {missing}")
        self.tensors = {n: np.asarray(tensors[n], dtype=np.float64) for n in names}
        self._check()

    def _check(self):
        t = self.tensors
        V, d = t["E"].shape
        d_g = t["b"].shape[0]
        if t["W"].shape != (d_g, d):
            raise ShapeMismatch(f"W has shape {t['W'].shape}, expected {(d_g, d)}")
        for a in TASKS:
            if t[f"gate_w.{a}"].shape != (d_g,) or t[f"gate_b.{a}"].shape != ():
                raise ShapeMismatch(f"gate tensors for {a} have wrong shape")
            U, c = t[f"head_U.{a}"], t[f"head_c.{a}"]
            if U.ndim != 2 or U.shape[1] != d or c.shape != (U.shape[0],):
                raise ShapeMismatch(f"head tensors for {a} have wrong shape")

    @classmethod
    def zeros(cls, dims: Dims) -> "EncoderParams":
        return cls({n: np.zeros(s) for n, s in dims.shapes().items()})

    @property
    def dims(self) -> Dims:
        t = self.tensors
        return Dims(t["E"].shape[0], t["E"].shape[1], t["b"].shape[0],
                    {a: t[f"head_U.{a}"].shape[0] for a in TASKS})

    def signature(self):
        return tuple((n, v.shape) for n, v in self.tensors.items())

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def items(self):
        return self.tensors.items()

    def copy(self) -> "EncoderParams":
        return EncoderParams({n: v.copy() for n, v in self.tensors.items()})

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams({n: np.zeros_like(v) for n, v in self.tensors.items()})

    def __add__(self, other):
        return EncoderParams({n: v + other.tensors[n] for n, v in self.tensors.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())

    def equals(self, other) -> bool:
        return all(np.array_equal(v, other.tensors[n]) for n, v in self.tensors.items())


# --------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    ids: list
    pool_cls: sp.csr_matrix | None = None
    pool_span: sp.csr_matrix | None = None
    h_cls_ext: np.ndarray | None = None
    h_span_ext: np.ndarray | None = None

    def __len__(self):
        return len(self.ids)

    @property
    def external(self) -> bool:
        return self.pool_cls is None

    def subset(self, idx) -> "Batch":
        idx = np.asarray(idx, dtype=np.int64)
        ids = [self.ids[i] for i in idx]
        if self.external:
            return Batch(ids, h_cls_ext=self.h_cls_ext[idx], h_span_ext=self.h_span_ext[idx])
        return Batch(ids, self.pool_cls[idx], self.pool_span[idx])


def _pool_matrix(rows: list, vocab: int) -> sp.csr_matrix:
    indptr = [0]
    cols, data = [], []
    for toks in rows:
        u, c = np.unique(np.asarray(toks, dtype=np.int64), return_counts=True)
        cols.append(u)
        data.append(c / len(toks))
        indptr.append(indptr[-1] + len(u))
    if rows:
        cols = np.concatenate(cols)
        data = np.concatenate(data)
    else:
        cols, data = np.zeros(0, np.int64), np.zeros(0)
    return sp.csr_matrix((data, cols, np.asarray(indptr)), shape=(len(rows), vocab))


def make_batch(seqs: list[SequenceInput], vocab: int, span_context: bool = True) -> Batch:
    """Pooling matrices for a list of sequences.

    With ``span_context`` every token's representation is its embedding plus
    the sequence mean, so ``h_span = mean(span embeddings) + h_cls``. Without
    it ``h_span`` is the plain mean of the span embeddings.
    """
    for s in seqs:
        if s.token_ids and max(s.token_ids) >= vocab:
            raise ShapeMismatch(f"token id {max(s.token_ids)} outside vocabulary of {vocab}")
    pool_cls = _pool_matrix([s.token_ids for s in seqs], vocab)
    pool_span = _pool_matrix([s.span_ids for s in seqs], vocab)
    if span_context:
        pool_span = (pool_span + pool_cls).tocsr()
        pool_span.sort_indices()
    return Batch(ids=[s.instance_id for s in seqs], pool_cls=pool_cls, pool_span=pool_span)


def make_external_batch(ids: list, table: dict, d: int) -> Batch:
    """Batch from precomputed vectors; ``table[id]`` holds 2*d floats (h_cls then h_span)."""
    rows = np.array([table[i] for i in ids], dtype=np.float64).reshape(len(ids), 2 * d)
    return Batch(list(ids), h_cls_ext=rows[:, :d].copy(), h_span_ext=rows[:, d:].copy())


def read_vector_file(path) -> dict:
    """Lines of ``id v1 v2 ...`` (whitespace separated)."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                out[parts[0]] = np.array([float(x) for x in parts[1:]])
            except ValueError:
                from .errors import MalformedLine
                raise MalformedLine(line_no, "non-numeric vector entry") from None
    return out


def write_vector_file(path, ids, vectors) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, v in zip(ids, vectors):
            fh.write(i + " " + " ".join(repr(float(x)) for x in v) + "\n")


# --------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardTrace:
    """Per-batch activations. Row ``i`` belongs to ``batch.ids[i]``."""

    batch: Batch
    h_cls: np.ndarray
    h_tilde: np.ndarray
    gates: dict
    h_span: np.ndarray
    logits: dict
    signature: tuple = field(repr=False, default=())


def pool(params: EncoderParams, batch: Batch):
    if batch.external:
        return batch.h_cls_ext, batch.h_span_ext
    E = params["E"]
    if batch.pool_cls.shape[1] != E.shape[0]:
        raise ShapeMismatch(f"batch vocabulary {batch.pool_cls.shape[1]} != E rows {E.shape[0]}")
    return np.asarray(batch.pool_cls @ E), np.asarray(batch.pool_span @ E)


def forward_pooled(params: EncoderParams, h_cls, h_span, batch: Batch | None = None) -> ForwardTrace:
    d = params["E"].shape[1]
    if h_cls.shape[-1] != d or h_span.shape[-1] != d:
        raise ShapeMismatch(f"pooled width {h_cls.shape[-1]} != d={d}")
    h_tilde = np.tanh(h_cls @ params["W"].T + params["b"])
    gates = {a: expit(h_tilde @ params[f"gate_w.{a}"] + params[f"gate_b.{a}"]) for a in TASKS}
    logits = {a: h_span @ params[f"head_U.{a}"].T + params[f"head_c.{a}"] for a in TASKS}
    return ForwardTrace(batch, h_cls, h_tilde, gates, h_span, logits, params.signature())


def forward_batch(params: EncoderParams, batch: Batch) -> ForwardTrace:
    h_cls, h_span = pool(params, batch)
    return forward_pooled(params, h_cls, h_span, batch)


def forward(params: EncoderParams, seq: SequenceInput, span_context: bool = True) -> ForwardTrace:
    """Single-sequence forward pass; the trace has batch dimension 1."""
    return forward_batch(params, make_batch([seq], params["E"].shape[0], span_context))


def backward_pooled(params: EncoderParams, trace: ForwardTrace, dlogits: dict, dgates: dict):
    """Gradients for trunk, gates and heads, plus upstream grads on the pooled vectors."""
    if trace.signature and trace.signature != params.signature():
        raise TraceMismatch("trace was produced with differently shaped parameters")
    B = trace.h_cls.shape[0]
    grads = params.zeros_like()
    dh_span = np.zeros_like(trace.h_span)
    dh_tilde = np.zeros_like(trace.h_tilde)
    for a in TASKS:
        if a in dlogits and dlogits[a] is not None:
            dz = np.asarray(dlogits[a], dtype=np.float64)
            if dz.shape != trace.logits[a].shape:
                raise TraceMismatch(f"dlogits[{a}] shape {dz.shape} != {trace.logits[a].shape}")
            grads[f"head_U.{a}"] = dz.T @ trace.h_span
            grads[f"head_c.{a}"] = dz.sum(axis=0)
            dh_span += dz @ params[f"head_U.{a}"]
        if a in dgates and dgates[a] is not None:
            dg = np.asarray(dgates[a], dtype=np.float64)
            if dg.shape != (B,):
                raise TraceMismatch(f"dgates[{a}] shape {dg.shape} != {(B,)}")
            g = trace.gates[a]
            ds = dg * g * (1.0 - g)
            grads[f"gate_w.{a}"] = ds @ trace.h_tilde
            grads[f"gate_b.{a}"] = np.asarray(ds.sum())
            dh_tilde += np.outer(ds, params[f"gate_w.{a}"])
    dpre = dh_tilde * (1.0 - trace.h_tilde ** 2)
    grads["W"] = dpre.T @ trace.h_cls
    grads["b"] = dpre.sum(axis=0)
    dh_cls = dpre @ params["W"]
    return grads, dh_cls, dh_span


def backward_pool(grads: EncoderParams, batch: Batch, dh_cls, dh_span) -> EncoderParams:
    if not batch.external:
        grads["E"] = np.asarray(batch.pool_cls.T @ dh_cls) + np.asarray(batch.pool_span.T @ dh_span)
    return grads


def backward(params: EncoderParams, trace: ForwardTrace, dlogits: dict, dgates: dict) -> EncoderParams:
    """Exact gradients of a loss given its partials w.r.t. logits and gates."""
    grads, dh_cls, dh_span = backward_pooled(params, trace, dlogits, dgates)
    if trace.batch is not None:
        backward_pool(grads, trace.batch, dh_cls, dh_span)
    return grads
