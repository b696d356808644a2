"""Instance schema, JSONL parsing, tag-vocabulary reduction and split statistics."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable

from .errors import (
    DuplicateId,
    EmptyTraining,
    MalformedLine,
    SchemaViolation,
    SpanOutOfRange,
)

TASKS = ("tag", "time", "scale", "sign")

TIME_LABELS = (
    "instant_past",
    "instant_current",
    "instant_future",
    "duration_current",
    "duration_past_current",
    "duration_current_future",
    "duration_past_future",
)
SIGN_LABELS = ("positive", "negative")
SCALE_MIN, SCALE_MAX = -12, 12
N_SCALE = SCALE_MAX - SCALE_MIN + 1
DOC_TYPES = ("10-K", "10-Q", "other")

STANDARD_RARE = "standard_rare"
CUSTOM = "custom"
DEFAULT_STANDARD_PREFIXES = ("us-gaap", "dei", "srt")


@dataclass(frozen=True)
class Document:
    company_name: str
    cik: str
    doc_type: str
    period_end_date: str
    fiscal_year: int


@dataclass(frozen=True)
class Context:
    target_sentence: str
    prev_sentence: str | None = None
    next_sentence: str | None = None


@dataclass(frozen=True)
class Span:
    char_start: int
    char_end: int


@dataclass(frozen=True)
class Golds:
    tag: str
    tag_is_standard: bool
    time: str
    scale: int
    sign: str


@dataclass(frozen=True)
class Instance:
    id: str
    document: Document
    context: Context
    target_span: Span
    golds: Golds

    @property
    def mention(self) -> str:
        return self.context.target_sentence[self.target_span.char_start:self.target_span.char_end]

    def with_golds(self, **changes) -> "Instance":
        g = asdict(self.golds)
        g.update(changes)
        return Instance(self.id, self.document, self.context, self.target_span, Golds(**g))


@dataclass
class SplitSet:
    train: list[Instance]
    valid: list[Instance] = field(default_factory=list)
    test: list[Instance] = field(default_factory=list)
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for inst in (*self.train, *self.valid, *self.test):
            if inst.id in seen:
                raise DuplicateId(f"instance id {inst.id!r} appears more than once")
            seen.add(inst.id)

    def items(self):
        return (("train", self.train), ("valid", self.valid), ("test", self.test))


# --------------------------------------------------------------------------
# parsing


def normalize_time(value) -> str:
    """Map the accepted time encodings onto one of the 7 combined labels.

    Accepts ``"instant_current"``, ``"instant; current"``, ``"duration past_current"``
    or a ``(period_type, relation)`` pair.
    """
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ValueError(f"expected (period_type, relation), got {value!r}")
        period, rel = value
    else:
        s = str(value).strip().lower()
        if s in TIME_LABELS:
            return s
        for sep in (";", ",", " ", "_"):
            if sep in s:
                period, rel = s.split(sep, 1)
                break
        else:
            raise ValueError(f"unrecognized time label {value!r}")
    label = f"{str(period).strip().lower()}_{str(rel).strip().lower().replace('-', '_')}"
    if label not in TIME_LABELS:
        raise ValueError(f"unrecognized time label {value!r}")
    return label


def _require(obj, key, section, line_no, kind=None, optional=False):
    if not isinstance(obj, dict):
        raise SchemaViolation(section, "expected an object", line_no)
    if key not in obj or obj[key] is None:
        if optional:
            return None
        raise SchemaViolation(f"{section}.{key}", "missing", line_no)
    val = obj[key]
    if kind is not None and not isinstance(val, kind) or (kind is int and isinstance(val, bool)):
        raise SchemaViolation(f"{section}.{key}", f"expected {getattr(kind, '__name__', kind)}", line_no)
    return val


def _is_standard_tag(tag: str, prefixes) -> bool:
    ns = tag.split(":", 1)[0].lower() if ":" in tag else ""
    return ns in prefixes


def instance_from_dict(rec: dict, line_no: int | None = None,
                       standard_prefixes=DEFAULT_STANDARD_PREFIXES) -> Instance:
    if not isinstance(rec, dict):
        raise SchemaViolation("<root>", "expected an object", line_no)
    iid = _require(rec, "id", "<root>", line_no)
    iid = str(iid)

    d = _require(rec, "document", "<root>", line_no, dict)
    doc_type = str(_require(d, "doc_type", "document", line_no))
    doc_type = {"10-k": "10-K", "10-q": "10-Q"}.get(doc_type.lower(), "other")
    ped = str(_require(d, "period_end_date", "document", line_no))
    try:
        _dt.date.fromisoformat(ped)
    except ValueError:
        raise SchemaViolation("document.period_end_date", f"not an ISO-8601 date: {ped!r}", line_no)
    fy = _require(d, "fiscal_year", "document", line_no)
    try:
        fy = int(fy)
    except (TypeError, ValueError):
        raise SchemaViolation("document.fiscal_year", "expected integer", line_no)
    document = Document(
        company_name=str(_require(d, "company_name", "document", line_no)),
        cik=str(_require(d, "cik", "document", line_no)),
        doc_type=doc_type,
        period_end_date=ped,
        fiscal_year=fy,
    )

    c = _require(rec, "context", "<root>", line_no, dict)
    target = _require(c, "target_sentence", "context", line_no, str)
    prev = _require(c, "prev_sentence", "context", line_no, str, optional=True)
    nxt = _require(c, "next_sentence", "context", line_no, str, optional=True)
    context = Context(target_sentence=target, prev_sentence=prev, next_sentence=nxt)

    t = rec.get("targets", rec.get("target_span"))
    if isinstance(t, list):
        if len(t) != 1:
            raise SchemaViolation("targets", "exactly one target span per instance", line_no)
        t = t[0]
    if not isinstance(t, dict):
        raise SchemaViolation("targets", "missing", line_no)
    cs = _require(t, "char_start", "targets", line_no, int)
    ce = _require(t, "char_end", "targets", line_no, int)
    if not (0 <= cs < ce <= len(target)):
        raise SpanOutOfRange(iid, f"[{cs}, {ce}) vs sentence length {len(target)}")
    if not any(ch.isdigit() for ch in target[cs:ce]):
        raise SpanOutOfRange(iid, f"span {target[cs:ce]!r} contains no digit")
    span = Span(cs, ce)

    g = _require(rec, "golds", "<root>", line_no, dict)
    tag = str(_require(g, "tag", "golds", line_no))
    is_std = g.get("tag_is_standard")
    if is_std is None:
        is_std = _is_standard_tag(tag, standard_prefixes)
    elif not isinstance(is_std, bool):
        raise SchemaViolation("golds.tag_is_standard", "expected boolean", line_no)
    if "time" in g and g["time"] is not None:
        raw_time = g["time"]
    elif "period_type" in g and "time_relation" in g:
        raw_time = (g["period_type"], g["time_relation"])
    else:
        raise SchemaViolation("golds.time", "missing", line_no)
    try:
        time = normalize_time(raw_time)
    except ValueError as exc:
        raise SchemaViolation("golds.time", str(exc), line_no)
    scale = _require(g, "scale", "golds", line_no)
    if isinstance(scale, bool) or not isinstance(scale, (int, str)):
        raise SchemaViolation("golds.scale", "expected integer", line_no)
    try:
        scale = int(scale)
    except ValueError:
        raise SchemaViolation("golds.scale", "expected integer", line_no)
    if not SCALE_MIN <= scale <= SCALE_MAX:
        raise SchemaViolation("golds.scale", f"{scale} outside [-12, 12]", line_no)
    sign = str(_require(g, "sign", "golds", line_no)).strip().lower()
    sign = {"+": "positive", "-": "negative", "1": "positive", "-1": "negative"}.get(sign, sign)
    if sign not in SIGN_LABELS:
        raise SchemaViolation("golds.sign", f"expected positive/negative, got {sign!r}", line_no)
    golds = Golds(tag=tag, tag_is_standard=is_std, time=time, scale=scale, sign=sign)
    return Instance(iid, document, context, span, golds)


def instance_to_dict(inst: Instance) -> dict:
    return {
        "id": inst.id,
        "document": asdict(inst.document),
        "context": asdict(inst.context),
        "targets": asdict(inst.target_span),
        "golds": asdict(inst.golds),
    }


def parse_instances(stream: Iterable[str], standard_prefixes=DEFAULT_STANDARD_PREFIXES) -> list[Instance]:
    """Parse JSONL records. All-or-nothing: the first bad line raises and nothing is returned."""
    out = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, exc.msg) from None
        out.append(instance_from_dict(rec, line_no, standard_prefixes))
    seen = set()
    for inst in out:
        if inst.id in seen:
            raise DuplicateId(f"instance id {inst.id!r} appears more than once")
        seen.add(inst.id)
    return out


def serialize_instances(instances: Iterable[Instance]) -> str:
    return "".join(json.dumps(instance_to_dict(i), ensure_ascii=False) + "\n" for i in instances)


def read_instances(path, standard_prefixes=DEFAULT_STANDARD_PREFIXES) -> list[Instance]:
    with open(path, encoding="utf-8") as fh:
        return parse_instances(fh, standard_prefixes)


def write_instances(path, instances) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_instances(instances))


# --------------------------------------------------------------------------
# label spaces


@dataclass(frozen=True)
class LabelSpaces:
    tag_vocab: tuple[str, ...]
    tag_counts: tuple[int, ...]
    time_counts: tuple[int, ...]
    scale_counts: tuple[int, ...]
    sign_counts: tuple[int, ...]
    tag_mapping: dict = field(default_factory=dict, compare=False, hash=False)
    threshold: int = 1

    @property
    def n_classes(self) -> dict:
        return {"tag": len(self.tag_vocab), "time": len(TIME_LABELS),
                "scale": N_SCALE, "sign": len(SIGN_LABELS)}

    def counts(self, task: str) -> tuple[int, ...]:
        return getattr(self, f"{task}_counts")

    def class_names(self, task: str) -> tuple[str, ...]:
        if task == "tag":
            return self.tag_vocab
        if task == "time":
            return TIME_LABELS
        if task == "scale":
            return tuple(str(s) for s in range(SCALE_MIN, SCALE_MAX + 1))
        return SIGN_LABELS

    def reduce_tag(self, tag: str, is_standard: bool) -> str:
        if not is_standard or tag == CUSTOM:
            return CUSTOM
        return self.tag_mapping.get(tag, STANDARD_RARE)

    def label_index(self, inst: Instance, task: str) -> int:
        g = inst.golds
        if task == "tag":
            return self.tag_vocab.index(self.reduce_tag(g.tag, g.tag_is_standard))
        if task == "time":
            return TIME_LABELS.index(g.time)
        if task == "scale":
            return g.scale - SCALE_MIN
        return SIGN_LABELS.index(g.sign)

    def encode(self, instances) -> dict:
        """Class indices per task, as lists aligned with ``instances``."""
        tag_pos = {t: i for i, t in enumerate(self.tag_vocab)}
        out = {a: [] for a in TASKS}
        for inst in instances:
            g = inst.golds
            out["tag"].append(tag_pos[self.reduce_tag(g.tag, g.tag_is_standard)])
            out["time"].append(TIME_LABELS.index(g.time))
            out["scale"].append(g.scale - SCALE_MIN)
            out["sign"].append(SIGN_LABELS.index(g.sign))
        return out

    def to_dict(self) -> dict:
        return {
            "tag_vocab": list(self.tag_vocab),
            "tag_counts": list(self.tag_counts),
            "time_counts": list(self.time_counts),
            "scale_counts": list(self.scale_counts),
            "sign_counts": list(self.sign_counts),
            "tag_mapping": dict(sorted(self.tag_mapping.items())),
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSpaces":
        return cls(
            tag_vocab=tuple(d["tag_vocab"]),
            tag_counts=tuple(d["tag_counts"]),
            time_counts=tuple(d["time_counts"]),
            scale_counts=tuple(d["scale_counts"]),
            sign_counts=tuple(d["sign_counts"]),
            tag_mapping=dict(d["tag_mapping"]),
            threshold=int(d["threshold"]),
        )


def reduce_tag_vocabulary(train: list[Instance], threshold: int = 1000) -> LabelSpaces:
    """Fold rare standard tags into ``standard_rare`` and every custom tag into ``custom``."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    if not train:
        raise EmptyTraining("training split is empty")
    raw = Counter(i.golds.tag for i in train if i.golds.tag_is_standard and i.golds.tag not in (CUSTOM,))
    mapping = {}
    for tag, n in raw.items():
        if tag == STANDARD_RARE or n < threshold:
            mapping[tag] = STANDARD_RARE
        else:
            mapping[tag] = tag
    reduced = Counter()
    for inst in train:
        g = inst.golds
        if not g.tag_is_standard or g.tag == CUSTOM:
            reduced[CUSTOM] += 1
        else:
            reduced[mapping[g.tag]] += 1
    kept = [t for t in reduced if t not in (STANDARD_RARE, CUSTOM)]
    kept.sort(key=lambda t: (-reduced[t], t))
    vocab = tuple(kept) + (STANDARD_RARE, CUSTOM)
    time_c = Counter(i.golds.time for i in train)
    scale_c = Counter(i.golds.scale for i in train)
    sign_c = Counter(i.golds.sign for i in train)
    return LabelSpaces(
        tag_vocab=vocab,
        tag_counts=tuple(reduced[t] for t in vocab),
        time_counts=tuple(time_c[t] for t in TIME_LABELS),
        scale_counts=tuple(scale_c[s] for s in range(SCALE_MIN, SCALE_MAX + 1)),
        sign_counts=tuple(sign_c[s] for s in SIGN_LABELS),
        tag_mapping=mapping,
        threshold=threshold,
    )


def apply_reduction(instances: list[Instance], spaces: LabelSpaces) -> list[Instance]:
    """Rewrite gold tags with their reduced class names."""
    out = []
    for inst in instances:
        g = inst.golds
        red = spaces.reduce_tag(g.tag, g.tag_is_standard)
        out.append(inst.with_golds(tag=red, tag_is_standard=red != CUSTOM))
    return out


# --------------------------------------------------------------------------
# statistics


@dataclass
class StatsReport:
    # (split, task, class, count, proportion)
    rows: list[tuple[str, str, str, int, float]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["split", "task", "class", "count", "proportion"])
        for split, task, cls, n, p in self.rows:
            w.writerow([split, task, cls, n, f"{p:.6f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = []
        groups: dict = {}
        for split, task, cls, n, p in self.rows:
            groups.setdefault((split, task), []).append((cls, n, p))
        for split in ("train", "valid", "test"):
            for task in TASKS:
                entries = groups.get((split, task))
                lines.append(f"[{split}] {task}")
                if not entries:
                    lines.append("  (empty)")
                    continue
                width = max(len(c) for c, _, _ in entries)
                for cls, n, p in entries:
                    lines.append(f"  {cls:<{width}}  {n:>8d}  {p:8.4f}")
        return "\n".join(lines) + "\n"

    def proportions(self, split: str, task: str) -> dict:
        return {c: p for s, t, c, _, p in self.rows if s == split and t == task}


def split_statistics(splits: SplitSet, spaces: LabelSpaces) -> StatsReport:
    rows = []
    for split_name, insts in splits.items():
        if not insts:
            continue
        n = len(insts)
        enc = spaces.encode(insts)
        for task in TASKS:
            names = spaces.class_names(task)
            cnt = Counter(enc[task])
            for idx, k in sorted(cnt.items(), key=lambda kv: (-kv[1], kv[0])):
                rows.append((split_name, task, names[idx], k, k / n))
    return StatsReport(rows)
