"""Synthetic corpora, seeded label-noise injection and gate diagnostics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .dataset import (
    SCALE_MAX,
    SCALE_MIN,
    SIGN_LABELS,
    TASKS,
    TIME_LABELS,
    Context,
    Document,
    Golds,
    Instance,
    Span,
    SplitSet,
)
from .errors import DegenerateMask, InsufficientInstances

DEFAULT_TOP_NS = (5, 6, 7, 8, 9, 10, 20, 30, 40, 50)
SYNTH_SCALES = (0, 3, 6, 9)
NEGATIVE_RATE = 0.1

_ONSETS = ("b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "br",
           "cl", "dr", "fr", "gr", "pl", "pr", "st", "tr")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ea", "io", "ou")
_CODAS = ("", "n", "r", "s", "t", "l", "nd", "rt", "st")


def _pseudo_words(rng: np.random.Generator, n: int) -> list[str]:
    words, seen = [], set()
    while len(words) < n:
        k = rng.integers(2, 4)
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(k)) + _CODAS[rng.integers(len(_CODAS))]
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _amount(rng) -> str:
    return f"{rng.integers(1, 1000)}.{rng.integers(0, 10)}"


def _context_sentence(rng, dist) -> str:
    words = [dist[j] for j in rng.integers(len(dist), size=5)]
    return " ".join(words).capitalize() + f" ${_amount(rng)}."


@dataclass
class SyntheticLexicon:
    tag: list
    time: list
    scale: list
    sign: list
    distractors: list


def synthetic_lexicon(rng, n_tag_classes: int, vocab_size: int) -> SyntheticLexicon:
    n_kw = n_tag_classes + len(TIME_LABELS) + len(SYNTH_SCALES) + len(SIGN_LABELS)
    words = _pseudo_words(rng, vocab_size)
    i = 0
    parts = []
    for n in (n_tag_classes, len(TIME_LABELS), len(SYNTH_SCALES), len(SIGN_LABELS)):
        parts.append(words[i:i + n])
        i += n
    return SyntheticLexicon(*parts, distractors=words[n_kw:])


def generate_synthetic_corpus(seed: int, n_instances: int = 2000, n_tag_classes: int = 10,
                              vocab_size: int = 200, n_distractors: int = 6) -> SplitSet:
    """Clean multi-attribute corpus whose labels are carried by keyword tokens.

    Each target sentence holds one keyword per task (tag, time, scale, sign)
    among distractor words, plus the numeric mention. Tags and time classes
    are uniform, scales are uniform over 0/3/6/9 and about 10% of signs are
    negative. Split 80/10/10 in generation order.
    """
    if n_tag_classes < 2:
        raise ValueError("n_tag_classes must be >= 2")
    if vocab_size < 4 * n_tag_classes:
        raise ValueError("vocab_size must be >= 4 * n_tag_classes")
    n_kw = n_tag_classes + len(TIME_LABELS) + len(SYNTH_SCALES) + len(SIGN_LABELS)
    if vocab_size - n_kw < n_distractors:
        raise ValueError("vocab_size too small for keywords plus distractors")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    lex = synthetic_lexicon(rng, n_tag_classes, vocab_size)
    companies = [(" ".join(_pseudo_words(rng, 2)).title() + " Inc", f"{rng.integers(10**6, 10**7):010d}")
                 for _ in range(25)]
    dist = lex.distractors
    instances = []
    for i in range(n_instances):
        tag = int(rng.integers(n_tag_classes))
        time = int(rng.integers(len(TIME_LABELS)))
        scale_i = int(rng.integers(len(SYNTH_SCALES)))
        sign = int(rng.random() < NEGATIVE_RATE)
        fillers = [dist[j] for j in rng.integers(len(dist), size=n_distractors)]
        keywords = [lex.tag[tag], lex.time[time], lex.sign[sign]]
        words = fillers + keywords
        order = rng.permutation(len(words))
        words = [words[j] for j in order]
        cut = int(rng.integers(1, len(words)))
        amount = _amount(rng)
        left = " ".join(words[:cut]).capitalize() + " $"
        right = " " + lex.scale[scale_i] + " " + " ".join(words[cut:]) + "."
        target = left + amount + right
        span = Span(len(left), len(left) + len(amount))
        prev = _context_sentence(rng, dist)
        nxt = _context_sentence(rng, dist)
        name, cik = companies[int(rng.integers(len(companies)))]
        year = int(rng.integers(2019, 2025))
        q = int(rng.integers(4))
        ped = ("03-31", "06-30", "09-30", "12-31")[q]
        doc = Document(company_name=name, cik=cik, doc_type="10-K" if q == 3 else "10-Q",
                       period_end_date=f"{year}-{ped}", fiscal_year=year)
        golds = Golds(tag=f"us-gaap:Concept{tag:03d}", tag_is_standard=True, time=TIME_LABELS[time],
                      scale=SYNTH_SCALES[scale_i], sign=SIGN_LABELS[sign])
        instances.append(Instance(f"syn{seed}-{i:06d}", doc, Context(target, prev, nxt), span, golds))
    n_train = int(round(0.8 * n_instances))
    n_valid = int(round(0.1 * n_instances))
    return SplitSet(instances[:n_train], instances[n_train:n_train + n_valid],
                    instances[n_train + n_valid:],
                    provenance=f"synthetic seed={seed} n={n_instances} tags={n_tag_classes} vocab={vocab_size}")


# --------------------------------------------------------------------------
# noise injection


@dataclass
class NoiseSpec:
    rates: dict = field(default_factory=lambda: {a: 0.0 for a in TASKS})
    seed: int = 0
    kind: str = "symmetric"
    flip_eval: bool = False

    def __post_init__(self):
        self.rates = {a: float(self.rates.get(a, 0.0)) for a in TASKS}
        if any(not 0.0 <= r <= 1.0 for r in self.rates.values()):
            raise ValueError("flip rates must lie in [0, 1]")
        if self.kind != "symmetric":
            raise ValueError("only symmetric noise is implemented")


@dataclass
class FlipMask:
    # (split, id, task, original, injected, flipped)
    rows: list = field(default_factory=list)

    @property
    def n_flipped(self) -> int:
        return sum(1 for r in self.rows if r[5])

    def is_empty(self) -> bool:
        return self.n_flipped == 0

    def flipped(self, task: str) -> dict:
        """id -> flipped flag for one task."""
        return {r[1]: r[5] for r in self.rows if r[2] == task}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "task", "original", "injected", "flipped", "split"])
        for split, iid, task, orig, inj, fl in self.rows:
            w.writerow([iid, task, orig, inj, int(fl), split])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FlipMask":
        rd = csv.DictReader(io.StringIO(text))
        return cls([(r.get("split", "train"), r["id"], r["task"], r["original"], r["injected"],
                     bool(int(r["flipped"]))) for r in rd])


def _label_space(splits: SplitSet, task: str) -> list:
    if task == "time":
        return list(TIME_LABELS)
    if task == "scale":
        return list(range(SCALE_MIN, SCALE_MAX + 1))
    if task == "sign":
        return list(SIGN_LABELS)
    tags = sorted({i.golds.tag for _, insts in splits.items() for i in insts})
    return tags


def inject_noise(splits: SplitSet, spec: NoiseSpec) -> tuple[SplitSet, FlipMask]:
    """Symmetric flips: with probability rho_a the label moves uniformly to another class.

    Only the training split is touched unless ``spec.flip_eval`` is set, in
    which case the test split is flipped too. Two draws are taken per
    (instance, task) regardless of the rates, so each task's flips do not
    depend on the other tasks' rates.
    """
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 11]))
    spaces = {a: _label_space(splits, a) for a in TASKS}
    std_of = {i.golds.tag: i.golds.tag_is_standard for _, insts in splits.items() for i in insts}
    mask = FlipMask()
    out = {}
    for split, insts in splits.items():
        if split == "valid" or (split == "test" and not spec.flip_eval):
            out[split] = list(insts)
            continue
        new = []
        for inst in insts:
            changes = {}
            for a in TASKS:
                u = rng.random()
                j = int(rng.integers(max(len(spaces[a]) - 1, 1)))
                orig = getattr(inst.golds, a)
                if u < spec.rates[a] and len(spaces[a]) > 1:
                    others = [c for c in spaces[a] if c != orig]
                    inj = others[j]
                    changes[a] = inj
                    if a == "tag":
                        changes["tag_is_standard"] = std_of[inj]
                    mask.rows.append((split, inst.id, a, str(orig), str(inj), True))
                else:
                    mask.rows.append((split, inst.id, a, str(orig), str(orig), False))
            new.append(inst.with_golds(**changes) if changes else inst)
        out[split] = new
    return SplitSet(out["train"], out["valid"], out["test"],
                    provenance=f"{splits.provenance}; noise seed={spec.seed} rates={spec.rates}"), mask


# --------------------------------------------------------------------------
# gate diagnostics


@dataclass
class GateRankReport:
    top_ns: tuple
    table: dict          # task -> {N: fraction or None}
    epoch: int

    FOOTER = ("ranking: g descending, ties broken by ascending instance id; "
              "consistency = final prediction equals the training label")

    def to_text(self) -> str:
        head = f"{'Top N of g':>10}" + "".join(f"{a.capitalize():>8}" for a in TASKS)
        lines = [head]
        for n in self.top_ns:
            cells = []
            for a in TASKS:
                v = self.table[a].get(n)
                cells.append(f"{'—' if v is None else format(v, '.2f'):>8}")
            lines.append(f"{n:>10}" + "".join(cells))
        lines.append(f"# {self.FOOTER}; epoch {self.epoch}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["top_n", *TASKS])
        for n in self.top_ns:
            w.writerow([n, *("" if self.table[a].get(n) is None else repr(self.table[a][n])
                             for a in TASKS)])
        return buf.getvalue()


def gate_rank_report(gate_log, final_predictions: dict | None = None, top_ns=DEFAULT_TOP_NS,
                     epoch: int | None = None, strict: bool = True) -> GateRankReport:
    """Prediction consistency among the top-N training instances by g_a.

    ``final_predictions`` (task -> {id: pred}) overrides the predictions stored
    in the log. With ``strict`` a top-N larger than the log raises
    InsufficientInstances; otherwise that cell is left empty.
    """
    epoch = gate_log.last_epoch() if epoch is None else epoch
    table = {}
    for a in TASKS:
        rows = gate_log.epoch_rows(epoch, a)
        rows = sorted(rows, key=lambda r: (-r[3], r[1]))
        preds = final_predictions.get(a) if final_predictions else None
        match = [int((preds[r[1]] if preds is not None else r[5]) == r[6]) for r in rows]
        csum = np.cumsum(match) if match else np.zeros(0)
        col = {}
        for n in top_ns:
            if n > len(rows) or n < 1:
                if strict:
                    raise InsufficientInstances(n, len(rows))
                col[n] = None
            else:
                col[n] = float(csum[n - 1]) / n
        table[a] = col
    return GateRankReport(tuple(top_ns), table, epoch)


def auroc_pairs(scores, positive) -> float:
    """Fraction of (positive, negative) pairs ranked correctly; ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positive, dtype=bool)
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise DegenerateMask("need both flipped and clean instances")
    gt = (pos[:, None] > neg[None, :]).sum()
    eq = (pos[:, None] == neg[None, :]).sum()
    return float((gt + 0.5 * eq) / (pos.size * neg.size))


def auroc_rank(scores, positive) -> float:
    """Mann-Whitney form with midranks."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(positive, dtype=bool)
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        raise DegenerateMask("need both flipped and clean instances")
    r = rankdata(s)
    return float((r[y].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def gate_noise_separation(gate_log, flip_mask: FlipMask, task: str, epoch: int | None = None) -> dict:
    """Gate statistics split by the flip indicator; ``auroc`` is None when undefined."""
    rows = gate_log.epoch_rows(epoch, task)
    flips = flip_mask.flipped(task)
    missing = [r[1] for r in rows if r[1] not in flips]
    if missing:
        raise KeyError(f"{len(missing)} logged instances absent from the flip mask, e.g. {missing[0]!r}")
    g = np.array([r[3] for r in rows])
    y = np.array([flips[r[1]] for r in rows], dtype=bool)
    out = {
        "task": task,
        "n": int(g.size),
        "n_flipped": int(y.sum()),
        "task_mean_g": float(g.mean()) if g.size else None,
        "mean_g_flipped": float(g[y].mean()) if y.any() else None,
        "mean_g_clean": float(g[~y].mean()) if (~y).any() else None,
    }
    try:
        out["auroc"] = auroc_rank(g, y)
    except DegenerateMask:
        out["auroc"] = None
    return out
