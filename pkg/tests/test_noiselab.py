import numpy as np
import pytest
from scipy.stats import chisquare

from norakit.dataset import TASKS, serialize_instances
from norakit.errors import DegenerateMask, InsufficientInstances
from norakit.noiselab import (
    DEFAULT_TOP_NS, FlipMask, NoiseSpec, auroc_pairs, auroc_rank, gate_noise_separation,
    gate_rank_report, generate_synthetic_corpus, inject_noise,
)
from norakit.trainer import GateLog


def log_from(g_by_task, match_by_task, epoch=1):
    """GateLog where instance i has gate g[i] and pred == gold iff match[i]."""
    log = GateLog()
    for a in TASKS:
        g = g_by_task.get(a, g_by_task["tag"])
        match = match_by_task.get(a, match_by_task["tag"])
        for i, (gi, mi) in enumerate(zip(g, match)):
            log.rows.append((epoch, f"i{i:02d}", a, float(gi), 0.0, 1 if mi else 0, 1))
    return log


# --------------------------------------------------------------------------
# synthetic corpus


def test_corpus_is_deterministic():
    a = generate_synthetic_corpus(3, 200, 4, 60)
    b = generate_synthetic_corpus(3, 200, 4, 60)
    for (_, x), (_, y) in zip(a.items(), b.items()):
        assert serialize_instances(x) == serialize_instances(y)
    c = generate_synthetic_corpus(4, 200, 4, 60)
    assert serialize_instances(c.train) != serialize_instances(a.train)


def test_corpus_split_sizes_and_keywords(small_corpus):
    assert (len(small_corpus.train), len(small_corpus.valid), len(small_corpus.test)) == (240, 30, 30)
    for inst in small_corpus.train[:20]:
        s = inst.target_span
        assert inst.context.target_sentence[s.char_start - 1] == "$"
        assert inst.golds.scale in (0, 3, 6, 9)
        assert inst.context.prev_sentence and inst.context.next_sentence


def test_tag_classes_uniform_chi_square():
    splits = generate_synthetic_corpus(0, 2000, 10, 200)
    tags = [i.golds.tag for _, insts in splits.items() for i in insts]
    counts = np.array([tags.count(t) for t in sorted(set(tags))])
    assert len(counts) == 10
    assert chisquare(counts).pvalue > 0.001


def test_corpus_argument_checks():
    with pytest.raises(ValueError):
        generate_synthetic_corpus(0, 10, 1, 60)
    with pytest.raises(ValueError):
        generate_synthetic_corpus(0, 10, 10, 39)


# --------------------------------------------------------------------------
# noise injection


def test_zero_rate_is_identity(small_corpus):
    noisy, mask = inject_noise(small_corpus, NoiseSpec(seed=1))
    assert mask.is_empty()
    assert serialize_instances(noisy.train) == serialize_instances(small_corpus.train)


def test_full_rate_flips_everything(small_corpus):
    noisy, mask = inject_noise(small_corpus, NoiseSpec({a: 1.0 for a in TASKS}, seed=2))
    for old, new in zip(small_corpus.train, noisy.train):
        for a in TASKS:
            assert getattr(old.golds, a) != getattr(new.golds, a)
    assert mask.n_flipped == 4 * len(small_corpus.train)


def test_flip_rate_within_binomial_bound():
    splits = generate_synthetic_corpus(5, 12500, 10, 200)
    assert len(splits.train) == 10000
    _, mask = inject_noise(splits, NoiseSpec({"tag": 0.2}, seed=5))
    frac = sum(mask.flipped("tag").values()) / 10000
    assert 0.188 <= frac <= 0.212


def test_only_training_split_is_touched(small_corpus):
    noisy, mask = inject_noise(small_corpus, NoiseSpec({"tag": 0.5, "time": 0.5}, seed=3))
    assert noisy.valid == small_corpus.valid and noisy.test == small_corpus.test
    assert {r[0] for r in mask.rows} == {"train"}
    noisy2, mask2 = inject_noise(small_corpus, NoiseSpec({"tag": 0.5}, seed=3, flip_eval=True))
    assert {r[0] for r in mask2.rows} == {"train", "test"}
    assert noisy2.valid == small_corpus.valid


def test_never_flips_to_itself_and_mask_is_consistent(small_corpus):
    noisy, mask = inject_noise(small_corpus, NoiseSpec({a: 0.4 for a in TASKS}, seed=9))
    by_id = {i.id: i for i in noisy.train}
    for split, iid, task, orig, inj, fl in mask.rows:
        assert fl == (orig != inj)
        assert str(getattr(by_id[iid].golds, task)) == inj


def test_task_flips_independent_of_other_rates(small_corpus):
    _, a = inject_noise(small_corpus, NoiseSpec({"tag": 0.3}, seed=4))
    _, b = inject_noise(small_corpus, NoiseSpec({"tag": 0.3, "time": 0.9, "sign": 0.5}, seed=4))
    assert a.flipped("tag") == b.flipped("tag")


def test_flip_mask_csv_round_trip(small_corpus):
    _, mask = inject_noise(small_corpus, NoiseSpec({"tag": 0.3}, seed=4))
    assert FlipMask.from_csv(mask.to_csv()).rows == mask.rows
    assert mask.to_csv().splitlines()[0] == "id,task,original,injected,flipped,split"


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec({"tag": 1.5})
    with pytest.raises(ValueError):
        NoiseSpec(kind="pairwise")


# --------------------------------------------------------------------------
# gate rank report


def test_rank_report_worked_example():
    log = log_from({"tag": [0.9, 0.8, 0.7]}, {"tag": [0, 1, 1]})
    rep = gate_rank_report(log, top_ns=(1, 2, 3))
    assert rep.table["tag"] == {1: 0.0, 2: 0.5, 3: 2 / 3}


def test_rank_report_all_match():
    log = log_from({"tag": list(np.linspace(0, 1, 60))}, {"tag": [1] * 60})
    rep = gate_rank_report(log)
    assert all(v == 1.0 for a in TASKS for v in rep.table[a].values())
    assert rep.top_ns == DEFAULT_TOP_NS == (5, 6, 7, 8, 9, 10, 20, 30, 40, 50)


def test_rank_report_ties_break_by_id():
    log = log_from({"tag": [0.5, 0.5, 0.5]}, {"tag": [0, 1, 1]})
    assert gate_rank_report(log, top_ns=(1,)).table["tag"][1] == 0.0   # i00 first


def test_rank_report_final_predictions_override():
    log = log_from({"tag": [0.9, 0.8]}, {"tag": [0, 0]})
    preds = {"tag": {"i00": 1, "i01": 1}}
    assert gate_rank_report(log, preds, top_ns=(2,)).table["tag"][2] == 1.0


def test_rank_report_insufficient_instances():
    log = log_from({"tag": [0.1] * 4}, {"tag": [1] * 4})
    with pytest.raises(InsufficientInstances):
        gate_rank_report(log)
    rep = gate_rank_report(log, strict=False, top_ns=(3, 5))
    assert rep.table["tag"] == {3: 1.0, 5: None}
    assert "—" in rep.to_text()


def test_rank_report_reproducible_from_csv():
    rng = np.random.default_rng(0)
    log = log_from({"tag": rng.random(60)}, {"tag": rng.integers(0, 2, 60)})
    again = GateLog.from_csv(log.to_csv())
    assert gate_rank_report(again).to_csv() == gate_rank_report(log).to_csv()


def test_rank_report_text_layout():
    log = log_from({"tag": list(np.linspace(0, 1, 50))}, {"tag": [1, 0] * 25})
    lines = gate_rank_report(log).to_text().splitlines()
    assert lines[0].split() == ["Top", "N", "of", "g", "Tag", "Time", "Scale", "Sign"]
    assert [int(l.split()[0]) for l in lines[1:11]] == list(DEFAULT_TOP_NS)
    assert lines[-1].startswith("#")


# --------------------------------------------------------------------------
# separation statistics


def test_auroc_worked_example():
    assert auroc_pairs([0.9, 0.1, 0.8, 0.2], [1, 0, 1, 0]) == 1.0
    assert auroc_rank([0.9, 0.1, 0.8, 0.2], [1, 0, 1, 0]) == 1.0


def test_auroc_constant_scores():
    assert auroc_pairs([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    assert auroc_rank([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5


def test_auroc_complement_and_rank_form_agree():
    rng = np.random.default_rng(1)
    for _ in range(30):
        s = rng.integers(0, 8, 40) / 7.0   # plenty of ties
        y = rng.random(40) < 0.3
        if y.all() or not y.any():
            continue
        a = auroc_pairs(s, y)
        assert abs(a - auroc_rank(s, y)) < 1e-12
        assert abs(auroc_pairs(s, ~y) - (1 - a)) < 1e-12


def test_auroc_degenerate_mask():
    with pytest.raises(DegenerateMask):
        auroc_pairs([0.1, 0.2], [1, 1])
    with pytest.raises(DegenerateMask):
        auroc_rank([0.1, 0.2], [0, 0])


def test_gate_noise_separation():
    log = log_from({"tag": [0.9, 0.1, 0.8, 0.2]}, {"tag": [1, 1, 1, 1]})
    mask = FlipMask([("train", f"i{i:02d}", a, "x", "y" if f else "x", bool(f))
                     for i, f in enumerate([1, 0, 1, 0]) for a in TASKS])
    out = gate_noise_separation(log, mask, "tag")
    assert out["auroc"] == 1.0
    assert out["mean_g_flipped"] == pytest.approx(0.85) and out["mean_g_clean"] == pytest.approx(0.15)
    assert out["task_mean_g"] == pytest.approx(0.5)
    none_flipped = FlipMask([(s, i, a, o, o, False) for s, i, a, o, _, _ in mask.rows])
    assert gate_noise_separation(log, none_flipped, "tag")["auroc"] is None
