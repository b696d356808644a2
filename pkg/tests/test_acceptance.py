"""Acceptance criteria, one test each. Every test prints a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from oracles import gradient_check, npk_brute_force
from pipeline import run_pipeline

from norakit.encoder import Dims
from norakit.experiment import run_robustness_experiment
from norakit.losses import (
    cb_weight, focal_loss, inverse_frequency_weights, softmax_cross_entropy, weighted_cross_entropy,
)
from norakit.metrics import evaluate
from norakit.noiselab import DEFAULT_TOP_NS, gate_rank_report
from norakit.npk import EmbeddingSet, NpkConfig, consistency_scores, filter_subset, npk_scores
from norakit.trainer import GateLog, fit_gates, init_params


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail=""):
        with capsys.disabled():
            print(f"\nACCEPTANCE {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return emit


def test_gradient_suite(verdict):
    t0 = time.time()
    worst = max(gradient_check(seed) for seed in range(50))
    took = time.time() - t0
    verdict("gradient suite", worst < 1e-4 and took < 60,
            f"50 configs, max rel err {worst:.2e}, {took:.1f}s")


def test_loss_identities(verdict):
    rng = np.random.default_rng(0)
    focal_gap = 0.0
    wce_gap = 0.0
    for _ in range(50):
        z = rng.normal(scale=3, size=2)
        y = int(rng.integers(2))
        focal_gap = max(focal_gap, abs(focal_loss(z, y, gamma=0.0, alpha_t=1.0)[0]
                                       - softmax_cross_entropy(z, y)[0]))
        z5 = rng.normal(scale=3, size=5)
        w = inverse_frequency_weights([7] * 5)
        wce_gap = max(wce_gap, abs(weighted_cross_entropy(z5, y, w)[0] - softmax_cross_entropy(z5, y)[0]))
    p9 = focal_loss([math.log(9.0), 0.0], 0, gamma=3.0, alpha_t=0.25)[0]
    checks = {
        "focal(g=0,a=1)=CE": focal_gap <= 1e-12,
        "cb(n=1)=1": all(cb_weight(1, b) == 1.0 for b in (0.0, 0.5, 0.99, 0.999)),
        "cb(beta=1e-9)~1": all(abs(cb_weight(n, 1e-9) - 1) < 1e-6 for n in (1, 2, 10, 1000)),
        "wce uniform=CE": wce_gap <= 1e-12,
        "cb(0.99,2)": abs(cb_weight(2, 0.99) - 0.502513) <= 1e-6,
        "cb(0.99,100)": abs(cb_weight(100, 0.99) - 0.0157737) <= 1e-6,
        "focal(0.9,0.25,3)": abs(p9 - 2.6340e-5) <= 1e-9,
    }
    failed = [k for k, v in checks.items() if not v]
    verdict("loss identities", not failed, f"{len(checks) - len(failed)}/{len(checks)} hold "
            f"(focal p=0.9 -> {p9:.4e}){' failed: ' + ', '.join(failed) if failed else ''}")


def test_gate_stationarity(verdict):
    dims = Dims(10, 8, 4, {"tag": 3, "time": 7, "scale": 25, "sign": 2})
    h = np.random.default_rng(0).uniform(-1, 1, (16, 8))
    errs = []
    for L, lam in [(1.0, 1.0), (0.2, 10.0), (4.0, 1.0)]:
        g = fit_gates(init_params(0, dims), h, {"tag": np.full(16, L)}, {"tag": lam})["tag"]
        target = min(L / (2 * lam), 0.999)
        errs.append((L, lam, float(np.abs(g - target).max()), float(g.mean())))
    ok = all(e < 1e-2 for _, _, e, _ in errs) and errs[2][3] > 0.99
    verdict("gate stationarity", ok, "; ".join(f"(L={L},lam={lam}) g={m:.4f} err={e:.1e}"
                                               for L, lam, e, m in errs))


def test_npk_oracle_equivalence(verdict):
    mismatches = 0
    runs = 0
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        N = int(rng.integers(10, 501))
        d = int(rng.integers(2, 17))
        C = int(rng.integers(2, 9))
        vecs = rng.normal(size=(N, d))
        labels = rng.integers(0, C, N)
        ids = [f"n{i:04d}" for i in range(N)]
        for k in (1, 5, 50):
            k = min(k, N - 1)
            s = npk_scores(EmbeddingSet.normalized(ids, vecs, labels), NpkConfig(k=k), C)
            kept = filter_subset(s, 0.9).retained
            ref_c, ref_kept = npk_brute_force(vecs, list(labels), k, C, 0.9, ids)
            mismatches += int(list(s.consistency) != ref_c or kept != ref_kept)
            runs += 1
    nb = np.repeat(np.arange(3), [3, 1, 1])[None, :]
    worked = [consistency_scores(nb, [0.5, 0.3, 0.2], [y])[2][0] for y in range(3)]
    ok_worked = np.allclose(worked, [1.0, 0.5556, 0.8333], atol=1e-4)
    verdict("NPK oracle equivalence", mismatches == 0 and ok_worked,
            f"{runs - mismatches}/{runs} runs identical; worked example c = "
            + ", ".join(f"{c:.4f}" for c in worked))


def test_synthetic_robustness_experiment(verdict):
    t0 = time.time()
    res = run_robustness_experiment(seeds=range(5))
    took = time.time() - t0
    print(res.summary())
    a_ok = res.gate_criterion()
    b_ok = res.f1_criterion()
    detail = (f"(a) mean AUROC g_tag {res.mean_auroc('tag'):.3f} (>= 0.65), flipped g > clean g every seed: "
              f"tag {res.flipped_above_clean('tag')}, time {res.flipped_above_clean('time')} -> "
              f"{'met' if a_ok else 'NOT met'}; (b) macro F1 gated/control tag "
              f"{res.mean_f1('tag', 'gated'):.4f}/{res.mean_f1('tag', 'control'):.4f}, time "
              f"{res.mean_f1('time', 'gated'):.4f}/{res.mean_f1('time', 'control'):.4f} -> "
              f"{'met' if b_ok else 'NOT met'}; {took:.0f}s")
    verdict("synthetic robustness experiment", a_ok and b_ok and took < 600, detail)


def test_gate_report_fidelity(verdict):
    g_tag = [0.10, 0.95, 0.30, 0.80, 0.55, 0.70, 0.20, 0.65, 0.40, 0.90]
    m_tag = [1, 0, 1, 0, 1, 1, 1, 0, 1, 0]
    m_time = [1, 1, 0, 0, 1, 0, 1, 1, 1, 1]     # all g tie at 0.5, so id order decides
    log = GateLog()
    for i in range(10):
        iid = f"i{i:02d}"
        log.rows.append((3, iid, "tag", g_tag[i], 0.1, 1 if m_tag[i] else 0, 1))
        log.rows.append((3, iid, "time", 0.5, 0.1, 2 if m_time[i] else 0, 2))
        log.rows.append((3, iid, "scale", 0.1 * i, 0.1, 4, 4))
        log.rows.append((3, iid, "sign", 0.3, 0.1, 0, 0))
    # hand ranking for tag: i01 i09 i03 i05 i07 i04 i08 i02 i06 i00 -> matches 0 0 0 1 0 1 1 1 1 1
    expected = {
        "tag": {5: 1 / 5, 6: 2 / 6, 7: 3 / 7, 8: 4 / 8, 9: 5 / 9, 10: 6 / 10},
        "time": {5: 3 / 5, 6: 3 / 6, 7: 4 / 7, 8: 5 / 8, 9: 6 / 9, 10: 7 / 10},
        "scale": {n: 1.0 for n in range(5, 11)},
        "sign": {n: 1.0 for n in range(5, 11)},
    }
    rep = gate_rank_report(log, strict=False)
    exact = all(rep.table[a][n] == v for a, col in expected.items() for n, v in col.items())
    absent = all(rep.table[a][n] is None for a in expected for n in (20, 30, 40, 50))
    rows = [l.split()[0] for l in rep.to_text().splitlines()[1:-1]]
    shape = rep.top_ns == DEFAULT_TOP_NS and rows == [str(n) for n in (5, 6, 7, 8, 9, 10, 20, 30, 40, 50)]
    verdict("gate-report fidelity", exact and absent and shape,
            f"24 hand-computed cells exact: {exact}; rows N = {','.join(rows)}")


def test_metrics_oracle(verdict):
    s = evaluate([0, 0, 1, 1], [0, 0, 0, 1], 2)
    worked = (s["accuracy"] == 0.75 and abs(s["macro_f1"] - 0.7333) <= 1e-4
              and abs(s["weighted_f1"] - 0.7333) <= 1e-4)
    rng = np.random.default_rng(0)
    gap = 0.0
    for _ in range(200):
        C = int(rng.integers(2, 8))
        golds = np.repeat(np.arange(C), int(rng.integers(1, 25)))
        r = evaluate(golds, rng.integers(0, C, golds.size), C)
        gap = max(gap, abs(r["weighted_f1"] - r["macro_f1"]))
    verdict("metrics oracle", worked and gap < 1e-12,
            f"acc {s['accuracy']:.4f} macro {s['macro_f1']:.4f} weighted {s['weighted_f1']:.4f}; "
            f"balanced weighted-macro gap {gap:.1e} over 200 cases")


def test_determinism(verdict, tmp_path):
    a = run_pipeline(tmp_path / "a", seed=3)
    b = run_pipeline(tmp_path / "b", seed=3)
    differ = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    kinds = {"checkpoints": [k for k in a if k.endswith(".ckpt")],
             "logs": [k for k in a if k.endswith((".log", "steps.csv", "gate_log.csv"))],
             "retained": [k for k in a if k.endswith("retained.txt")],
             "reports": [k for k in a if k.startswith("report/")]}
    covered = all(kinds.values())
    verdict("determinism", not differ and covered,
            f"{len(a)} files byte-identical across two runs ("
            + ", ".join(f"{len(v)} {k}" for k, v in kinds.items()) + ")"
            + (f"; differing: {differ}" if differ else ""))


def test_npk_retention_exactness(verdict):
    rng = np.random.default_rng(1)
    ten = npk_scores(EmbeddingSet.normalized([f"t{i}" for i in range(10)], rng.normal(size=(10, 4)),
                                             rng.integers(0, 3, 10)), NpkConfig(k=3), 3)
    nine = len(filter_subset(ten, 0.90).retained)
    big = npk_scores(EmbeddingSet.normalized([f"b{i:03d}" for i in range(203)], rng.normal(size=(203, 6)),
                                             rng.integers(0, 5, 203)), NpkConfig(k=7), 5)
    sets = [set(filter_subset(big, f).retained) for f in (0.5, 0.7, 0.9, 1.0)]
    sizes = [len(s) for s in sets]
    monotone = all(x <= y for x, y in zip(sets, sets[1:]))
    verdict("NPK retention exactness", nine == 9 and monotone and sizes == [101, 142, 182, 203],
            f"N=10 f=0.9 keeps {nine}; N=203 sizes {sizes}, nested: {monotone}")
