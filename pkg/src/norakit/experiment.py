"""Seeded synthetic robustness experiment: gated model against its gate-free control.

Per seed: generate a clean corpus, flip training labels, train both models
with the desk configuration, then score the gates against the flip mask and
both models on the clean test split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import desk_config
from .dataset import TASKS, reduce_tag_vocabulary
from .metrics import evaluate
from .noiselab import NoiseSpec, gate_noise_separation, generate_synthetic_corpus, inject_noise
from .trainer import predict, train

DEFAULT_RATES = {"tag": 0.2, "time": 0.2}


@dataclass
class SeedOutcome:
    seed: int
    f1_gated: dict         # task -> clean-test macro F1
    f1_control: dict
    separation: dict       # task -> gate_noise_separation output (noised tasks only)
    train_loss: list       # gated model, per epoch


@dataclass
class RobustnessResult:
    outcomes: list = field(default_factory=list)
    tasks: tuple = ("tag", "time")
    auroc_target: float = 0.65

    def mean_auroc(self, task: str = "tag") -> float:
        return float(np.mean([o.separation[task]["auroc"] for o in self.outcomes]))

    def flipped_above_clean(self, task: str) -> bool:
        """Mean g on flipped instances exceeds mean g on clean ones in every seed."""
        return all(o.separation[task]["mean_g_flipped"] > o.separation[task]["mean_g_clean"]
                   for o in self.outcomes)

    def mean_f1(self, task: str, which: str) -> float:
        return float(np.mean([getattr(o, f"f1_{which}")[task] for o in self.outcomes]))

    def gate_criterion(self) -> bool:
        return (self.mean_auroc("tag") >= self.auroc_target
                and all(self.flipped_above_clean(a) for a in self.tasks))

    def f1_criterion(self) -> bool:
        return all(self.mean_f1(a, "gated") >= self.mean_f1(a, "control") for a in self.tasks)

    def summary(self) -> str:
        lines = []
        for o in self.outcomes:
            sep = " ".join(f"{a}: auroc={o.separation[a]['auroc']:.3f} "
                           f"g_flip={o.separation[a]['mean_g_flipped']:.4f} "
                           f"g_clean={o.separation[a]['mean_g_clean']:.4f}" for a in self.tasks)
            f1 = " ".join(f"{a}={o.f1_gated[a]:.3f}/{o.f1_control[a]:.3f}" for a in self.tasks)
            lines.append(f"seed {o.seed}: macro F1 gated/control {f1} | {sep}")
        lines.append("mean AUROC(g_tag) = {:.3f} (target {:.2f})".format(self.mean_auroc("tag"),
                                                                         self.auroc_target))
        for a in self.tasks:
            lines.append(f"{a}: mean macro F1 gated {self.mean_f1(a, 'gated'):.4f} vs control "
                         f"{self.mean_f1(a, 'control'):.4f}; flipped g above clean in every seed: "
                         f"{self.flipped_above_clean(a)}")
        return "\n".join(lines)


def run_seed(seed: int, n_instances: int = 2000, n_tag_classes: int = 10, vocab_size: int = 200,
             rates: dict | None = None, **overrides) -> SeedOutcome:
    rates = dict(DEFAULT_RATES if rates is None else rates)
    clean = generate_synthetic_corpus(seed, n_instances, n_tag_classes, vocab_size)
    noisy, mask = inject_noise(clean, NoiseSpec(rates, seed=seed))
    spaces = reduce_tag_vocabulary(noisy.train, 1)
    f1 = {}
    sep = {}
    loss = []
    for gated in (True, False):
        cfg = desk_config(seed=seed, gated=gated, gate_log=gated, **overrides)
        res = train(noisy, spaces, cfg)
        p = predict(res.model, noisy.test)
        f1[gated] = {a: evaluate(p.golds[a], p.preds[a], spaces.n_classes[a])["macro_f1"] for a in TASKS}
        if gated:
            sep = {a: gate_noise_separation(res.gate_log, mask, a) for a in rates if rates[a] > 0}
            loss = res.epoch_train_loss
    return SeedOutcome(seed, f1[True], f1[False], sep, loss)


def run_robustness_experiment(seeds=range(5), **kwargs) -> RobustnessResult:
    """2,000 instances, 10 tag classes, 20% tag and time flips, 15 epochs per model by default."""
    rates = kwargs.get("rates") or DEFAULT_RATES
    tasks = tuple(a for a in ("tag", "time") if rates.get(a, 0) > 0)
    return RobustnessResult([run_seed(s, **kwargs) for s in seeds], tasks=tasks)
