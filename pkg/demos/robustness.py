"""Gated model against its gate-free control on flipped synthetic labels.

Trains both models on five seeds and prints per-seed clean-test macro F1 and
how well the gates separate flipped from clean training instances.

    python3 demos/robustness.py [n_seeds]
"""

import sys

from norakit import run_robustness_experiment

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5
res = run_robustness_experiment(seeds=range(n_seeds))
print(res.summary())
print("gate criterion met:", res.gate_criterion())
print("F1 criterion met:", res.f1_criterion())
