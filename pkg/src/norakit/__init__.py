"""Noise-gated multi-task tagging of numeric mentions, with NPK evaluation filtering."""

from .baselines import CoTeachingConfig, MixupConfig, train_coteaching, train_mixup
from .config import RunConfig, desk_config
from .dataset import TASKS, Instance, LabelSpaces, SplitSet, read_instances, reduce_tag_vocabulary
from .experiment import RobustnessResult, run_robustness_experiment
from .losses import LossConfig, multitask_objective
from .metrics import evaluate, evaluate_tasks, side_by_side_report
from .noiselab import NoiseSpec, gate_noise_separation, gate_rank_report, generate_synthetic_corpus, inject_noise
from .npk import EmbeddingSet, NpkConfig, filter_subset, npk_scores
from .optimizer import OptimConfig
from .trainer import Model, embed, predict, train

__version__ = "0.1.0"
