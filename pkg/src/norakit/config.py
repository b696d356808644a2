"""Run configuration: nested dataclasses with a flat ``key=value`` representation.

Layering is defaults < config file < explicit overrides. The flat form is the
canonical one: it is what gets fingerprinted, written next to every run, and
stored in checkpoints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields

from .dataset import TASKS
from .losses import LossConfig
from .optimizer import OptimConfig, REFERENCE_LRS


@dataclass
class RunConfig:
    seed: int = 0
    d: int = 64
    d_g: int = 32
    max_len: int = 512
    span_context: bool = True
    min_token_count: int = 1
    gate_bias_init: float = 0.0
    gated: bool = True
    gate_log: bool = True
    checkpoint_every: int = 0
    tag_threshold: int = 1000
    macro_include_empty: bool = False
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)

    @property
    def epochs(self) -> int:
        return self.optim.epochs

    @property
    def batch_size(self) -> int:
        return self.optim.batch_size

    def to_flat(self) -> dict:
        flat = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("loss", "optim")}
        lc, oc = self.loss, self.optim
        flat.update(beta=lc.beta, alpha=lc.alpha, gamma=lc.gamma, focal_alpha_on=lc.focal_alpha_on)
        for a in TASKS:
            flat[f"lambda_{a}"] = lc.lambdas[a]
            flat[f"w_{a}"] = lc.task_weights[a]
        for g in REFERENCE_LRS:
            flat[f"lr_{g}"] = oc.base_lrs[g]
        flat.update(gate_lr=oc.gate_lr, weight_decay=oc.weight_decay, beta1=oc.beta1,
                    beta2=oc.beta2, eps=oc.eps, epochs=oc.epochs, batch_size=oc.batch_size,
                    eta_min=oc.eta_min)
        return flat

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        base = cls().to_flat()
        unknown = set(flat) - set(base)
        if unknown:
            raise KeyError(f"unknown configuration keys: {sorted(unknown)}")
        merged = {**base, **{k: _coerce(base[k], v, k) for k, v in flat.items()}}
        loss = LossConfig(
            beta=merged["beta"], alpha=merged["alpha"], gamma=merged["gamma"],
            lambdas={a: merged[f"lambda_{a}"] for a in TASKS},
            task_weights={a: merged[f"w_{a}"] for a in TASKS},
            focal_alpha_on=merged["focal_alpha_on"],
        )
        optim = OptimConfig(
            base_lrs={g: merged[f"lr_{g}"] for g in REFERENCE_LRS},
            weight_decay=merged["weight_decay"], beta1=merged["beta1"], beta2=merged["beta2"],
            eps=merged["eps"], epochs=merged["epochs"], batch_size=merged["batch_size"],
            eta_min=merged["eta_min"], gate_lr=merged["gate_lr"],
        )
        top = {f.name: merged[f.name] for f in fields(cls) if f.name not in ("loss", "optim")}
        cfg = cls(loss=loss, optim=optim, **top)
        if cfg.batch_size < 1 or cfg.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        return cfg

    def replace(self, **overrides) -> "RunConfig":
        return RunConfig.from_flat({**self.to_flat(), **overrides})

    def fingerprint(self) -> str:
        return config_fingerprint(self.to_flat())


_FLOAT_KEYS_OPTIONAL = {"gate_lr"}


def _coerce(default, value, key):
    if isinstance(value, str):
        s = value.strip()
        if key in _FLOAT_KEYS_OPTIONAL:
            return None if s.lower() in ("", "none", "null") else float(s)
        if isinstance(default, bool):
            if s.lower() in ("1", "true", "yes", "on"):
                return True
            if s.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"{key}: expected a boolean, got {value!r}")
        if isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
        return s
    if value is None or key in _FLOAT_KEYS_OPTIONAL:
        return value if value is None else float(value)
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(value, bool):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def config_fingerprint(flat: dict) -> str:
    blob = json.dumps(flat, sort_keys=True, separators=(",", ":"), default=repr)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {line_no}: expected key=value, got {raw!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def format_config(flat: dict) -> str:
    lines = []
    for k in sorted(flat):
        v = flat[k]
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# Learning rates and dimensions for desk-scale synthetic runs. The reference
# rates target a pretrained backbone over 30 epochs of millions of instances
# and barely move a freshly initialized embedding bag in a few hundred steps.
#
# Tokens seen once in training (mostly amounts) map to [UNK], otherwise the
# heads memorize flipped labels through them. Gates start near g = 0.018:
# from g = 0.5 the lambda * g^2 gradients dominate the shared embedding early on.
DESK_OVERRIDES = {
    "d": 64,
    "d_g": 32,
    "max_len": 128,
    "min_token_count": 2,
    "gate_bias_init": -4.0,
    "tag_threshold": 1,
    "epochs": 15,
    "batch_size": 64,
    "lr_backbone": 1e-2,
    "lr_tag_head": 5e-2,
    "lr_time_head": 2e-2,
    "lr_scale_head": 2e-2,
    "lr_sign_head": 2e-2,
}


def desk_config(**overrides) -> RunConfig:
    return RunConfig.from_flat({**DESK_OVERRIDES, **overrides})
