"""Runs the full command-line pipeline into a directory and collects its outputs."""

import os
from pathlib import Path

from norakit.cli import main


def run(argv) -> None:
    code = main([str(a) for a in argv])
    if code != 0:
        raise AssertionError(f"norakit {' '.join(map(str, argv))} exited with {code}")


def run_pipeline(root: Path, seed: int = 0, n: int = 300, epochs: int = 2) -> dict:
    """synth -> inject -> train -> npk -> eval -> gate-report -> report.

    Runs inside ``root`` with relative paths, so runs in different
    directories can be compared byte for byte.
    """
    root = Path(root).resolve()
    root.mkdir(parents=True, exist_ok=True)
    here = os.getcwd()
    os.chdir(root)
    try:
        _steps(Path("."), seed, n, epochs)
    finally:
        os.chdir(here)
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _steps(root: Path, seed: int, n: int, epochs: int) -> None:
    clean, noisy, model, npk, ev = (root / s for s in ("clean", "noisy", "model", "npk", "eval"))
    run(["synth", "--seed", seed, "--n-instances", n, "--tag-classes", 4, "--vocab-size", 60,
         "--out", clean])
    run(["inject", "--data", clean, "--rho-tag", 0.2, "--rho-time", 0.2, "--noise-seed", seed,
         "--out", noisy])
    run(["train", "--data", noisy, "--preset", "desk", "--seed", seed, "--epochs", epochs,
         "--set", "d=8", "--set", "d_g=4", "--set", "max_len=64", "--out", model])
    run(["npk", "--input", noisy / "test.jsonl", "--checkpoint", model / "final.ckpt", "--k", 5,
         "--out", npk])
    run(["eval", "--checkpoint", model / "final.ckpt", "--gold", noisy / "test.jsonl",
         "--ids", npk / "retained.txt", "--setting", "npk", "--out", ev])
    run(["gate-report", "--gate-log", model / "gate_log.csv", "--flip-mask", noisy / "flip_mask.csv",
         "--out", root / "gates"])
    run(["report", model / "test_metrics.csv", ev / "metrics.csv", "--out", root / "report"])
