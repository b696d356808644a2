"""Command-line entry point: ``norakit <subcommand> [options]``.

Configuration layers, lowest first: built-in defaults (the reference
hyperparameters), an optional preset, a ``key = value`` config file, then
flags. Every run that trains writes the effective configuration next to its
outputs. Exit codes: 0 ok, 1 usage, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from pathlib import Path

import numpy as np

from .baselines import CoTeachingConfig, MixupConfig, train_coteaching, train_mixup
from .config import DESK_OVERRIDES, RunConfig, format_config, read_config_file
from .dataset import (
    TASKS,
    SplitSet,
    read_instances,
    reduce_tag_vocabulary,
    split_statistics,
    write_instances,
)
from .encoder import read_vector_file
from .errors import DataError, KTooLarge, NoraError
from .metrics import MISSING, evaluate_tasks, side_by_side_report
from .noiselab import (
    DEFAULT_TOP_NS,
    FlipMask,
    NoiseSpec,
    gate_noise_separation,
    gate_rank_report,
    generate_synthetic_corpus,
    inject_noise,
)
from .npk import EmbeddingSet, NpkConfig, filter_subset, npk_scores
from .trainer import GateLog, Model, TrainResult, embed, predict, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
PRESETS = {"reference": {}, "desk": DESK_OVERRIDES}
SPLIT_FILES = ("train.jsonl", "valid.jsonl", "test.jsonl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this tool reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {v}")
    return v


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {v}")
    return v


# --------------------------------------------------------------------------
# shared option groups


def _add_data_args(p, required_train=True):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="directory holding train/valid/test.jsonl")
    g.add_argument("--train", help="training split (JSONL)")
    g.add_argument("--valid", help="validation split (JSONL)")
    g.add_argument("--test", help="test split (JSONL)")


def _add_config_args(p):
    g = p.add_argument_group("configuration")
    g.add_argument("--preset", choices=sorted(PRESETS), default="reference",
                   help="starting values before the config file (default: reference)")
    g.add_argument("--config", help="key = value file")
    g.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    g.add_argument("--seed", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=_positive_int)
    g.add_argument("--tag-threshold", type=int)
    g.add_argument("--gate-lr", type=float)
    g.add_argument("--focal-alpha-on", choices=("minority", "majority"))
    g.add_argument("--macro-include-empty", action="store_true", default=None)
    g.add_argument("--external", help="precomputed (h_cls, h_span) vectors per instance id")


def _add_common(p):
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=_positive_int,
                   help="worker threads where supported (default: $NORA_KIT_THREADS or 1)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="norakit", description="Noise-robust multi-task numeric entity tagging.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("validate", help="check a dataset and print label statistics")
    _add_data_args(p)
    p.add_argument("--tag-threshold", type=int, default=1000)
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-instances", type=_positive_int, default=2000)
    p.add_argument("--tag-classes", type=int, default=10)
    p.add_argument("--vocab-size", type=int, default=200)
    _add_common(p)

    p = sub.add_parser("inject", help="flip labels symmetrically and write the flip mask")
    _add_data_args(p)
    for a in TASKS:
        p.add_argument(f"--rho-{a}", type=_rate, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--flip-eval", action="store_true", help="also flip the test split")
    _add_common(p)

    for name, help_text in (("train", "train the gated model"),
                            ("baseline-coteach", "train the Co-teaching baseline"),
                            ("baseline-mixup", "train the Mixup baseline")):
        p = sub.add_parser(name, help=help_text)
        _add_data_args(p)
        _add_config_args(p)
        if name == "train":
            p.add_argument("--no-gates", action="store_true", help="gate-disabled control")
        if name == "baseline-coteach":
            p.add_argument("--forget-rate", type=float, default=0.2)
            p.add_argument("--ramp-epochs", type=_positive_int, default=5)
            p.add_argument("--seed2", type=int)
        if name == "baseline-mixup":
            p.add_argument("--mixup-alpha", type=float, default=0.2)
        p.add_argument("--method-name", help="row label in the metrics file")
        _add_common(p)

    p = sub.add_parser("predict", help="argmax predictions from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="instances (JSONL)")
    p.add_argument("--external")
    _add_common(p)

    p = sub.add_parser("eval", help="score a checkpoint or a predictions file against gold labels")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--gold", required=True, help="instances with gold labels (JSONL)")
    p.add_argument("--predictions", help="CSV written by predict (default: run the model)")
    p.add_argument("--ids", help="restrict to the ids listed in this file, one per line")
    p.add_argument("--setting", default="unfiltered")
    p.add_argument("--method", default="nora")
    p.add_argument("--external")
    p.add_argument("--macro-include-empty", action="store_true")
    _add_common(p)

    p = sub.add_parser("npk", help="neighborhood prior-adjusted KNN filtering")
    p.add_argument("--input", required=True, help="instances supplying the labels (JSONL)")
    p.add_argument("--embeddings", help="vector file: id then d floats per line")
    p.add_argument("--checkpoint", help="embed the instances with this model instead")
    p.add_argument("--which", choices=("cls", "span"), default="cls")
    p.add_argument("--k", type=_positive_int, default=50)
    p.add_argument("--retain", type=_fraction, default=0.90)
    p.add_argument("--epsilon", type=float, default=1e-8)
    p.add_argument("--task", choices=TASKS, default="tag")
    _add_common(p)

    p = sub.add_parser("gate-report", help="top-N consistency table and gate/noise separation")
    p.add_argument("--gate-log", required=True)
    p.add_argument("--flip-mask")
    p.add_argument("--epoch", type=int)
    p.add_argument("--top-n", default=",".join(map(str, DEFAULT_TOP_NS)))
    p.add_argument("--strict", action="store_true", help="fail when a top-N exceeds the log")
    _add_common(p)

    p = sub.add_parser("report", help="assemble metrics files into side-by-side tables")
    p.add_argument("metrics", nargs="+", help="CSV files with setting,method,task,... rows")
    _add_common(p)
    return parser


# --------------------------------------------------------------------------
# helpers


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("NORA_KIT_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"NORA_KIT_THREADS must be an integer, got {env!r}") from None
    return 1


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str):
    path.write_text(text, encoding="utf-8", newline="")


def load_splits(args) -> SplitSet:
    paths = {"train": args.train, "valid": args.valid, "test": args.test}
    if args.data:
        for split, fname in zip(paths, SPLIT_FILES):
            cand = Path(args.data) / fname
            if paths[split] is None and cand.exists():
                paths[split] = str(cand)
    if paths["train"] is None:
        raise UsageError("a training split is required (--data DIR or --train FILE)")
    loaded = {}
    for split, path in paths.items():
        if path is None:
            loaded[split] = []
            continue
        if not Path(path).exists():
            raise DataError(f"{split} file not found: {path}")
        loaded[split] = read_instances(path)
    return SplitSet(loaded["train"], loaded["valid"], loaded["test"],
                    provenance=" ".join(f"{k}={v}" for k, v in paths.items() if v))


def effective_config(args) -> RunConfig:
    flat = dict(PRESETS[args.preset])
    if args.config:
        if not Path(args.config).exists():
            raise UsageError(f"config file not found: {args.config}")
        flat.update(read_config_file(args.config))
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        flat[k.strip()] = v.strip()
    for key, attr in (("seed", "seed"), ("epochs", "epochs"), ("batch_size", "batch_size"),
                      ("tag_threshold", "tag_threshold"), ("gate_lr", "gate_lr"),
                      ("focal_alpha_on", "focal_alpha_on"),
                      ("macro_include_empty", "macro_include_empty")):
        v = getattr(args, attr, None)
        if v is not None:
            flat[key] = v
    if getattr(args, "no_gates", False):
        flat["gated"] = False
    try:
        return RunConfig.from_flat(flat)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"bad configuration: {exc}") from None


def _metrics_rows(setting: str, method: str, res: dict) -> str:
    return side_by_side_report({setting: {method: res}})[1]


def _score_split(model: Model, instances, external, setting, method, include_empty) -> tuple:
    p = predict(model, instances, external)
    res = evaluate_tasks(p.golds, p.preds, model.spaces.n_classes, include_empty)
    return res, _metrics_rows(setting, method, res), p


def _write_training_outputs(out: Path, cfg: RunConfig, result: TrainResult, splits: SplitSet,
                            external, method: str, extra_log: list = ()):
    flat = cfg.to_flat()
    _write(out / "effective_config.txt",
           f"# fingerprint {cfg.fingerprint()}\n" + format_config(flat))
    result.model.save(out / "final.ckpt")
    if result.best_model is not None:
        result.best_model.save(out / "best.ckpt")
    _write(out / "steps.csv", result.step_csv())
    _write(out / "epochs.csv", result.epoch_csv())
    if cfg.gate_log:
        _write(out / "gate_log.csv", result.gate_log.to_csv())
    log = [f"provenance: {splits.provenance}", f"fingerprint: {cfg.fingerprint()}",
           "effective config:", *("  " + line for line in format_config(flat).splitlines())]
    for e, loss in enumerate(result.epoch_train_loss, 1):
        log.append(f"epoch {e}: train loss {loss!r}")
    log.append(f"best epoch (validation tag macro F1): {result.best_epoch}")
    log.extend(extra_log)
    if splits.test:
        model = result.model
        res, rows, p = _score_split(model, splits.test, external, "unfiltered", method,
                                    cfg.macro_include_empty)
        _write(out / "test_metrics.csv", rows)
        log.append("test metrics (final checkpoint):")
        log.extend("  " + line for line in side_by_side_report({"test": {method: res}})[0].splitlines())
        if p.skipped:
            log.append(f"skipped {len(p.skipped)} test instances")
    _write(out / "run.log", "\n".join(log) + "\n")
    return "\n".join(log)


def _read_external(args):
    path = getattr(args, "external", None)
    if not path:
        return None
    if not Path(path).exists():
        raise DataError(f"external embedding file not found: {path}")
    table = read_vector_file(path)
    widths = {len(v) for v in table.values()}
    if len(widths) != 1 or next(iter(widths)) % 2:
        raise DataError("external vectors must all have the same even width (h_cls then h_span)")
    return table


def _load_model(path) -> Model:
    if not Path(path).exists():
        raise DataError(f"checkpoint not found: {path}")
    return Model.load(path)


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    splits = load_splits(args)
    spaces = reduce_tag_vocabulary(splits.train, args.tag_threshold)
    stats = split_statistics(splits, spaces)
    text = stats.to_text()
    print(f"train={len(splits.train)} valid={len(splits.valid)} test={len(splits.test)} "
          f"tag classes={spaces.n_classes['tag']}")
    print(text, end="")
    if args.out:
        out = _out_dir(args)
        _write(out / "stats.txt", text)
        _write(out / "stats.csv", stats.to_csv())
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        splits = generate_synthetic_corpus(args.seed, args.n_instances, args.tag_classes,
                                           args.vocab_size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args)
    for (split, insts), fname in zip(splits.items(), SPLIT_FILES):
        write_instances(out / fname, insts)
    _write(out / "provenance.txt", splits.provenance + "\n")
    print(f"wrote {len(splits.train)}/{len(splits.valid)}/{len(splits.test)} instances to {out}")
    return EXIT_OK


def cmd_inject(args) -> int:
    splits = load_splits(args)
    spec = NoiseSpec({a: getattr(args, f"rho_{a}") for a in TASKS}, seed=args.noise_seed,
                     flip_eval=args.flip_eval)
    noisy, mask = inject_noise(splits, spec)
    out = _out_dir(args)
    for (split, insts), fname in zip(noisy.items(), SPLIT_FILES):
        if insts:
            write_instances(out / fname, insts)
    _write(out / "flip_mask.csv", mask.to_csv())
    _write(out / "provenance.txt", noisy.provenance + "\n")
    print(f"flipped {mask.n_flipped} labels; mask written to {out / 'flip_mask.csv'}")
    return EXIT_OK


def _prepare_training(args):
    cfg = effective_config(args)
    splits = load_splits(args)
    spaces = reduce_tag_vocabulary(splits.train, cfg.tag_threshold)
    return cfg, splits, spaces, _read_external(args)


def cmd_train(args) -> int:
    cfg, splits, spaces, external = _prepare_training(args)
    result = train(splits, spaces, cfg, external=external,
                   checkpoint_dir=str(_out_dir(args)) if cfg.checkpoint_every else None)
    method = args.method_name or ("nora" if cfg.gated else "control")
    print(_write_training_outputs(_out_dir(args), cfg, result, splits, external, method))
    return EXIT_OK


def cmd_coteach(args) -> int:
    cfg, splits, spaces, external = _prepare_training(args)
    try:
        ct = CoTeachingConfig(args.forget_rate, args.ramp_epochs, None, args.seed2)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = train_coteaching(splits, spaces, cfg, ct, external=external)
    out = _out_dir(args)
    res.net2.save(out / "net2.ckpt")
    extra = [f"epoch {e}: keep rate {r!r}, kept {k}" for e, r, k in res.kept_per_epoch]
    print(_write_training_outputs(out, res.net1.model.config, res.net1, splits, external,
                                  args.method_name or "coteaching", extra))
    return EXIT_OK


def cmd_mixup(args) -> int:
    cfg, splits, spaces, external = _prepare_training(args)
    try:
        mx = MixupConfig(args.mixup_alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg.batch_size < 2:
        raise UsageError("mixup needs batch_size >= 2")
    res = train_mixup(splits, spaces, cfg, mx, external=external)
    print(_write_training_outputs(_out_dir(args), res.model.config, res, splits, external,
                                  args.method_name or "mixup"))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = _load_model(args.checkpoint)
    if not Path(args.input).exists():
        raise DataError(f"input file not found: {args.input}")
    p = predict(model, read_instances(args.input), _read_external(args))
    out = _out_dir(args)
    _write(out / "predictions.csv", p.to_csv(model.spaces))
    if p.skipped:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "reason"])
        w.writerows(p.skipped)
        _write(out / "skipped.csv", buf.getvalue())
        print(f"skipped {len(p.skipped)} instances (see skipped.csv)", file=sys.stderr)
    print(f"predicted {len(p.ids)} instances")
    return EXIT_OK


def _read_ids(path) -> list:
    if not Path(path).exists():
        raise DataError(f"id file not found: {path}")
    return [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]


def _predictions_from_csv(path, model: Model, ids: list) -> dict:
    if not Path(path).exists():
        raise DataError(f"predictions file not found: {path}")
    table = {a: {} for a in TASKS}
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            try:
                table[r["task"]][r["id"]] = int(r["pred"])
            except (KeyError, ValueError):
                raise DataError(f"unreadable predictions row: {r}") from None
    preds = {}
    for a in TASKS:
        missing = [i for i in ids if i not in table[a]]
        if missing:
            raise DataError(f"no {a} prediction for {missing[0]!r}")
        preds[a] = np.array([table[a][i] for i in ids], dtype=np.int64)
    return preds


def cmd_eval(args) -> int:
    model = _load_model(args.checkpoint)
    if not Path(args.gold).exists():
        raise DataError(f"gold file not found: {args.gold}")
    gold = read_instances(args.gold)
    if args.ids:
        keep = set(_read_ids(args.ids))
        gold = [i for i in gold if i.id in keep]
    external = _read_external(args)
    p = predict(model, gold, external)
    preds = p.preds
    if args.predictions:
        preds = _predictions_from_csv(args.predictions, model, p.ids)
    res = evaluate_tasks(p.golds, preds, model.spaces.n_classes, args.macro_include_empty)
    text, rows = side_by_side_report({args.setting: {args.method: res}})
    print(text)
    if args.out:
        _write(_out_dir(args) / "metrics.csv", rows)
    return EXIT_OK


def cmd_npk(args) -> int:
    if bool(args.embeddings) == bool(args.checkpoint):
        raise UsageError("give exactly one of --embeddings or --checkpoint")
    if not Path(args.input).exists():
        raise DataError(f"input file not found: {args.input}")
    instances = read_instances(args.input)
    if args.checkpoint:
        model = _load_model(args.checkpoint)
        spaces = model.spaces
        ids, vecs = embed(model, instances, args.which)
    else:
        if not Path(args.embeddings).exists():
            raise DataError(f"embedding file not found: {args.embeddings}")
        spaces = reduce_tag_vocabulary(instances, 1)
        table = read_vector_file(args.embeddings)
        missing = [i.id for i in instances if i.id not in table]
        if missing:
            raise DataError(f"no embedding for {missing[0]!r} ({len(missing)} missing)")
        ids = [i.id for i in instances]
        if len({len(table[i]) for i in ids}) != 1:
            raise DataError("embedding vectors have differing widths")
        vecs = np.array([table[i] for i in ids])
    by_id = {i.id: i for i in instances}
    labels = [spaces.label_index(by_id[i], args.task) for i in ids]
    try:
        cfg = NpkConfig(args.k, args.epsilon, args.retain, args.task)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if np.any(np.linalg.norm(vecs, axis=1) == 0):
        raise DataError("zero-length embedding vector cannot be normalized")
    emb = EmbeddingSet.normalized(ids, vecs, labels)
    try:
        scores = npk_scores(emb, cfg, spaces.n_classes[args.task], threads=_threads(args))
    except KTooLarge as exc:
        raise DataError(str(exc)) from None
    result = filter_subset(scores, cfg.retain_fraction)
    out = _out_dir(args)
    _write(out / "retained.txt", "".join(i + "\n" for i in result.retained))
    _write(out / "audit.csv", result.audit_csv(scores, list(spaces.class_names(args.task))))
    print(f"retained {len(result.retained)} of {len(ids)} ({args.task}, k={cfg.k})")
    return EXIT_OK


def cmd_gate_report(args) -> int:
    if not Path(args.gate_log).exists():
        raise DataError(f"gate log not found: {args.gate_log}")
    try:
        top_ns = tuple(int(x) for x in args.top_n.split(",") if x.strip())
    except ValueError:
        raise UsageError(f"--top-n expects comma-separated integers, got {args.top_n!r}") from None
    try:
        log = GateLog.from_csv(Path(args.gate_log).read_text(encoding="utf-8"))
    except (KeyError, ValueError) as exc:
        raise DataError(f"unreadable gate log: {exc}") from None
    if not log.rows:
        raise DataError("gate log is empty")
    report = gate_rank_report(log, None, top_ns, args.epoch, strict=args.strict)
    text = report.to_text()
    sep_rows = []
    if args.flip_mask:
        if not Path(args.flip_mask).exists():
            raise DataError(f"flip mask not found: {args.flip_mask}")
        mask = FlipMask.from_csv(Path(args.flip_mask).read_text(encoding="utf-8"))
        train_mask = FlipMask([r for r in mask.rows if r[0] == "train"])
        lines = ["", "gate vs injected noise:"]
        for a in TASKS:
            if not any(r[2] == a for r in train_mask.rows):
                continue
            try:
                s = gate_noise_separation(log, train_mask, a, report.epoch)
            except KeyError as exc:
                raise DataError(str(exc)) from None
            sep_rows.append(s)
            fmt = lambda x: MISSING if x is None else f"{x:.4f}"
            lines.append(f"  {a:<6} n={s['n']} flipped={s['n_flipped']} mean g={fmt(s['task_mean_g'])} "
                         f"flipped={fmt(s['mean_g_flipped'])} clean={fmt(s['mean_g_clean'])} "
                         f"AUROC={fmt(s['auroc'])}")
        text += "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = _out_dir(args)
        _write(out / "gate_report.txt", text)
        _write(out / "gate_report.csv", report.to_csv())
        if sep_rows:
            buf = io.StringIO()
            keys = ["task", "n", "n_flipped", "task_mean_g", "mean_g_flipped", "mean_g_clean", "auroc"]
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(keys)
            for s in sep_rows:
                w.writerow(["" if s[k] is None else (repr(s[k]) if isinstance(s[k], float) else s[k])
                            for k in keys])
            _write(out / "gate_separation.csv", buf.getvalue())
    return EXIT_OK


def cmd_report(args) -> int:
    results: dict = {}
    for path in args.metrics:
        if not Path(path).exists():
            raise DataError(f"metrics file not found: {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            for r in csv.DictReader(fh):
                try:
                    cell = None if r["accuracy"] == "" else {
                        m: float(r[m]) for m in ("accuracy", "macro_f1", "weighted_f1")}
                    results.setdefault(r["setting"], {}).setdefault(r["method"], {})[r["task"]] = cell
                except (KeyError, ValueError):
                    raise DataError(f"{path}: unreadable metrics row {r}") from None
    text, rows = side_by_side_report(results)
    print(text)
    if args.out:
        out = _out_dir(args)
        _write(out / "report.txt", text + "\n")
        _write(out / "report.csv", rows)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "synth": cmd_synth,
    "inject": cmd_inject,
    "train": cmd_train,
    "baseline-coteach": cmd_coteach,
    "baseline-mixup": cmd_mixup,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "npk": cmd_npk,
    "gate-report": cmd_gate_report,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"norakit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"norakit {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NoraError, ValueError, OSError) as exc:
        print(f"norakit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def entry() -> None:
    sys.exit(main())
