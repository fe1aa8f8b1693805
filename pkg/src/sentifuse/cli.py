"""Command-line entry point: ``sentifuse <prepare|train|eval|project|gradcheck>``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import data as D
from .autodiff import corrupt_backward
from .errors import ConfigError, ContractError, SentifuseError
from .gradcheck import run_suite
from .models import (
    Model,
    build,
    build_embedding_head,
    default_classes,
    load_checkpoint,
    preset,
    save_checkpoint,
)
from .text import Vocabulary, build_vocabulary, encode_sequence, tokenize
from .training import Examples, TrainConfig, evaluate, project_2d, train

log = logging.getLogger("sentifuse")

SPLITS = ("train", "val", "test")
CONFIG_KEYS = {"arch", "two_class", "glove", "text_checkpoint", "init_checkpoint"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sentifuse", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--data", help="dataset file (prepare), split directory (train) or split file")
        p.add_argument("--out", help="output directory or file")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("prepare", help="filter, label, balance, split and encode a dataset")
    common(p)
    p.add_argument("--features", help="binary feature file for features_ref records")
    p.add_argument("--two-class", action="store_true", help="drop neutral records")
    p.add_argument("--no-balance", action="store_true")

    p = sub.add_parser("train", help="train a model from a JSON config")
    common(p)
    p.add_argument("--config")
    p.add_argument("--two-class", action="store_true", default=None)
    p.add_argument("--arch")
    p.add_argument("--loss", choices=["xent", "cosine", "hinge", "mse"])
    p.add_argument("--optimizer", choices=["sgd", "rmsprop"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)

    for name, text in (("eval", "print metrics JSON for a split"), ("project", "write 2-D plot data as CSV")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and loss")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--corrupt", action="append", default=[], help=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


# ---------------------------------------------------------------------------
# prepare


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def cmd_prepare(args) -> int:
    if not args.data or not args.out:
        raise ConfigError("prepare needs --data and --out")
    seed = args.seed or 0
    records = D.load_dataset(args.data, args.features)
    n_loaded = len(records)
    records = D.label_datapoints(D.filter_datapoints(records))
    if args.two_class:
        records = D.drop_neutral(records)
    if not args.no_balance:
        records = D.balance_classes(records, seed)
    parts = D.split_dataset(records, D.SplitConfig(seed=seed))
    token_lists = [[tokenize(dp.title, dp.description) for dp in part] for part in parts]
    vocab = build_vocabulary(token_lists[0])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab.save(out / "vocab.tsv")
    for name, part, toks in zip(SPLITS, parts, token_lists):
        rows = []
        for dp, tokens in zip(part, toks):
            enc = encode_sequence(vocab, tokens)
            row = D.datapoint_to_json(dp)
            row["ids"] = enc.ids.tolist()
            row["true_length"] = enc.true_length
            rows.append(row)
        _write_jsonl(out / f"{name}.jsonl", rows)
    summary = {
        "loaded": n_loaded,
        "kept": len(records),
        "splits": {n: len(p) for n, p in zip(SPLITS, parts)},
        "vocabulary": len(vocab),
        "classes": 2 if args.two_class else 3,
    }
    (out / "prepare.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# split files -> model inputs


def read_split(path) -> List[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise D.ParseError(f"{path}: invalid JSON ({exc.msg})", lineno) from None
    return rows


def examples_from_rows(rows, model: Model) -> Examples:
    index = {c: i for i, c in enumerate(model.classes)}
    missing = sorted({r.get("label") for r in rows} - set(index), key=str)
    if missing:
        raise ContractError(f"split holds labels {missing} outside model classes {model.classes}")
    labels = [index[r["label"]] for r in rows]
    features = np.asarray([r["features"] for r in rows], dtype=np.float64)
    ids = np.asarray([r["ids"] for r in rows], dtype=np.int64)
    kind = model.spec.input_kind
    inputs = features if kind == "image_features" else ids if kind == "token_sequence" else (ids, features)
    return Examples(inputs, labels, model.classes)


# ---------------------------------------------------------------------------
# train


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    overrides = {
        "arch": args.arch, "loss": args.loss, "optimizer": args.optimizer, "epochs": args.epochs,
        "batch_size": args.batch_size, "lr": args.lr, "momentum": args.momentum, "seed": args.seed,
        "two_class": args.two_class,
    }
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def _build_model(cfg: dict, data_dir: Path, train_rows) -> Model:
    arch = cfg.get("arch", "table2_model2")
    two_class = cfg.get("two_class")
    if two_class is None:
        two_class = not any(r.get("label") == "neutral" for r in train_rows)
    k = 2 if two_class else 3
    seed = cfg.get("seed", 0)
    image_dim = len(train_rows[0]["features"])
    if arch == "table8_text_bilstm":
        vocab = Vocabulary.load(data_dir / "vocab.tsv")
        spec = preset(arch, vocab_size=len(vocab), classes=k)
    elif arch in ("table8_concat", "table8_best_gated", "gated_best"):
        spec = preset(arch, image_dim=image_dim, classes=k)
    else:
        spec = preset(arch, input_dim=image_dim, classes=k)

    encoder = None
    if spec.input_kind == "dual":
        if "text_checkpoint" not in cfg:
            raise ConfigError(f"{arch} needs 'text_checkpoint' naming a trained text model")
        encoder = load_checkpoint(cfg["text_checkpoint"])

    labels = None
    if spec.head.kind == "embedding":
        if "glove" not in cfg:
            raise ConfigError(f"{arch} has an embedding head and needs a 'glove' word-vector file")
        labels = D.load_glove(cfg["glove"], spec.head.size)

    if "init_checkpoint" in cfg:
        base = load_checkpoint(cfg["init_checkpoint"])
        if spec.head.kind == "embedding" and base.head_kind == "softmax":
            return build_embedding_head(base, spec.head.size, seed=seed, label_embeddings=labels)
        if base.spec != spec:
            raise ConfigError("init_checkpoint architecture differs from the requested one")
        base.label_embeddings = labels or base.label_embeddings
        return base
    return build(spec, seed, classes=default_classes(k), text_encoder=encoder, label_embeddings=labels)


def cmd_train(args) -> int:
    if not args.data or not args.out:
        raise ConfigError("train needs --data and --out")
    cfg = _load_config(args)
    unknown = set(cfg) - CONFIG_KEYS - set(TrainConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    tcfg = TrainConfig.from_dict({k: v for k, v in cfg.items() if k not in CONFIG_KEYS})
    data_dir = Path(args.data)
    rows = {name: read_split(data_dir / f"{name}.jsonl") for name in ("train", "val")}
    if not rows["train"]:
        raise ContractError("training split is empty")
    model = _build_model(cfg, data_dir, rows["train"])
    train_ex = examples_from_rows(rows["train"], model)
    val_ex = examples_from_rows(rows["val"], model) if rows["val"] else None
    result = train(model, train_ex, tcfg, val=val_ex)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "model.sfck", result.model)
    save_checkpoint(out / "best.sfck", result.best_model())
    report = {
        "config": {**cfg, **tcfg.to_dict()},
        "history": result.history,
        "best_epoch": result.best_epoch,
        "final": {"train": evaluate(result.model, train_ex).to_json()},
    }
    if val_ex is not None:
        report["final"]["val"] = evaluate(result.model, val_ex).to_json()
        report["best"] = {"val": evaluate(result.best_model(), val_ex).to_json()}
    (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(json.dumps(report["final"], sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# eval / project / gradcheck


def cmd_eval(args) -> int:
    if not args.data:
        raise ConfigError("eval needs --data naming a split file")
    model = load_checkpoint(args.checkpoint)
    metrics = evaluate(model, examples_from_rows(read_split(args.data), model))
    print(json.dumps(metrics.to_json(), sort_keys=True))
    return 0


def cmd_project(args) -> int:
    if not args.data:
        raise ConfigError("project needs --data naming a split file")
    model = load_checkpoint(args.checkpoint)
    rows = read_split(args.data)
    ex = examples_from_rows(rows, model)
    out = model.forward(ex.inputs)
    vectors = out[0].value if model.head_kind == "embedding" else out[1].value
    meta = [(r.get("folder", r["anp"]), r["label"]) for r in rows]
    table = project_2d(list(vectors), meta)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x", "y", "folder", "label"])
        writer.writerows(table)
    finally:
        if args.out:
            fh.close()
    return 0


def cmd_gradcheck(args) -> int:
    with corrupt_backward(*args.corrupt):
        results = run_suite(seeds=args.seeds, tol=args.tol)
    worst = {}
    for name, _, report in results:
        worst[name] = max(worst.get(name, 0.0), report.worst)
    failed = sorted({name for name, _, r in results if not r.passed})
    for name, value in worst.items():
        print(f"{'FAIL' if name in failed else 'ok':4s} {name:18s} max rel err {value:.3e}")
    print(f"{len(results)} checks, {len(failed)} failing cases")
    return 1 if failed else 0


COMMANDS = {
    "prepare": cmd_prepare,
    "train": cmd_train,
    "eval": cmd_eval,
    "project": cmd_project,
    "gradcheck": cmd_gradcheck,
}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (SentifuseError, OSError, KeyError, ValueError) as exc:
        print(f"sentifuse {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
