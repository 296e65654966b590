"""Command-line front end: ``kglit <command> [options]``.

Every command that writes artifacts also writes one ``manifest.json`` next to
them. Failures print a single ``error: <category>: <message>`` line on stderr
and exit with 2 (usage), 3 (domain), 4 (I/O or parse) or 5 (numerical).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, kga
from .datagen import ABLATION_KINDS, AblationSpec, SyntheticSpec, apply_ablation, generate_fixture, synth_enrich
from .errors import CheckpointMismatchError, ConfigError, KGLitError
from .evaluation import (
    METRICS,
    aggregate_rows,
    aggregate_runs,
    evaluate,
    has_synthetic_vocab,
    read_report,
    synthetic_acc,
    write_aggregate_csv,
    write_report,
)
from .graph import build_feature_matrix, load_dataset, save_dataset
from .manifest import RunManifest, checksums
from .models import MODELS
from .models.base import config_hash, load_checkpoint, save_checkpoint
from .training import TrainConfig, read_config, train, write_config

HIERARCHY_NAME = "hierarchy.tsv"

log = logging.getLogger("kglit")

CHECKPOINT_NAME = "checkpoint.npz"
REPORT_NAME = "report.json"

# CLI spelling -> transform name
ABLATE_KINDS = {
    "random": "random-literal",
    "values-only": "random-literal-values-only",
    "existence": "existence",
    "relational": "relational-reduce",
}
assert set(ABLATE_KINDS.values()) == set(ABLATION_KINDS)


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _write_dataset(g, directory, manifest: RunManifest, extra_outputs=()):
    directory = _out_dir(directory)
    written = list(save_dataset(g, directory).values())
    manifest.finish(written + list(extra_outputs)).write(directory)
    return directory


# ---------------------------------------------------------------------------
# Commands


def cmd_fixture(args):
    params = dict(
        n_entities=args.entities, n_relations=args.relations, n_triples=args.triples,
        n_attrs=args.attrs, seed=args.seed,
    )
    g = generate_fixture(**params)
    m = RunManifest(command="fixture", config=params, seeds={"fixture": args.seed})
    _write_dataset(g, args.output, m)
    print(f"wrote {g.n_entities} entities, {len(g.all_relational)} triples to {args.output}")


def cmd_prepare_synthetic(args):
    g = load_dataset(args.input)
    spec = SyntheticSpec(seed=args.seed, threshold=args.threshold, entity_filter_relation=args.entity_filter_relation)
    out = synth_enrich(g, spec)
    config = {"threshold": args.threshold, "entity_filter_relation": args.entity_filter_relation,
              "split_fractions": list(spec.split_fractions)}
    m = RunManifest(command="prepare-synthetic", config=config, seeds={"synthetic": args.seed},
                    inputs=checksums([args.input]))
    _write_dataset(out, args.output, m)
    print(f"enriched {len(out.attributive)} entities into {args.output}")


def cmd_ablate(args):
    kind = ABLATE_KINDS[args.kind]
    if kind != "relational-reduce" and args.alpha is not None:
        raise ConfigError("--alpha only applies to --kind relational")
    if kind == "relational-reduce" and args.alpha is None:
        raise ConfigError("--kind relational requires --alpha")
    spec = AblationSpec(kind=kind, seed=args.seed, alpha=args.alpha, include_eval_splits=args.include_eval_splits)
    g = load_dataset(args.input)
    out = apply_ablation(g, spec)
    config = {"kind": kind, "alpha": args.alpha, "include_eval_splits": args.include_eval_splits}
    m = RunManifest(command="ablate", config=config, seeds={"ablation": args.seed}, inputs=checksums([args.input]))
    _write_dataset(out, args.output, m)
    print(f"{kind}: {len(out.train)} train triples, {len(out.attributive)} literals in {args.output}")


def cmd_kga(args):
    g = load_dataset(args.input)
    hierarchies = kga.fit_all(g, args.branching, args.depth)
    out = kga.augment(g, hierarchies)
    directory = _out_dir(args.output)
    sidecar = directory / HIERARCHY_NAME
    kga.dump_hierarchies(hierarchies, sidecar)
    config = {"branching": args.branching, "depth": args.depth}
    m = RunManifest(command="kga", config=config, seeds={}, inputs=checksums([args.input]))
    _write_dataset(out, directory, m, extra_outputs=[sidecar])
    print(f"augmented {len(hierarchies)} attributes; {out.n_entities} entities in {args.output}")


def _train_config(args) -> TrainConfig:
    overrides = read_config(args.config) if args.config else {}
    for item in args.set or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    for key in ("epochs", "seed", "embedding_dim", "learning_rate", "batch_size", "patience"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    fields = TrainConfig.__dataclass_fields__
    typed = {}
    for key, value in overrides.items():
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        cast = {"int": int, "float": float, "str": str}[fields[key].type]
        try:
            typed[key] = cast(value)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {value!r}") from None
    augmented = (Path(args.dataset) / HIERARCHY_NAME).exists()
    return TrainConfig.for_model(args.model, augmented=augmented, **typed)


def cmd_train(args):
    cfg = _train_config(args)
    g = load_dataset(args.dataset)
    feats = build_feature_matrix(g, cfg.seed) if g.n_attrs else None
    if MODELS[args.model].uses_features and feats is None:
        raise ConfigError(f"model {args.model} needs literals but {args.dataset} has none")

    def progress(epoch, loss):
        log.info("epoch %d loss %.6f", epoch, loss)

    model, report = train(g, feats, args.model, cfg, progress=progress)
    out = _out_dir(args.output)
    ckpt = out / CHECKPOINT_NAME
    config = {"model_variant": args.model, "train": cfg.to_dict(), "dataset_hash": g.content_hash(),
              "best_epoch": report.best_epoch}
    save_checkpoint(ckpt, model, config)
    report.checkpoint_path = str(ckpt)
    write_config(cfg, out / "config.txt")
    with open(out / "train_report.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    m = RunManifest(command="train", config={"model": args.model, **cfg.to_dict()},
                    seeds={"train": cfg.seed, "features": cfg.seed}, inputs=checksums([args.dataset]))
    m.finish([ckpt, out / "config.txt"]).write(out)
    print(f"{args.model}: best epoch {report.best_epoch}, validation MRR {report.best_mrr}, saved {ckpt}")


def cmd_eval(args):
    ckpt = Path(args.checkpoint)
    if ckpt.is_dir():
        ckpt = ckpt / CHECKPOINT_NAME
    model, config = load_checkpoint(ckpt)
    g = load_dataset(args.dataset)
    digest = g.content_hash()
    if config.get("dataset_hash") != digest:
        raise CheckpointMismatchError(f"{ckpt} was trained on dataset {config.get('dataset_hash')}, not {digest}")
    seed = int(config["train"]["seed"])
    feats = build_feature_matrix(g, seed) if g.n_attrs else None
    report = evaluate(model, g, args.split, feats)
    if has_synthetic_vocab(g):
        report.acc = synthetic_acc(model, g, feats, split=args.split)
    model_cfg = {k: v for k, v in config.items() if k != "model"}
    extra = {
        "model": config["model_variant"],
        "dataset_hash": digest,
        "config_hash": config_hash(config),
        "split": args.split,
        "seed": seed,
        "best_epoch": config.get("best_epoch"),
        "train_config": model_cfg["train"],
    }
    out = Path(args.output)
    if out.suffix != ".json":
        out = _out_dir(out) / REPORT_NAME
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_report(report, out, extra)
    m = RunManifest(command="eval", config={"split": args.split, "checkpoint": str(ckpt)},
                    seeds={"train": seed}, inputs=checksums([ckpt, args.dataset]))
    m.finish([out]).write(out.parent)
    shown = {k: round(v, 4) for k, v in report.to_dict().items() if k in METRICS or k == "acc"}
    print(json.dumps(shown))


def cmd_report(args):
    groups: dict[tuple, list] = {}
    for path in args.reports:
        rep, raw = read_report(path)
        key = (raw.get("model", ""), raw.get("dataset_hash", "")[:12], args.variant or "")
        groups.setdefault(key, []).append(rep)
    rows = []
    for (model, dataset, variant), reps in sorted(groups.items()):
        rows.extend(aggregate_rows(aggregate_runs(reps), model=model, dataset=dataset, variant=variant))
    out = Path(args.output)
    if out.suffix != ".csv":
        out = _out_dir(out) / "aggregate.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(rows, out)
    m = RunManifest(command="report", config={"variant": args.variant, "n_reports": len(args.reports)},
                    seeds={}, inputs=checksums(args.reports))
    m.finish([out]).write(out.parent)
    print(f"aggregated {len(args.reports)} reports into {len(groups)} groups: {out}")


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kglit", description="Knowledge-graph embeddings with numerical literals.")
    p.add_argument("--version", action="version", version=f"kglit {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("fixture", help="generate a random graph with literals")
    s.add_argument("--output", required=True)
    s.add_argument("--entities", type=int, default=2000)
    s.add_argument("--relations", type=int, default=20)
    s.add_argument("--triples", type=int, default=20000)
    s.add_argument("--attrs", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_fixture)

    s = sub.add_parser("prepare-synthetic", help="replace literals by the synthetic class task")
    s.add_argument("--input", required=True, help="dataset directory")
    s.add_argument("--output", required=True)
    s.add_argument("--threshold", type=float, default=0.5)
    s.add_argument("--entity-filter-relation", default=None,
                   help="only enrich subjects of this relation (default: all entities)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_prepare_synthetic)

    s = sub.add_parser("ablate", help="literal or relational ablation")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--kind", required=True, choices=sorted(ABLATE_KINDS))
    s.add_argument("--alpha", type=float, default=None, help="fraction of relational triples to remove")
    s.add_argument("--include-eval-splits", action="store_true", help="also reduce valid/test")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("kga", help="turn literals into quantile-bin entities")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--branching", type=int, default=4)
    s.add_argument("--depth", type=int, default=3)
    s.set_defaults(func=cmd_kga)

    s = sub.add_parser("train", help="train a model and save the best checkpoint")
    s.add_argument("--model", required=True, choices=sorted(MODELS))
    s.add_argument("--dataset", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--config", help="key = value file of TrainConfig fields")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config field")
    s.add_argument("--epochs", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--embedding-dim", dest="embedding_dim", type=int)
    s.add_argument("--learning-rate", dest="learning_rate", type=float)
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--patience", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="filtered ranking metrics (and Acc on synthetic data)")
    s.add_argument("--checkpoint", required=True, help="checkpoint file or training output directory")
    s.add_argument("--dataset", required=True)
    s.add_argument("--output", required=True, help="report.json path or directory")
    s.add_argument("--split", default="test", choices=("valid", "test"))
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="mean/std over report files")
    s.add_argument("reports", nargs="+")
    s.add_argument("--output", required=True, help="aggregate.csv path or directory")
    s.add_argument("--variant", default="")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except KGLitError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
