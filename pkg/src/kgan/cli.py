"""Command-line front end: ``kgan train | eval-lp | eval-tc | sample-negatives``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from . import checkpoint as ckpt_io
from .data import DataFormatError, KgDataset, dataset_dir_paths, load_dataset
from .evaluator import (
    classify,
    evaluate_link_prediction,
    fit_thresholds,
    write_rank_dump,
)
from .generator import forward_batch
from .scorers import KINDS
from .tensor import make_rng, sample_categorical_rows
from .trainer import REGIMES, ConfigError, TrainConfig, train

log = logging.getLogger("kgan")

# Optimal settings reported for each benchmark. All use L1; link-prediction sets use
# unif, classification sets use bern. The random regime reuses the gan-scratch values.
PRESETS: dict[str, dict] = {
    "wn18": {
        "common": {"norm": "l1", "strategy": "unif"},
        "gan-scratch": {"gamma": 2.0, "dim": 100, "lr": 0.001, "batch_size": 1024},
        "gan-pretrain": {"gamma": 2.0, "dim": 100, "lr": 0.00005, "batch_size": 1024},
    },
    "fb15k": {
        "common": {"norm": "l1", "strategy": "unif"},
        "gan-scratch": {"gamma": 1.0, "dim": 100, "lr": 0.0001, "batch_size": 4096},
        # reported as B = 2046, read as a typo for 2048
        "gan-pretrain": {"gamma": 1.0, "dim": 100, "lr": 0.0001, "batch_size": 2048},
    },
    "wn11": {
        "common": {"norm": "l1", "strategy": "bern"},
        "gan-scratch": {"gamma": 4.0, "dim": 50, "lr": 0.001, "batch_size": 1024},
        "gan-pretrain": {"gamma": 4.0, "dim": 50, "lr": 0.0001, "batch_size": 512},
    },
    "fb13": {
        "common": {"norm": "l1", "strategy": "bern"},
        "gan-scratch": {"gamma": 1.0, "dim": 100, "lr": 0.0001, "batch_size": 4096},
        "gan-pretrain": {"gamma": 1.0, "dim": 100, "lr": 0.00005, "batch_size": 1024},
    },
}
LABELED_PRESETS = {"wn11", "fb13"}

# CLI flag dest -> TrainConfig field
FLAG_FIELDS = {
    "model": "model", "regime": "regime", "strategy": "strategy", "norm": "norm",
    "gamma": "gamma", "dim": "dim", "lr": "lr", "batch": "batch_size", "epochs": "epochs",
    "g_passes": "g_passes", "d_passes": "d_passes", "l2_gen": "l2_coeff", "seed": "seed",
    "gen_dim": "gen_dim", "gen_hidden": "gen_hidden", "gen_lr": "gen_lr",
    "exclude_gold": "exclude_gold", "pretrain_epochs": "pretrain_epochs",
    "pretrain_lr": "pretrain_lr",
}


class UsageError(Exception):
    """Bad flags, config, or missing inputs (exit code 2)."""


def preset_values(name: str, regime: str) -> dict:
    table = PRESETS[name]
    key = "gan-scratch" if regime == "random" else regime
    return {**table["common"], **table[key]}


def _coerce(field_name: str, raw: str):
    types = {f.name: f.type for f in fields(TrainConfig)}
    ftype = str(types[field_name])
    if "bool" in ftype:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{field_name}: expected a boolean, got {raw!r}")
    try:
        if "int" in ftype:
            return int(raw)
        if "float" in ftype:
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"{field_name}: {exc}") from None
    return raw


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; keys are TrainConfig fields or flag names."""
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    valid = set(TrainConfig.field_names())
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            key = FLAG_FIELDS.get(key, key)
            if key not in valid:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = _coerce(key, value)
    return out


def build_config(args) -> TrainConfig:
    explicit = {FLAG_FIELDS[k]: v for k, v in vars(args).items()
                if k in FLAG_FIELDS and v is not None}
    from_file = read_config_file(args.config) if args.config else {}
    regime = explicit.get("regime", from_file.get("regime", "random"))
    regime = {"random-baseline": "random"}.get(regime, regime)
    values = TrainConfig().as_dict()
    if args.preset:
        values.update(preset_values(args.preset, regime))
    values.update(from_file)
    values.update(explicit)
    try:
        return TrainConfig(**values).validate()
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


# --------------------------------------------------------------------------- dataset flags


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", help="directory holding train.txt, valid.txt (or dev.txt), test.txt")
    p.add_argument("--train", dest="train_path")
    p.add_argument("--valid", dest="valid_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--labeled", action="store_true",
                   help="valid/test carry a fourth 1/-1 label column")
    p.add_argument("--unknown", choices=("extend", "skip", "error"), default="extend",
                   help="handling of valid/test symbols absent from train")


def _data_paths(args):
    if args.data:
        defaults = dataset_dir_paths(args.data)
        paths = [args.train_path or defaults[0], args.valid_path or defaults[1],
                 args.test_path or defaults[2]]
    else:
        paths = [args.train_path, args.valid_path, args.test_path]
    if paths[0] is None:
        raise UsageError("need --data DIR or --train PATH")
    for p in paths:
        if p is not None and not os.path.exists(p):
            raise UsageError(f"dataset file not found: {p}")
    return paths


def _load_data(args, labeled: bool, vocab: ckpt_io.Checkpoint | None = None) -> KgDataset:
    paths = _data_paths(args)
    try:
        if vocab is not None:
            return load_dataset(*paths, labeled=labeled, unknown="error",
                                entities=vocab.entity_names, relations=vocab.relation_names)
        return load_dataset(*paths, labeled=labeled, unknown=args.unknown)
    except DataFormatError as exc:
        if vocab is not None and "unknown symbol" in str(exc):
            raise UsageError(f"checkpoint vocabulary mismatch: {exc}") from None
        raise UsageError(str(exc)) from None


def _load_checkpoint(path) -> ckpt_io.Checkpoint:
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    try:
        return ckpt_io.load(path)
    except ckpt_io.CheckpointError as exc:
        raise UsageError(f"{path}: {exc}") from None


def _print_lp(results, split: str) -> None:
    for setting in ("raw", "filtered"):
        r = results[setting]
        print(f"{split} {setting:8s} mean_rank={r.mean_rank:.2f} hits@10={100 * r.hits_at_10:.2f}% "
              f"(head MR {r.head_mean_rank:.2f}, tail MR {r.tail_mean_rank:.2f})")


def _has_negatives(dataset: KgDataset, split: str) -> bool:
    labels = dataset.labels(split)
    return labels is not None and bool((labels < 0).any())


# --------------------------------------------------------------------------- commands


def _validation_hook(dataset: KgDataset, every: int, jobs: int):
    """Per-epoch callback printing validation accuracy (labeled) or filtered MR / Hits@10."""
    if not len(dataset.positives("valid")):
        return None

    def hook(epoch, disc, gen):
        if epoch % every:
            return
        if _has_negatives(dataset, "valid"):
            th = fit_thresholds(disc, dataset.valid, dataset.valid_labels)
            acc = classify(disc, th, dataset.valid, dataset.valid_labels).accuracy
            print(f"epoch {epoch}: valid accuracy {100 * acc:.2f}%", flush=True)
        else:
            res = evaluate_link_prediction(disc, dataset, "valid", n_jobs=jobs)
            print(f"epoch {epoch}: valid filtered MR {res['filtered'].mean_rank:.2f} "
                  f"hits@10 {100 * res['filtered'].hits_at_10:.2f}%", flush=True)

    return hook


def cmd_train(args) -> int:
    cfg = build_config(args)
    labeled = args.labeled or args.preset in LABELED_PRESETS
    pretrained = None
    if cfg.regime == "gan-pretrain" and not args.init_from and cfg.pretrain_epochs == 0:
        raise UsageError("gan-pretrain needs --init-from CKPT or --pretrain-epochs N")
    if args.init_from:
        if cfg.regime != "gan-pretrain":
            raise UsageError("--init-from is only meaningful with --regime gan-pretrain")
        init = _load_checkpoint(args.init_from)
        dataset = _load_data(args, labeled, vocab=init)
        pretrained = init.disc
        if pretrained.kind != cfg.model:
            raise UsageError(f"--init-from holds a {pretrained.kind} model, not {cfg.model}")
        if pretrained.dim != cfg.dim:
            raise UsageError(f"--init-from has dim {pretrained.dim}, config asks for {cfg.dim}")
    else:
        dataset = _load_data(args, labeled)
    os.makedirs(args.out, exist_ok=True)

    hook = _validation_hook(dataset, args.valid_every, args.jobs) if args.valid_every else None
    disc, gen, report = train(cfg, dataset, pretrained_disc=pretrained, on_epoch=hook)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    ckpt_io.save(ckpt_path, ckpt_io.Checkpoint(
        disc, list(dataset.entities.names), list(dataset.relations.names), gen,
        cfg.as_dict(), cfg.seed))
    report.to_csv(os.path.join(args.out, "report.csv"))
    print(f"wrote {ckpt_path} ({report.wall_clock:.1f}s)")

    if len(dataset.positives("valid")):
        if _has_negatives(dataset, "valid"):
            th = fit_thresholds(disc, dataset.valid, dataset.valid_labels)
            acc = classify(disc, th, dataset.valid, dataset.valid_labels).accuracy
            print(f"final valid accuracy {100 * acc:.2f}%")
        elif not args.skip_final_eval:
            _print_lp(evaluate_link_prediction(disc, dataset, "valid", n_jobs=args.jobs), "valid")
    return 0


def cmd_eval_lp(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    dataset = _load_data(args, args.labeled, vocab=ckpt)
    if len(dataset.positives(args.split)) == 0:
        raise UsageError(f"split {args.split!r} is empty")
    results = evaluate_link_prediction(ckpt.disc, dataset, args.split, n_jobs=args.jobs)
    _print_lp(results, args.split)
    if args.dump_ranks:
        write_rank_dump(args.dump_ranks, dataset, args.split, results)
    return 0


def cmd_eval_tc(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    dataset = _load_data(args, True, vocab=ckpt)
    for split in ("valid", "test"):
        if not _has_negatives(dataset, split):
            raise UsageError(
                f"{split} split has no negative triples; eval-tc expects labeled files with "
                "lines 'head<TAB>relation<TAB>tail<TAB>1' or '...<TAB>-1'")
    disc = ckpt.disc
    th = fit_thresholds(disc, dataset.valid, dataset.valid_labels)
    res = classify(disc, th, dataset.test, dataset.test_labels)
    rels = dataset.relations
    print(f"test accuracy {100 * res.accuracy:.2f}%")
    for r in sorted(res.per_relation):
        print(f"  {rels.name(r)}\t{100 * res.per_relation[r]:.2f}%\t(n={res.counts[r]})")
    out_dir = args.out or os.path.dirname(os.path.abspath(args.checkpoint))
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "thresholds.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"*\t{th.global_delta!r}\n")
        for r in sorted(th.per_relation):
            fh.write(f"{rels.name(r)}\t{th.per_relation[r]!r}\n")
    with open(os.path.join(out_dir, "classification.json"), "w", encoding="utf-8") as fh:
        json.dump({
            "accuracy": res.accuracy,
            "per_relation": {rels.name(r): {"accuracy": a, "count": res.counts[r]}
                             for r, a in sorted(res.per_relation.items())},
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return 0


def sample_negative_table(ckpt: ckpt_io.Checkpoint, dataset: KgDataset, n: int, seed: int):
    """Rows ``(positive, head_entity, head_prob, tail_entity, tail_prob)`` by name."""
    if n <= 0:
        return []
    rng = make_rng(seed)
    pick = rng.choice(len(dataset.train), size=min(n, len(dataset.train)), replace=False)
    pos = dataset.train[np.sort(pick)]
    rows = []
    probs_h = forward_batch(ckpt.gen, pos, np.ones(len(pos), dtype=bool))
    probs_t = forward_batch(ckpt.gen, pos, np.zeros(len(pos), dtype=bool))
    e_h = sample_categorical_rows(probs_h, rng)
    e_t = sample_categorical_rows(probs_t, rng)
    ents, rels = dataset.entities, dataset.relations
    for i, (h, r, t) in enumerate(pos.tolist()):
        rows.append(((ents.name(h), rels.name(r), ents.name(t)),
                     ents.name(int(e_h[i])), float(probs_h[i, e_h[i]]),
                     ents.name(int(e_t[i])), float(probs_t[i, e_t[i]])))
    return rows


def cmd_sample_negatives(args) -> int:
    ckpt = _load_checkpoint(args.checkpoint)
    if ckpt.gen is None:
        print(f"error: {args.checkpoint} has no generator; train with "
              "--regime gan-scratch or gan-pretrain to get one", file=sys.stderr)
        return 1
    dataset = _load_data(args, args.labeled, vocab=ckpt)
    for (h, r, t), he, hp, te, tp in sample_negative_table(ckpt, dataset, args.n, args.seed):
        print(f"({h},\t{r},\t{t})")
        print(f"{he} [p={hp:.6g}]\t\t{te} [p={tp:.6g}]")
        print("-" * 40)
    return 0


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a discriminator (and generator)")
    _add_data_flags(tr)
    tr.add_argument("--model", choices=KINDS)
    tr.add_argument("--regime", choices=REGIMES + ("random-baseline",))
    tr.add_argument("--strategy", choices=("unif", "bern"))
    tr.add_argument("--norm", choices=("l1", "l2"))
    tr.add_argument("--gamma", type=float)
    tr.add_argument("--dim", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch", type=int)
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--g-passes", type=int)
    tr.add_argument("--d-passes", type=int)
    tr.add_argument("--l2-gen", type=float)
    tr.add_argument("--seed", type=int)
    tr.add_argument("--gen-dim", type=int)
    tr.add_argument("--gen-hidden", type=int)
    tr.add_argument("--gen-lr", type=float)
    tr.add_argument("--pretrain-epochs", type=int)
    tr.add_argument("--pretrain-lr", type=float)
    tr.add_argument("--exclude-gold", action="store_const", const=True, default=None)
    tr.add_argument("--preset", choices=sorted(PRESETS))
    tr.add_argument("--config", help="flat key = value file, overridden by explicit flags")
    tr.add_argument("--init-from", help="checkpoint whose discriminator seeds gan-pretrain")
    tr.add_argument("--out", default=".", help="output directory")
    tr.add_argument("--valid-every", type=int, default=0)
    tr.add_argument("--skip-final-eval", action="store_true")
    tr.add_argument("--jobs", type=int, default=1)
    tr.set_defaults(func=cmd_train)

    lp = sub.add_parser("eval-lp", help="raw and filtered link prediction")
    _add_data_flags(lp)
    lp.add_argument("--checkpoint", required=True)
    lp.add_argument("--split", choices=("valid", "test"), default="test")
    lp.add_argument("--dump-ranks")
    lp.add_argument("--jobs", type=int, default=1)
    lp.set_defaults(func=cmd_eval_lp)

    tc = sub.add_parser("eval-tc", help="triple classification with per-relation thresholds")
    _add_data_flags(tc)
    tc.add_argument("--checkpoint", required=True)
    tc.add_argument("--out", help="directory for thresholds.tsv and classification.json")
    tc.set_defaults(func=cmd_eval_tc)

    sn = sub.add_parser("sample-negatives", help="show generator head/tail replacements")
    _add_data_flags(sn)
    sn.add_argument("--checkpoint", required=True)
    sn.add_argument("-n", type=int, default=10)
    sn.add_argument("--seed", type=int, default=0)
    sn.set_defaults(func=cmd_sample_negatives)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"error: {exc.strerror or exc}{where}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
