"""Command-line front end: ``nlgqe <command> [options]``.

Every command is a pure function of its input files, flags and seed. Each
run that writes a file also writes ``<output>.manifest.json`` describing
the command, resolved configuration, input digests and artifacts.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 internal error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    SplitSpec, cv_folds, load_rankings, load_ratings, read_jsonl, read_references, split_by_mr, write_jsonl,
)
from .data import Dataset, TextOutput, parse_mr
from .delex import default_rules, delexicalize, delexicalize_dataset, read_rules
from .errors import CheckpointError, ConfigError, DataError, NLGQEError
from .evaluation import (
    bootstrap_compare, mean_ranking_loss, pearson, ranking_report, rating_report, williams_from_predictions,
)
from .model import A_BETTER, B_BETTER, TIE, load, save
from .synth import Provenance, build_corruption_dictionary, generate, sources_from_dataset, sources_from_references
from .trainer import TrainConfig, multi_seed_run, train

CONFIG_ENV = "NLGQE_CONFIG"
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("nlgqe")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- helpers

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out, args, inputs, artifacts, config=None):
    manifest = {
        "command": args.command,
        "argv": args.argv,
        "config": config if config is not None else {},
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "seed": args.seed,
        "artifacts": [str(a) for a in artifacts],
        "tool_version": __version__,
    }
    path = Path(f"{out}.manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_predictions(path, task):
    """Read a prediction TSV into ``{instance_id: value}`` (score or margin)."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("instance_id"):
                continue
            fields = line.split("\t")
            want = 2 if task == "rating" else 3
            if len(fields) != want:
                raise DataError(f"expected {want} fields, got {len(fields)}", line=lineno)
            try:
                key = int(fields[0])
                values[key] = float(fields[-1])
            except ValueError:
                raise DataError("non-numeric instance id or value", line=lineno) from None
            if task == "ranking" and fields[1] not in (A_BETTER, B_BETTER, TIE):
                raise DataError(f"unknown decision {fields[1]!r}", line=lineno)
    return values


def aligned(pred_path, gold, task):
    """Predictions aligned to gold instances of ``task`` (ids are gold line positions)."""
    preds = read_predictions(pred_path, task)
    want_ranking = task == "ranking"
    ids = [i for i, inst in enumerate(gold) if inst.is_ranking == want_ranking]
    if not ids:
        raise DataError(f"gold file has no {task} instances")
    missing = [i for i in ids if i not in preds]
    if missing:
        raise DataError(f"{len(missing)} gold instances lack predictions (first id {missing[0]})")
    return ids, np.array([preds[i] for i in ids])


def add_config_flags(p):
    group = p.add_argument_group("training configuration (overrides the config file)")
    for f in dataclasses.fields(TrainConfig):
        if f.name == "seed":
            continue
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar=f.name.upper(),
                           help=f"default {f.default}")
    p.add_argument("--config", help=f"key = value config file (default: ${CONFIG_ENV})")


def resolve_config(args) -> TrainConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    overrides["seed"] = args.seed
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config file not found: {path}")
        return TrainConfig.read(path, **overrides)
    return TrainConfig.from_dict(overrides)


def load_datasets(paths) -> Dataset:
    parts = [read_jsonl(p) for p in paths]
    out = parts[0]
    for part in parts[1:]:
        out = out.concat(part)
    return out


# ---------------------------------------------------------------- commands

def cmd_ingest(args):
    loader = load_ratings if args.format == "nem" else load_rankings
    dataset = loader(args.input, args.criterion)
    if not args.no_delex:
        rules = read_rules(args.rules) if args.rules else default_rules()
        dataset = delexicalize_dataset(dataset, rules)
    write_jsonl(dataset, args.out)
    print(f"{len(dataset)} instances -> {args.out}")
    write_manifest(args.out, args, [args.input] + ([args.rules] if args.rules else []), [args.out],
                   {"format": args.format, "criterion": args.criterion, "delex": not args.no_delex})


def cmd_split(args):
    dataset = read_jsonl(args.input)
    out = Path(args.out)
    artifacts = []
    if args.cv:
        for i, fold in enumerate(cv_folds(dataset, args.cv, args.seed)):
            (out / f"fold{i}").mkdir(parents=True, exist_ok=True)
            for name, part in zip(("train", "dev", "test"), fold):
                write_jsonl(part, out / f"fold{i}" / f"{name}.jsonl")
                artifacts.append(out / f"fold{i}" / f"{name}.jsonl")
    else:
        try:
            ratios = tuple(float(r) for r in args.ratios.split(":"))
        except ValueError:
            raise UsageError(f"bad --ratios {args.ratios!r}; expected e.g. 8:1:1") from None
        out.mkdir(parents=True, exist_ok=True)
        sections = split_by_mr(dataset, SplitSpec(ratios, args.seed))
        names = ("train", "dev", "test") if len(sections) == 3 else [f"part{i}" for i in range(len(sections))]
        for name, part in zip(names, sections):
            write_jsonl(part, out / f"{name}.jsonl")
            artifacts.append(out / f"{name}.jsonl")
    for a in artifacts:
        print(a)
    write_manifest(out, args, [args.input], artifacts, {"ratios": args.ratios, "cv": args.cv})


def cmd_synth(args):
    dataset = read_jsonl(args.input)
    dict_texts = [i.text_a for i in dataset if not i.is_synthetic]
    dict_texts += [i.text_b for i in dataset if i.text_b is not None and not i.is_synthetic]
    inputs = [args.input]
    if args.sources == "outputs":
        sources = sources_from_dataset(dataset)
    else:
        if not args.refs:
            raise UsageError(f"--sources {args.sources} needs --refs")
        refs = read_references(args.refs)
        if not args.no_delex:
            refs = [delexicalize(mr, TextOutput(text))[:2] for mr, text in refs]
        provenance = Provenance.HUMAN_REFERENCE_TRAIN if args.sources == "train-refs" else Provenance.HUMAN_REFERENCE_TEST
        sources = sources_from_references(refs, provenance)
        if args.sources == "train-refs":
            dict_texts += [text for _, text in refs]
        inputs.append(args.refs)
    dictionary = build_corruption_dictionary(dict_texts)
    out = generate(sources, dictionary, args.mode, args.seed, args.max_errors, args.random_pairs, dataset.criterion)
    write_jsonl(out, args.out)
    print(f"{len(out)} synthetic instances from {len(sources)} sources -> {args.out}")
    write_manifest(args.out, args, inputs, [args.out],
                   {"mode": args.mode, "sources": args.sources, "max_errors": args.max_errors,
                    "random_pairs": args.random_pairs, "dictionary_size": len(dictionary)})


def cmd_train(args):
    config = resolve_config(args)
    train_set = load_datasets(args.train)
    dev_set = read_jsonl(args.dev)
    model, history = train(train_set, dev_set, config)
    save(model, args.out)
    hist_path = Path(f"{args.out}.history.json")
    hist = {
        "selected_epoch": history.selected_epoch,
        "selection_metric": history.selection_metric,
        "epochs": [{"epoch": e.epoch, "train_loss": e.train_loss, "n_train": e.n_train,
                    "dev": e.dev_metrics} for e in history.epochs],
    }
    hist_path.write_text(json.dumps(hist, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    best = history.best
    print(f"selected epoch {history.selected_epoch}: dev {history.selection_metric} {best.selection_value:.4f}")
    write_manifest(args.out, args, list(args.train) + [args.dev], [args.out, hist_path], config.to_dict())


def cmd_predict(args):
    model = load(args.model)
    dataset = read_jsonl(args.input)
    scores, _ = model.predict_instances(list(dataset))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("instance_id\tprediction\n")
        for i, s in enumerate(scores):
            fh.write(f"{i}\t{float(s)!r}\n")
    print(f"{len(scores)} predictions -> {args.out}")
    write_manifest(args.out, args, [args.model, args.input], [args.out])


def _decision(margin):
    return A_BETTER if margin > 0 else B_BETTER if margin < 0 else TIE


def cmd_rank(args):
    model = load(args.model)
    lines = []
    if args.pair:
        dataset = read_jsonl(args.input)
        _, margins = model.predict_instances(list(dataset))
        lines.append("instance_id\tdecision\tmargin")
        for i, inst in enumerate(dataset):
            if inst.is_ranking:
                lines.append(f"{i}\t{_decision(margins[i])}\t{float(margins[i])!r}")
    else:
        lines.append("group_id\trank\ttext_index\tscore")
        with open(args.input, encoding="utf-8") as fh:
            for gid, line in enumerate(l for l in fh if l.strip()):
                try:
                    obj = json.loads(line)
                    mr, texts = parse_mr(obj["mr"]), [TextOutput(t) for t in obj["texts"]]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise DataError(f"bad n-best group {gid}: {exc}") from None
                if not args.no_delex:
                    texts = [delexicalize(mr, t, model.delex_rules)[1] for t in texts]
                    mr = delexicalize(mr, None, model.delex_rules)[0]
                scores = model.score_many([mr] * len(texts), texts)
                for rank, idx in enumerate(model.rank_n(mr, texts), 1):
                    lines.append(f"{gid}\t{rank}\t{idx}\t{float(scores[idx])!r}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(lines) - 1} rows -> {args.out}")
    write_manifest(args.out, args, [args.model, args.input], [args.out], {"mode": "pair" if args.pair else "nbest"})


def cmd_eval(args):
    gold = read_jsonl(args.gold)
    ids, values = aligned(args.pred, gold, args.task)
    if args.task == "rating":
        report = rating_report(values, [gold.instances[i].rating for i in ids])
    else:
        report = ranking_report(values)
        if args.all_loss:
            report.metrics["mean_ranking_loss_all"] = mean_ranking_loss(values, over="all")
    text = report.dumps()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        write_manifest(args.out, args, [args.pred, args.gold], [args.out], {"task": args.task})


def cmd_compare(args):
    gold = read_jsonl(args.gold)
    task = "rating" if args.test == "williams" else "ranking"
    ids, a = aligned(args.pred_a, gold, task)
    _, b = aligned(args.pred_b, gold, task)
    if args.test == "williams":
        human = [gold.instances[i].rating for i in ids]
        t, p = williams_from_predictions(human, a, b)
        result = {"test": "williams", "n": len(ids), "r_a": pearson(human, a), "r_b": pearson(human, b),
                  "r_ab": pearson(a, b), "t": t, "p": p}
    else:
        p = bootstrap_compare(a > 0, b > 0, args.resamples, np.random.default_rng(args.seed))
        result = {"test": "bootstrap", "n": len(ids), "accuracy_a": float(np.mean(a > 0)),
                  "accuracy_b": float(np.mean(b > 0)), "resamples": args.resamples, "p": p}
    text = json.dumps(result, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        write_manifest(args.out, args, [args.gold, args.pred_a, args.pred_b], [args.out], {"test": args.test})


def cmd_multiseed(args):
    config = resolve_config(args)
    try:
        seeds = [int(s) for s in args.seeds.split(",")]
    except ValueError:
        raise UsageError(f"bad --seeds {args.seeds!r}") from None
    result = multi_seed_run(load_datasets(args.train), read_jsonl(args.dev), read_jsonl(args.test), config, seeds)
    report = {
        "task": result.mean.task,
        "n": result.mean.n,
        "seeds": seeds,
        "mean": result.mean.metrics,
        "std": result.std,
        "per_seed": [r.metrics for r in result.per_seed],
        "selected_epochs": [h.selected_epoch for h in result.histories],
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    Path(args.out).write_text(text + "\n", encoding="utf-8")
    write_manifest(args.out, args, list(args.train) + [args.dev, args.test], [args.out], config.to_dict())


# ---------------------------------------------------------------- parser

def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="root seed for every random choice")

    parser = Parser(prog="nlgqe", description="Referenceless quality estimation for NLG output.")
    parser.add_argument("--seed", type=int, default=0, help="root seed for every random choice (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True

    p = sub.add_parser("ingest", parents=[common], help="convert a corpus TSV to canonical JSONL")
    p.add_argument("--format", required=True, choices=["nem", "e2e"], help="nem: ratings TSV; e2e: rankings TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--criterion", default="quality", choices=["quality", "naturalness", "informativeness"])
    p.add_argument("--no-delex", action="store_true", help="keep slot values in MRs and texts")
    p.add_argument("--rules", help="delexicalisation rule TSV (default: built-in table)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", parents=[common], help="MR-disjoint train/dev/test split or CV folds")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--cv", type=int, metavar="K", help="write K cross-validation folds instead")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic instances by corrupting texts")
    p.add_argument("--input", required=True, help="training JSONL (also feeds the corruption dictionary)")
    p.add_argument("--mode", default="both", choices=["ratings", "pairs", "both"])
    p.add_argument("--sources", default="outputs", choices=["outputs", "train-refs", "test-refs"])
    p.add_argument("--refs", help="references TSV (mr, text) for the *-refs sources")
    p.add_argument("--no-delex", action="store_true", help="do not delexicalise references")
    p.add_argument("--max-errors", type=int, default=4)
    p.add_argument("--random-pairs", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train a model and save the best dev checkpoint")
    p.add_argument("--train", required=True, action="append", help="training JSONL (repeatable)")
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="score text_a of every instance")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rank", parents=[common], help="pairwise decisions or n-best orderings")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--pair", action="store_true", help="input: canonical JSONL with ranking instances")
    mode.add_argument("--nbest", action="store_true", help='input: JSONL lines {"mr": ..., "texts": [...]}')
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-delex", action="store_true", help="n-best texts are already delexicalised")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("eval", parents=[common], help="score predictions against gold instances")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--task", required=True, choices=["rating", "ranking"])
    p.add_argument("--all-loss", action="store_true", help="also report ranking loss averaged over all instances")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="significance test between two systems")
    p.add_argument("--test", required=True, choices=["williams", "bootstrap"])
    p.add_argument("--gold", required=True)
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("multiseed", parents=[common], help="train with several seeds and average test metrics")
    p.add_argument("--train", required=True, action="append")
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--out", required=True, help="JSON report path")
    add_config_flags(p)
    p.set_defaults(func=cmd_multiseed)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"nlgqe {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, NLGQEError, OSError, ValueError) as exc:
        print(f"nlgqe {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
