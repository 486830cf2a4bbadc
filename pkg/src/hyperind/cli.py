"""Command-line entry points: ingest, split, train, eval, ablate, report, sweep, synth."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .evaluation import to_csv
from .features import MissingFeatureError, FeatureFormatError, synthetic_features, write_features
from .kg import MalformedLineError, intern, parse_statement_file, qualifier_percentage, qualifier_ratio, \
    write_statement_file
from .model import ConfigError
from .pipeline import load_run_config, run_ablate, run_eval, run_train
from .splits import (FI, AuditFailure, SamplerConfig, UnsatisfiableSplitError, build_fi_split,
                     build_si_split, format_stats_row, write_split_dir)
from .training import NumericalError

EXIT_OK, EXIT_USAGE, EXIT_AUDIT, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("hyperind")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for audit failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fractions(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return vals


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ---------------------------------------------------------------------

def cmd_ingest(args) -> int:
    raws = parse_statement_file(args.input)
    graph = intern(raws)
    os.makedirs(args.out, exist_ok=True)
    write_statement_file(os.path.join(args.out, "statements.txt"), graph.to_raw())
    graph.entities.save(os.path.join(args.out, "entities.tsv"))
    graph.relations.save(os.path.join(args.out, "relations.tsv"))
    stats = {
        "raw_lines": len(raws),
        "statements": len(graph.statements),
        "entities": len(graph.entities),
        "relations": len(graph.relations),
        "q_percent": qualifier_percentage(graph.statements),
        "qualifier_ratio": {str(k): v for k, v in qualifier_ratio(graph.statements).items()},
    }
    _write_json(os.path.join(args.out, "stats.json"), stats)
    if args.feature_dim:
        write_features(os.path.join(args.out, "features.tsv"), graph.entities,
                       synthetic_features(graph.entities, args.feature_dim, args.feature_seed))
    print(f"{stats['statements']} statements, {stats['entities']} entities, "
          f"{stats['relations']} relations, Q% {stats['q_percent']:.1f}")
    return EXIT_OK


def cmd_split(args) -> int:
    graph = intern(parse_statement_file(args.input))
    kwargs = {k: getattr(args, k) for k in ("n", "k", "m", "l") if getattr(args, k) is not None}
    if args.ratios is not None:
        kwargs["ratios"] = args.ratios
    if args.si_fractions is not None:
        kwargs["si_fractions"] = args.si_fractions
    try:
        cfg = SamplerConfig(seed=args.seed, **kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bundle = build_fi_split(graph, cfg) if args.mode == "fi" else build_si_split(graph, cfg)
    write_split_dir(args.out, bundle, graph.entities, graph.relations)
    stats = bundle.stats()
    names = ["train", "valid", "test"] + (["inference"] if bundle.mode == FI else [])
    print(f"{bundle.mode} split, seed {args.seed}")
    for name in names:
        print(f"  {name:<9} {format_stats_row(stats, name)}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = load_run_config(args.config, _overrides(args))
    summary = run_train(run, args.out)
    both = summary["splits"].get("test", {}).get("metrics", {}).get("both")
    print(f"best epoch {summary['best_epoch']}, stopped at {summary['stopped_epoch']}, "
          f"valid {run.train.metric} {summary['best_valid']:.4f}")
    if both:
        print(f"test AMR {both['amr']:.2f}  MRR {both['mrr']:.4f}  H@10 {both['hits@10']:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = load_run_config(args.config, _overrides(args))
    reports = run_eval(run, args.out, args.checkpoint)
    for split, rep in reports.items():
        for side, m in rep["metrics"].items():
            print(f"{split:<5} {side:<5} AMR {m['amr']:7.2f}  MRR {m['mrr']:.4f}  "
                  f"H@1 {m['hits@1']:.4f}  H@10 {m['hits@10']:.4f}  n={m['count']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    run = load_run_config(args.config, _overrides(args))
    if args.mask_inference_only:
        run.eval.mask_eval = False
    scopes = ("global", "statement") if args.scope == "both" else (args.scope,)
    reports = run_ablate(run, args.out, args.checkpoint, args.relation, scopes)
    for r in reports:
        print(f"{r.label} | {r.scope} | {r.delta_mr:.2f} | affected {r.affected} | freq {r.frequency}")
    return EXIT_OK


def _load_run(path: str) -> tuple[str, dict, str]:
    fn = os.path.join(path, "metrics.json") if os.path.isdir(path) else path
    if not os.path.exists(fn):
        raise UsageError(f"no metrics.json under {path}")
    with open(fn, encoding="utf-8") as fh:
        return os.path.basename(os.path.normpath(os.path.dirname(fn) or ".")), json.load(fh), os.path.dirname(fn)


def cmd_report(args) -> int:
    runs = [_load_run(p) for p in args.runs]
    labels = args.labels.split(",") if args.labels else [name for name, _, _ in runs]
    if len(labels) != len(runs):
        raise UsageError("--labels needs one label per run")
    rows = []
    base_h10 = None
    for label, (_, payload, _) in zip(labels, runs):
        rep = payload["splits"].get(args.split)
        if rep is None or "both" not in rep["metrics"]:
            raise UsageError(f"run {label!r} has no {args.split} metrics")
        m = rep["metrics"]["both"]
        h10 = 100 * m["hits@10"]
        base_h10 = h10 if base_h10 is None else base_h10
        rows.append({"run": label, "model": payload["model"], "dataset": payload["dataset"], "qp": payload["qp"],
                     "AMR": round(m["amr"], 2), "MRR": round(100 * m["mrr"], 2), "H@1": round(100 * m["hits@1"], 2),
                     "H@5": round(100 * m["hits@5"], 2), "H@10": round(h10, 2),
                     "dH@10": round(h10 - base_h10, 2)})
    os.makedirs(args.out, exist_ok=True)
    table = to_csv(rows)
    with open(os.path.join(args.out, "comparison.csv"), "w", encoding="utf-8") as fh:
        fh.write(table)

    mask_rows, buckets = [], {}
    for label, (_, _, run_dir) in zip(labels, runs):
        masks_fn = os.path.join(run_dir, "masks.json")
        if os.path.exists(masks_fn):
            with open(masks_fn, encoding="utf-8") as fh:
                for r in json.load(fh):
                    mask_rows.append({"run": label, "relation_id": r["relation"], "label": r["label"],
                                      "scope": r["scope"], "delta_mr": round(r["delta_mr"], 2),
                                      "frequency": r["frequency"], "affected": r["affected"]})
        bucket_fn = os.path.join(run_dir, "rank_buckets.json")
        if os.path.exists(bucket_fn):
            with open(bucket_fn, encoding="utf-8") as fh:
                buckets[label] = json.load(fh)
    if mask_rows:
        with open(os.path.join(args.out, "masks_table.csv"), "w", encoding="utf-8") as fh:
            fh.write(to_csv(mask_rows))
    if buckets:
        _write_json(os.path.join(args.out, "rank_distribution.json"), buckets)
    print(table, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sweep import run_sweep

    run = load_run_config(args.config, _overrides(args))
    rows = run_sweep(run, args.trials, args.seed, args.out)
    for n, r in enumerate(rows, 1):
        print(f"{n:>3}  trial {r['trial']:>3}  valid H@10 {r['valid_hits@10']:.4f}  {json.dumps(r['params'])}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import community_graph, qualifier_informative

    if args.kind == "community":
        raws = community_graph(num_statements=args.statements, seed=args.seed)
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        write_statement_file(args.out, raws)
        print(f"wrote {len(raws)} statements to {args.out}")
        return EXIT_OK
    bundle, entities, relations, feats = qualifier_informative(num_train=args.statements, seed=args.seed)
    write_split_dir(args.out, bundle, entities, relations)
    write_features(os.path.join(args.out, "features.tsv"), entities, feats)
    print(f"wrote fully-inductive split and features.tsv to {args.out}")
    return EXIT_OK


def _overrides(args) -> list[str]:
    out = list(args.set or [])
    if getattr(args, "split_dir", None):
        out.append(f"data.split_dir={json.dumps(args.split_dir)}")
    if getattr(args, "no_degree_norm", False):
        out.append("model.degree_norm=false")
    if getattr(args, "seed", None) is not None and args.command != "sweep":
        out.append(f"train.seed={args.seed}")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hyperind", description="Inductive link prediction on hyper-relational graphs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("ingest", help="parse and intern a statement file")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--feature-dim", type=int, default=0, help="also write synthetic features of this width")
    s.add_argument("--feature-seed", type=int, default=0)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("split", help="build a semi- or fully-inductive split")
    s.add_argument("--mode", choices=("fi", "si"), required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--ratios", type=_fractions, help="inference,valid,test fractions (FI)")
    s.add_argument("--si-fractions", type=_fractions, help="train,valid,test entity fractions (SI)")
    for name, what in (("n", "train seed entities"), ("k", "train hop radius"),
                       ("m", "inductive seed entities"), ("l", "inductive hop radius")):
        s.add_argument(f"--{name}", type=int, help=what)
    s.set_defaults(func=cmd_split)

    def run_args(s, checkpoint=False):
        s.add_argument("--config", help="JSON run config")
        s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config field")
        s.add_argument("--split-dir", help="shorthand for --set data.split_dir=...")
        s.add_argument("--out", required=True)
        s.add_argument("--no-degree-norm", action="store_true", help="sum messages without degree normalization")
        if checkpoint:
            s.add_argument("--checkpoint", help="checkpoint prefix; omit for a fresh seeded model")

    s = sub.add_parser("train", help="train a model and write checkpoint, log and metrics")
    run_args(s)
    s.add_argument("--seed", type=int, help="shorthand for --set train.seed=...")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint (or a fresh model)")
    run_args(s, checkpoint=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="qualifier-relation masking and rank-by-qualifier-count")
    run_args(s, checkpoint=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--relation", action="append", help="relation label to mask (repeatable); default all")
    s.add_argument("--scope", choices=("global", "statement", "both"), default="both")
    s.add_argument("--mask-inference-only", action="store_true",
                   help="mask the inference graph but keep the evaluated statements' qualifiers")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("report", help="side-by-side table of stored run metrics")
    s.add_argument("--runs", nargs="+", required=True, help="run directories or metrics.json files")
    s.add_argument("--labels", help="comma-separated run labels")
    s.add_argument("--split", default="test")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("sweep", help="random search over hyperparameter ranges")
    run_args(s)
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("synth", help="write a synthetic statement file or split directory")
    s.add_argument("--kind", choices=("community", "informative"), required=True)
    s.add_argument("--statements", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AuditFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_AUDIT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, UnsatisfiableSplitError, MalformedLineError, MissingFeatureError,
            FeatureFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
