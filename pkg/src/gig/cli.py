"""Command-line interface.

Exit codes: 0 success, 2 configuration or input error, 3 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .dsl import RuleSyntaxError
from .evaluation import emit_report, score
from .gdd import ConstraintError, consolidate
from .graph import GraphError, GroundTruth, ingest_csv_file, load_graph, save_graph
from .imputer import LayoutError, impute_graph, read_decisions, write_decisions
from .miner import MinerConfig, mine, rescore
from .pattern import PatternError, build_pseudo_table, load_pattern, read_table_csv, write_table_csv
from .pipeline import ConfigError, RunConfig, StageError, load_rules, run_pipeline, save_rules
from .seqmodel.checkpoint import CheckpointError, load_checkpoint, save_checkpoint, write_training_log
from .seqmodel.transformer import ModelParams, TrainingError
from .seqmodel.vocab import build_vocab, make_training_pairs

log = logging.getLogger("gig")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def _table_meta_path(path) -> Path:
    return Path(str(path) + ".json")


def _write_table(table, path):
    write_table_csv(table, path)
    meta = {"scope": table.scope, "labels": dict(sorted(table.labels.items()))}
    _table_meta_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _read_table(path):
    meta_path = _table_meta_path(path)
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return read_table_csv(path, meta.get("scope", "Q"), meta.get("labels") or None)


def cmd_ingest(a):
    refs = {}
    for spec in a.ref or ():
        col, sep, label = spec.partition("=")
        if not sep or not col or not label:
            raise ConfigError(f"--ref expects col=label, got {spec!r}")
        refs[col] = label
    base = load_graph(a.base) if a.base else None
    g = ingest_csv_file(a.csv, a.table, a.delimiter, id_column=a.id_column, refs=refs, base=base,
                        na_values=a.na or ())
    save_graph(g, a.out)
    log.info("wrote %s (%d nodes, %d edges)", a.out, len(g.nodes), len(g.edges))


def cmd_match(a):
    g, p = load_graph(a.graph), load_pattern(a.pattern)
    table = build_pseudo_table(g, p)
    _write_table(table, a.out)
    log.info("wrote %s (%d matches)", a.out, len(table.rows))


def cmd_mine(a):
    table = _read_table(a.table)
    graph = load_graph(a.graph) if a.graph else None
    cfg = MinerConfig(max_lhs_size=a.max_lhs, min_support=a.min_support, min_confidence=a.min_confidence,
                      edit_thresholds=tuple(a.edit_thresholds), numeric_thresholds=tuple(a.numeric_thresholds))
    rules = mine(table, cfg, graph)
    if not a.raw:
        rules = rescore(consolidate(rules, merge_lhs=a.merge_lhs), table, graph)
    save_rules(rules, a.out, cfg)
    log.info("wrote %d rules to %s", len(rules), a.out)


def _model_params(a) -> ModelParams:
    return ModelParams(embed_dim=a.embed_dim, num_heads=a.heads, num_layers=a.layers,
                       feedforward_dim=a.ff_dim, max_seq_len=a.max_len, dropout_rate=a.dropout,
                       label_smoothing=a.label_smoothing, learning_rate=a.lr, batch_size=a.batch_size,
                       epochs=a.epochs, seed=a.seed)


def cmd_train(a):
    from .seqmodel.transformer import train
    table = _read_table(a.table)
    graph = load_graph(a.graph) if a.graph else None
    rules = load_rules(a.rules, table)
    params = _model_params(a)
    vocab = build_vocab(table, rules)
    pairs = make_training_pairs(table, rules, graph, vocab, params.max_seq_len)
    try:
        ckpt = train(pairs, params, vocab)
    except TrainingError as exc:
        raise StageError("train", str(exc)) from exc
    save_checkpoint(ckpt, a.out)
    if a.log:
        write_training_log(ckpt, a.log)
    log.info("trained on %d pairs; final loss %s", len(pairs),
             ckpt.history[-1].loss if ckpt.history else ckpt.initial_loss)


def cmd_impute(a):
    graph = load_graph(a.graph)
    table = _read_table(a.table)
    rules = load_rules(a.rules, table)
    ckpt = load_checkpoint(a.model)
    result = impute_graph(graph, table, rules, ckpt)
    save_graph(result.graph, a.out)
    write_decisions(result.decisions, a.log)
    log.info("decisions: %s", result.stats)


def cmd_eval(a):
    truth = GroundTruth.load(a.truth)
    report = score(truth, read_decisions(a.log), a.dataset, a.pct)
    emit_report([report], a.out, a.format)


def cmd_pipeline(a):
    cfg = RunConfig.load(a.config)
    result = run_pipeline(cfg)
    for r in result.reports:
        log.info("pct=%s missing=%d imputed=%d true=%d P=%.4f R=%.4f F1=%.4f", r.pct, r.missing,
                 r.imputed, r.true_count, r.precision, r.recall, r.f1)
    if result.errors:
        raise StageError("pipeline", f"{len(result.errors)} run(s) failed: {result.errors}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gig", description="Graph data imputation with GDDs")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="CSV file to property graph JSON")
    p.add_argument("--csv", required=True)
    p.add_argument("--table", required=True, help="node label for the rows")
    p.add_argument("--ref", action="append", metavar="COL=LABEL", help="column holding eids of LABEL nodes")
    p.add_argument("--id-column")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--base", help="existing graph to extend")
    p.add_argument("--na", action="append", metavar="TEXT", help="cell text read as missing (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("match", help="pattern matches as a pseudo-relational table")
    p.add_argument("--graph", required=True)
    p.add_argument("--pattern", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("mine", help="discover GDDs on a table")
    p.add_argument("--table", required=True)
    p.add_argument("--graph")
    p.add_argument("--min-support", type=int, default=2)
    p.add_argument("--min-confidence", type=float, default=1.0)
    p.add_argument("--max-lhs", type=int, default=2)
    p.add_argument("--edit-thresholds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--numeric-thresholds", type=float, nargs="+", default=[0])
    p.add_argument("--raw", action="store_true", help="skip consolidation")
    p.add_argument("--merge-lhs", action="store_true", help="also merge rules sharing an RHS")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    d = ModelParams()
    p = sub.add_parser("train", help="train the sequence model")
    p.add_argument("--table", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--graph")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--heads", type=int, default=d.num_heads)
    p.add_argument("--layers", type=int, default=d.num_layers)
    p.add_argument("--ff-dim", type=int, default=d.feedforward_dim)
    p.add_argument("--max-len", type=int, default=d.max_seq_len)
    p.add_argument("--dropout", type=float, default=d.dropout_rate)
    p.add_argument("--label-smoothing", type=float, default=d.label_smoothing)
    p.add_argument("--lr", type=float, default=d.learning_rate)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--log", help="training log CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("impute", help="fill missing values")
    p.add_argument("--graph", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--rules", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True, help="decision log (JSON lines)")
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("eval", help="score a decision log")
    p.add_argument("--truth", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--dataset", default="")
    p.add_argument("--pct", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="run the full experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_pipeline)
    return ap


CONFIG_ERRORS = (ConfigError, GraphError, PatternError, RuleSyntaxError, ConstraintError,
                 CheckpointError, LayoutError, FileNotFoundError, IsADirectoryError,
                 json.JSONDecodeError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if a.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        a.func(a)
    except StageError as exc:
        log.error("%s", exc)
        return EXIT_STAGE
    except CONFIG_ERRORS as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    except (TrainingError, ValueError, OSError) as exc:
        log.error("stage failure: %s: %s", type(exc).__name__, exc)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
