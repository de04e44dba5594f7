"""End-to-end runs: mine rules, train, inject missing values, impute and score."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dsl import parse_rules, render_rules
from .evaluation import EvalReport, emit_report, score
from .gdd import GDD, consolidate
from .graph import PropertyGraph, ingest_csv_file, inject_missing, load_graph, mask_cells, save_graph
from .imputer import impute_graph, write_decisions
from .miner import MinerConfig, mine, rescore, select_rules
from .pattern import GraphPattern, PseudoTable, build_pseudo_table, load_pattern
from .seqmodel.checkpoint import save_checkpoint, write_training_log
from .seqmodel.transformer import Checkpoint, ModelParams, train
from .seqmodel.vocab import build_vocab, make_training_pairs

logger = logging.getLogger(__name__)

DEFAULT_PCTS = (0.01, 0.02, 0.03, 0.04, 0.05)


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# -- rule files ----------------------------------------------------------------

def save_rules(rules, path, miner: MinerConfig | None = None) -> None:
    """Rule text plus a ``.json`` sidecar with support/confidence per rule."""
    path = Path(path)
    path.write_text(render_rules(rules), encoding="utf-8")
    side = {"rules": [{"name": r.name, "support": r.support, "confidence": r.confidence} for r in rules]}
    if miner is not None:
        side["miner"] = miner.to_json()
    Path(str(path) + ".json").write_text(json.dumps(side, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_rules(path, table: PseudoTable | None = None, scope: str | None = None) -> list[GDD]:
    path = Path(path)
    columns = table.columns if table is not None else None
    rules = parse_rules(path.read_text(encoding="utf-8"), columns=columns,
                        scope=scope or (table.scope if table is not None else "Q"))
    side = Path(str(path) + ".json")
    if side.exists():
        stats = {d["name"]: d for d in json.loads(side.read_text(encoding="utf-8"))["rules"]}
        rules = [r.with_stats(stats[r.name]["support"], stats[r.name]["confidence"])
                 if r.name in stats else r for r in rules]
    return rules


# -- configuration ---------------------------------------------------------------

@dataclass
class RunConfig:
    dataset: str
    pattern: str
    output_dir: str
    rules: str = "mine"  # "mine" or a rule file path
    miner: MinerConfig = field(default_factory=MinerConfig)
    model: ModelParams = field(default_factory=ModelParams)
    missing_pcts: tuple | None = DEFAULT_PCTS
    missing_cells: tuple | None = None  # explicit (eid, attribute) cells, used instead of pcts
    attributes: tuple | None = None  # restrict injection to these attributes
    seed: int = 0
    name: str = ""
    table_name: str | None = None  # label for CSV datasets
    top_k_per_rhs: int | None = None
    merge_lhs: bool = False
    record_timing: bool = False

    def __post_init__(self):
        if self.missing_pcts is not None:
            pcts = tuple(float(p) for p in self.missing_pcts)
            for p in pcts:
                if not 0 < p <= 1:
                    raise ConfigError(f"missing pct {p} outside (0, 1]")
            self.missing_pcts = pcts
        if self.missing_cells is not None:
            self.missing_cells = tuple((str(e), a) for e, a in self.missing_cells)
        if self.attributes is not None:
            self.attributes = tuple(self.attributes)
        if not self.name:
            self.name = Path(self.dataset).stem

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["miner"] = self.miner.to_json()
        doc["model"] = asdict(self.model)
        for k in ("missing_pcts", "attributes"):
            if doc[k] is not None:
                doc[k] = list(doc[k])
        if doc["missing_cells"] is not None:
            doc["missing_cells"] = [list(c) for c in doc["missing_cells"]]
        return doc

    @classmethod
    def from_json(cls, doc, base: Path | None = None) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a JSON object")
        doc = dict(doc)
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("dataset", "pattern", "output_dir"):
            if key not in doc:
                raise ConfigError(f"missing config key {key!r}")
        if base is not None:
            for key in ("dataset", "pattern", "output_dir"):
                doc[key] = str(base / doc[key])
            if doc.get("rules", "mine") != "mine":
                doc["rules"] = str(base / doc["rules"])
        try:
            if "miner" in doc:
                doc["miner"] = MinerConfig.from_json(doc["miner"])
            if "model" in doc:
                doc["model"] = ModelParams(**doc["model"])
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_json(doc, base=path.parent)


# -- stages -------------------------------------------------------------------------

def load_dataset(path, table_name: str | None = None) -> PropertyGraph:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return ingest_csv_file(path, table_name or path.stem)
    return load_graph(path)


def prepare_rules(table: PseudoTable, graph: PropertyGraph, cfg: RunConfig) -> list[GDD]:
    """Mine (or load) rules, then merge same-LHS rules and re-score them."""
    if cfg.rules == "mine":
        rules = mine(table, cfg.miner, graph)
    else:
        rules = load_rules(cfg.rules, table)
    if cfg.top_k_per_rhs:
        rules = select_rules(rules, cfg.top_k_per_rhs)
    return rescore(consolidate(rules, merge_lhs=cfg.merge_lhs), table, graph)


def train_model(table: PseudoTable, rules, graph: PropertyGraph, params: ModelParams) -> Checkpoint:
    vocab = build_vocab(table, rules)
    pairs = make_training_pairs(table, rules, graph, vocab, params.max_seq_len)
    logger.info("training on %d pairs, vocabulary of %d tokens", len(pairs), len(vocab))
    return train(pairs, params, vocab)


class _Clock:
    def __init__(self):
        self.times = {}

    def run(self, stage, fn, *args, **kw):
        start = time.perf_counter()
        try:
            return fn(*args, **kw)
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
        finally:
            self.times[stage] = self.times.get(stage, 0.0) + time.perf_counter() - start


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _pct_dir(pct) -> str:
    return "cells" if pct is None else f"pct_{round(pct * 100, 6):g}"


@dataclass
class PipelineResult:
    reports: list
    rules: list
    checkpoint: Checkpoint
    errors: dict = field(default_factory=dict)
    decisions: dict = field(default_factory=dict)


def run_pipeline(cfg: RunConfig) -> PipelineResult:
    """Train once on the intact graph, then inject, impute and score per missing rate.

    Artifacts go under ``cfg.output_dir``: ``rules.gdd`` (+ sidecar),
    ``model.ckpt``, ``training_log.csv``, one sub-directory per rate with
    ground truth, decision log, imputed graph and report, and the combined
    ``report.csv``/``report.json``.  Wall-clock timings go to ``timings.json``
    only, so every other file is reproducible byte for byte.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    clock = _Clock()
    graph = clock.run("ingest", load_dataset, cfg.dataset, cfg.table_name)
    pattern: GraphPattern = clock.run("pattern", load_pattern, cfg.pattern)
    table = clock.run("match", build_pseudo_table, graph, pattern)
    rules = clock.run("mine", prepare_rules, table, graph, cfg)
    if not rules:
        raise StageError("mine", "no rules found")
    save_rules(rules, out / "rules.gdd", cfg.miner if cfg.rules == "mine" else None)
    ckpt = clock.run("train", train_model, table, rules, graph, cfg.model)
    save_checkpoint(ckpt, out / "model.ckpt")
    write_training_log(ckpt, out / "training_log.csv")
    shared = dict(clock.times)

    runs = []
    if cfg.missing_cells is not None:
        runs.append(None)
    elif cfg.missing_pcts:
        runs.extend(sorted(cfg.missing_pcts))
    reports, errors, decisions, timings = [], {}, {}, {"shared": shared}
    for pct in runs:
        clock.times = {}
        sub = out / _pct_dir(pct)
        sub.mkdir(exist_ok=True)
        try:
            if pct is None:
                damaged, truth = clock.run("inject", mask_cells, graph, cfg.missing_cells)
            else:
                damaged, truth = clock.run("inject", inject_missing, graph, pct, cfg.seed, cfg.attributes)
            truth.save(sub / "truth.json")
            dtable = clock.run("match", build_pseudo_table, damaged, pattern)
            result = clock.run("impute", impute_graph, damaged, dtable, rules, ckpt)
            write_decisions(result.decisions, sub / "decisions.jsonl")
            save_graph(result.graph, sub / "imputed.json")
            known = truth.lookup()
            scored = [d for d in result.decisions if (d.site.eid, d.site.attribute) in known]
            report: EvalReport = clock.run("score", score, truth, scored, cfg.name, pct)
        except StageError as exc:
            logger.error("run %s aborted: %s", _pct_dir(pct), exc)
            errors[pct] = str(exc)
            continue
        report.runtime = {**shared, **clock.times}
        timings[_pct_dir(pct)] = dict(clock.times)
        emit_report([report], sub / "report.json", "json", cfg.record_timing)
        reports.append(report)
        decisions[pct] = result.decisions
    emit_report(reports, out / "report.csv", "csv", cfg.record_timing)
    emit_report(reports, out / "report.json", "json", cfg.record_timing)
    _write_json(out / "timings.json", timings)
    if errors:
        _write_json(out / "errors.json", {_pct_dir(k): v for k, v in errors.items()})
    return PipelineResult(reports, rules, ckpt, errors, decisions)
