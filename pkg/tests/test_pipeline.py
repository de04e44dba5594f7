import json

import pytest

from conftest import table1_config
from gig import cli
from gig.datasets import planted_fd, record_pattern
from gig.evaluation import REPORT_COLUMNS, read_report_csv
from gig.graph import save_graph
from gig.miner import MinerConfig
from gig.pattern import save_pattern
from gig.pipeline import ConfigError, RunConfig, StageError, load_rules, run_pipeline
from gig.seqmodel import ModelParams

SMALL = ModelParams(embed_dim=16, feedforward_dim=32, epochs=8, seed=1)


@pytest.fixture(scope="module")
def fd_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("fd")
    save_graph(planted_fd(n=80, seed=1), d / "fd.json")
    save_pattern(record_pattern(), d / "record.json")
    return d


def fd_config(files, out, **kw):
    base = dict(dataset=str(files / "fd.json"), pattern=str(files / "record.json"), output_dir=str(out),
                model=SMALL, miner=MinerConfig(max_lhs_size=1), attributes=["B"], seed=3)
    base.update(kw)
    return RunConfig(**base)


def test_table1_walkthrough(table1_run):
    out, result = table1_run
    (report,) = result.reports
    assert (report.missing, report.imputed, report.true_count) == (1, 1, 1)
    assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)
    (d,) = result.decisions[None]
    assert d.predicted == "F20"
    for name in ("rules.gdd", "rules.gdd.json", "model.ckpt", "training_log.csv", "report.csv",
                 "report.json", "timings.json", "cells/truth.json", "cells/decisions.jsonl",
                 "cells/imputed.json", "cells/report.json"):
        assert (out / name).exists(), name
    assert not (out / "errors.json").exists()


def test_rules_file_reloads(table1_run, full_table):
    out, result = table1_run
    back = load_rules(out / "rules.gdd", full_table)
    assert [(r, r.support, r.confidence) for r in back] == \
        [(r, r.support, r.confidence) for r in result.rules]


def test_five_rates_sorted(fd_files, tmp_path):
    result = run_pipeline(fd_config(fd_files, tmp_path))
    rows = read_report_csv(tmp_path / "report.csv")
    assert [float(r["pct"]) for r in rows] == [0.01, 0.02, 0.03, 0.04, 0.05]
    assert len(result.reports) == 5 and not result.errors
    for pct in ("pct_1", "pct_5"):
        assert (tmp_path / pct / "decisions.jsonl").exists()
    assert all(r["runtime_s"] == "" for r in rows)


def test_empty_rate_list(fd_files, tmp_path):
    result = run_pipeline(fd_config(fd_files, tmp_path, missing_pcts=()))
    assert result.reports == []
    assert (tmp_path / "report.csv").read_text().strip() == ",".join(REPORT_COLUMNS)
    assert (tmp_path / "model.ckpt").exists()


def test_failed_rate_is_isolated(fd_files, tmp_path, monkeypatch):
    import gig.pipeline as pl
    real = pl.impute_graph

    def flaky(graph, table, *a, **kw):
        if sum(graph.value(e, a) is None for e, a in graph.cells()) > 10:
            raise ValueError("simulated failure")
        return real(graph, table, *a, **kw)

    monkeypatch.setattr(pl, "impute_graph", flaky)
    result = run_pipeline(fd_config(fd_files, tmp_path, missing_pcts=[0.01, 0.5], attributes=None))
    assert [r.pct for r in result.reports] == [0.01]
    assert "[impute]" in result.errors[0.5]
    assert "pct_50" in json.loads((tmp_path / "errors.json").read_text())


def test_no_rules_is_stage_error(tmp_path, fd_files):
    cfg = fd_config(fd_files, tmp_path, miner=MinerConfig(min_support=10_000))
    with pytest.raises(StageError, match=r"\[mine\]"):
        run_pipeline(cfg)


def test_missing_dataset_is_stage_error(tmp_path, fd_files):
    with pytest.raises(StageError, match=r"\[ingest\]"):
        run_pipeline(fd_config(fd_files, tmp_path, dataset=str(tmp_path / "nope.json")))


def test_config_round_trip(tmp_path):
    cfg = table1_config(tmp_path, model=SMALL)
    assert RunConfig.from_json(cfg.to_json()) == cfg


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_json({"dataset": "a", "pattern": "b", "output_dir": "c", "colour": 1})
    with pytest.raises(ConfigError, match="output_dir"):
        RunConfig.from_json({"dataset": "a", "pattern": "b"})
    with pytest.raises(ConfigError):
        RunConfig.from_json({"dataset": "a", "pattern": "b", "output_dir": "c", "missing_pcts": [2]})
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        RunConfig.load(tmp_path / "bad.json")


def test_config_paths_relative_to_file(tmp_path, fd_files):
    doc = {"dataset": "fd.json", "pattern": "record.json", "output_dir": "out"}
    (fd_files / "run.json").write_text(json.dumps(doc))
    cfg = RunConfig.load(fd_files / "run.json")
    assert cfg.dataset == str(fd_files / "fd.json") and cfg.name == "fd"


# -- command line --------------------------------------------------------------------

def run_cli(*args):
    return cli.main([str(a) for a in args])


def test_cli_chain(tmp_path, fd_files):
    t = tmp_path
    assert run_cli("match", "--graph", fd_files / "fd.json", "--pattern", fd_files / "record.json",
                   "--out", t / "table.csv") == 0
    assert run_cli("mine", "--table", t / "table.csv", "--max-lhs", 1, "--out", t / "rules.gdd") == 0
    assert (t / "rules.gdd").read_text().strip()
    assert run_cli("train", "--table", t / "table.csv", "--rules", t / "rules.gdd", "--epochs", 3,
                   "--embed-dim", 16, "--ff-dim", 32, "--log", t / "log.csv", "--out", t / "m.ckpt") == 0
    assert (t / "log.csv").read_text().startswith("epoch,loss,learning_rate")


def test_cli_ingest(tmp_path):
    (tmp_path / "g.csv").write_text("id,Name\n4,AF9\n5,?\n")
    assert run_cli("ingest", "--csv", tmp_path / "g.csv", "--table", "game", "--id-column", "id",
                   "--na", "?", "--out", tmp_path / "g.json") == 0
    doc = json.loads((tmp_path / "g.json").read_text())
    assert {n["eid"]: n["attrs"]["Name"] for n in doc["nodes"]} == {"4": "AF9", "5": None}


def test_cli_pipeline_and_eval(tmp_path, fd_files):
    out = tmp_path / "run"
    doc = fd_config(fd_files, out, missing_pcts=[0.05]).to_json()
    (tmp_path / "cfg.json").write_text(json.dumps(doc))
    assert run_cli("pipeline", "--config", tmp_path / "cfg.json") == 0
    assert run_cli("eval", "--truth", out / "pct_5" / "truth.json", "--log", out / "pct_5" / "decisions.jsonl",
                   "--pct", 0.05, "--out", tmp_path / "r.csv") == 0
    assert read_report_csv(tmp_path / "r.csv")[0]["missing"] == read_report_csv(out / "report.csv")[0]["missing"]


def test_cli_exit_codes(tmp_path):
    assert run_cli("match", "--graph", tmp_path / "missing.json", "--pattern", tmp_path / "p.json",
                   "--out", tmp_path / "t.csv") == 2
    assert run_cli("pipeline", "--config", tmp_path / "missing.json") == 2
    assert run_cli("frobnicate") == 2
