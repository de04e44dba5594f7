from importlib import resources

import pytest

from gig.datasets import table1, table1_pattern
from gig.pattern import build_pseudo_table
from gig.pipeline import RunConfig, run_pipeline


@pytest.fixture
def full_graph():
    return table1(missing=False)


@pytest.fixture
def gap_graph():
    return table1(missing=True)


@pytest.fixture
def pattern():
    return table1_pattern()


@pytest.fixture
def full_table(full_graph, pattern):
    return build_pseudo_table(full_graph, pattern)


@pytest.fixture
def gap_table(gap_graph, pattern):
    return build_pseudo_table(gap_graph, pattern)


def table1_config(out, **kw):
    data = resources.files("gig.data")
    base = dict(dataset=str(data / "table1.json"), pattern=str(data / "table1_pattern.json"),
                output_dir=str(out), missing_pcts=None, missing_cells=[("7", "Name")], seed=7,
                name="table1")
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="session")
def table1_run(tmp_path_factory):
    """The walkthrough pipeline, trained once per session."""
    out = tmp_path_factory.mktemp("table1_run")
    return out, run_pipeline(table1_config(out))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
