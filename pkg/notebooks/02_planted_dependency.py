# ---
# jupyter:
#   jupytext:
#     formats: py:light
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Recovering a planted dependency
#
# Records carry A, B and C.  B is a fixed function of A, C is noise.  Cells
# of B are removed at rates from 1% to 5% and filled back in.

import json
import tempfile
from pathlib import Path

from gig.datasets import planted_fd, record_pattern
from gig.dsl import render_rules
from gig.evaluation import read_report_csv
from gig.graph import save_graph
from gig.pattern import save_pattern
from gig.pipeline import RunConfig, run_pipeline
from gig.seqmodel import ModelParams

work = Path(tempfile.mkdtemp())
save_graph(planted_fd(n=300, seed=0), work / "fd.json")
save_pattern(record_pattern(), work / "record.json")

# + tags=["parameters"]
seed = 0
epochs = 100
# -

cfg = RunConfig(dataset=str(work / "fd.json"), pattern=str(work / "record.json"),
                output_dir=str(work / "run"), attributes=["B"], seed=seed,
                model=ModelParams(seed=seed, epochs=epochs))
print(json.dumps(cfg.to_json()["missing_pcts"]))
result = run_pipeline(cfg)

# The dependency shows up as ten constant rules, one per value of A.

fd_rules = [r for r in result.rules if len(r.lhs) == 1 and r.lhs[0].left.attr == "A"]
print(render_rules(fd_rules[:3]))
print(len(fd_rules), "rules on A")

for row in read_report_csv(work / "run" / "report.csv"):
    print(row["pct"], row["missing"], row["imputed"], row["true"], row["precision"], row["recall"])

# Decisions for the 5% run, grouped by status.

counts = {}
for d in result.decisions[0.05]:
    counts[d.status] = counts.get(d.status, 0) + 1
print(counts)
