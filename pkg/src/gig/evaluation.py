"""Precision, recall and F1 of an imputation run, and report files."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .graph import GroundTruth, parse_number, value_text
from .imputer import IMPUTED

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("dataset", "pct", "missing", "imputed", "true", "precision", "recall", "f1", "runtime_s")


@dataclass
class EvalReport:
    missing: int
    imputed: int
    true_count: int
    precision: float
    recall: float
    f1: float
    dataset: str = ""
    pct: float | None = None
    per_attribute: dict = field(default_factory=dict)
    runtime: dict = field(default_factory=dict)
    flags: tuple = ()

    def __post_init__(self):
        if self.true_count > min(self.imputed, self.missing):
            raise ValueError("true count exceeds imputed or missing count")

    @property
    def runtime_s(self) -> float | None:
        return sum(self.runtime.values()) if self.runtime else None

    def row(self) -> dict:
        return {"dataset": self.dataset, "pct": self.pct, "missing": self.missing,
                "imputed": self.imputed, "true": self.true_count, "precision": self.precision,
                "recall": self.recall, "f1": self.f1, "runtime_s": self.runtime_s}

    def to_json(self) -> dict:
        doc = self.row()
        doc["per_attribute"] = self.per_attribute
        doc["flags"] = list(self.flags)
        return doc


def _metrics(true, imputed, missing):
    p = true / imputed if imputed else 0.0
    r = true / missing if missing else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _same(predicted, truth, numeric_tolerance) -> bool:
    a, b = str(predicted).strip(), value_text(truth).strip()
    if a == b:
        return True
    if numeric_tolerance is not None:
        x, y = parse_number(a), parse_number(b)
        return x is not None and y is not None and abs(x - y) <= numeric_tolerance
    return False


def score(ground_truth: GroundTruth, decisions, dataset: str = "", pct: float | None = None,
          numeric_tolerance: float | None = None) -> EvalReport:
    """Score decisions against the removed values.

    A prediction is correct when it equals the truth after trimming
    surrounding whitespace.  Abstentions and rejections count as missing but
    not imputed.  ``numeric_tolerance`` optionally accepts numbers within a
    delta; it is off by default.
    """
    truth = ground_truth.lookup()
    missing = len(truth)
    imputed = true = 0
    per_attr: dict = {}
    seen = set()
    for d in decisions:
        key = (d.site.eid, d.site.attribute)
        if key not in truth:
            raise KeyError(f"decision for unknown site {key[0]}.{key[1]}")
        if key in seen:
            raise ValueError(f"duplicate decision for site {key[0]}.{key[1]}")
        seen.add(key)
        if d.status != IMPUTED:
            continue
        hit = _same(d.predicted, truth[key], numeric_tolerance)
        imputed += 1
        true += hit
        a = per_attr.setdefault(d.site.attribute, [0, 0])
        a[0] += 1
        a[1] += hit
    attr_missing: dict = {}
    for _, attr in truth:
        attr_missing[attr] = attr_missing.get(attr, 0) + 1
    breakdown = {}
    for attr in sorted(attr_missing):
        imp, tr = per_attr.get(attr, [0, 0])
        p, r, f = _metrics(tr, imp, attr_missing[attr])
        breakdown[attr] = {"missing": attr_missing[attr], "imputed": imp, "true": tr,
                           "precision": p, "recall": r, "f1": f}
    flags = ()
    if imputed == 0:
        flags = ("precision-undefined",)
        logger.warning("no cells imputed; precision reported as 0")
    p, r, f = _metrics(true, imputed, missing)
    return EvalReport(missing, imputed, true, p, r, f, dataset, pct, breakdown, {}, flags)


def _cell(v):
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def emit_report(reports, path, fmt: str = "csv", record_timing: bool = False) -> Path:
    """Write reports sorted by pct.  ``runtime_s`` stays blank unless ``record_timing``."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    ordered = sorted(reports, key=lambda r: (r.pct is None, r.pct or 0.0, r.dataset))
    rows = []
    for r in ordered:
        doc = r.to_json() if fmt == "json" else r.row()
        if not record_timing:
            doc["runtime_s"] = None
        rows.append(doc)
    if fmt == "json":
        path.write_text(json.dumps(rows, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_COLUMNS)
            for doc in rows:
                w.writerow([_cell(doc[c]) for c in REPORT_COLUMNS])
    return path


def read_report_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
