"""Rule-guided imputation of missing attribute values.

For every missing cell the imputer picks the top-ranked rule whose RHS covers
the cell's column, instantiates the rule's LHS on the row, asks the sequence
model for the RHS and keeps the predicted value only if it is admissible for
the attribute.  At most one model call is made per missing cell.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable

from .gdd import GDD, PositionalMask, Status, satisfies, table_index, to_mask
from .graph import PropertyGraph, attribute_domain, parse_number, value_kind, value_text
from .pattern import PseudoTable
from .seqmodel.transformer import Checkpoint, predict_topk
from .seqmodel.vocab import UNK, UNK_ID, encode_lhs, parse_literals, value_for

logger = logging.getLogger(__name__)

IMPUTED = "imputed"
REJECTED = "rejected-inconsistent"
NO_RULE = "abstained-no-rule"
MISSING_LHS = "abstained-missing-lhs"
UNK_INPUT = "abstained-unk"
STATUSES = (IMPUTED, REJECTED, NO_RULE, MISSING_LHS, UNK_INPUT)


class LayoutError(ValueError):
    pass


@dataclass(frozen=True)
class MissingSite:
    match_id: str
    M: int
    variable: str
    attribute: str
    eid: str
    # further (match_id, column) places where the same node cell is missing
    alternatives: tuple = ()

    @property
    def ref(self) -> str:
        return f"{self.variable}.{self.attribute}"

    def to_json(self):
        return {"match_id": self.match_id, "M": self.M, "variable": self.variable,
                "attribute": self.attribute, "eid": self.eid,
                "alternatives": [list(a) for a in self.alternatives]}

    @classmethod
    def from_json(cls, doc):
        return cls(doc["match_id"], doc["M"], doc["variable"], doc["attribute"], doc["eid"],
                   tuple(tuple(a) for a in doc.get("alternatives", ())))


@dataclass(frozen=True)
class ImputationDecision:
    site: MissingSite
    rule: str | None
    I: tuple
    predicted: str | None
    status: str
    row: str | None = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")

    def to_json(self):
        return {"site": self.site.to_json(), "rule": self.rule, "I": list(self.I),
                "predicted": self.predicted, "status": self.status, "row": self.row}

    @classmethod
    def from_json(cls, doc):
        return cls(MissingSite.from_json(doc["site"]), doc["rule"], tuple(doc["I"]),
                   doc["predicted"], doc["status"], doc.get("row"))


def find_missing_sites(table: PseudoTable) -> list[MissingSite]:
    """One site per missing node cell, in row-major order.

    A node bound in several matches shows the same missing cell in several
    rows; the first occurrence defines the site and the rest are kept as
    alternatives.
    """
    sites: dict = {}
    id_col = {v: i for i, (v, a) in enumerate(table.columns) if a == "id"}
    for mid, values in table.rows:
        for m, (var, attr) in enumerate(table.columns):
            if attr == "id" or values[m] is not None:
                continue
            eid = value_text(values[id_col[var]]) if var in id_col else f"{mid}:{var}"
            key = (eid, attr)
            if key in sites:
                s = sites[key]
                sites[key] = MissingSite(s.match_id, s.M, s.variable, s.attribute, s.eid,
                                         s.alternatives + ((mid, m),))
            else:
                sites[key] = MissingSite(mid, m, var, attr, eid)
    return list(sites.values())


def build_masks(rules, table: PseudoTable) -> list[tuple[GDD, PositionalMask]]:
    return [(r, to_mask(r, table.columns)) for r in rules]


def applicable_rules(masks, M: int) -> list[GDD]:
    """Rules whose RHS covers column ``M``, best first."""
    hits = [r for r, mask in masks if mask.covers(M)]
    return sorted(hits, key=GDD.rank_key)


def assemble_input(values, rule: GDD, table: PseudoTable) -> list | None:
    """Instantiated LHS tokens for a row, or ``None`` if an LHS cell is missing."""
    return encode_lhs(rule, values, table)


def validate_semantic(value, site: MissingSite, graph: PropertyGraph, label: str | None = None) -> bool:
    """Is ``value`` admissible for the site's attribute?

    Admissible means present in the attribute's observed domain.  When fewer
    than two distinct values are observed the domain says little, so the
    value's numeric/text kind must match the attribute's instead.
    """
    if value is None or value == UNK or UNK in str(value).split():
        return False
    if label is None:
        label = graph.node(site.eid).label
    domain = attribute_domain(graph, label, site.attribute)
    if len(domain.values) < 2:
        return value_kind(value) == domain.kind if domain.values else True
    return value_text(value) in {value_text(v) for v in domain.values}


def _typed(value: str, domain_values) -> object:
    for v in domain_values:
        if value_text(v) == value:
            return v
    num = parse_number(value)
    if num is None:
        return value
    return int(num) if num.is_integer() and "." not in value else num


Predictor = Callable[[list, GDD, MissingSite], "str | None"]


def model_predictor(ckpt: Checkpoint, k: int = 1) -> Predictor:
    """Top-1 beam prediction of the RHS, read back at the site's column reference."""

    def predict(enc_ids, rule, site):
        best = predict_topk(ckpt, enc_ids, k)[0]
        return value_for(parse_literals(best.tokens, ckpt.vocab), site.ref)

    return predict


@dataclass
class ImputationResult:
    graph: PropertyGraph
    decisions: list
    model_calls: int = 0
    stats: dict = field(default_factory=dict)


def impute_graph(graph: PropertyGraph, table: PseudoTable, rules, checkpoint: Checkpoint | None = None,
                 masks=None, predictor: Predictor | None = None) -> ImputationResult:
    """Fill missing cells of ``graph`` using ``rules`` and the trained model.

    Only the first covering rule whose LHS does not fail on the row is used.
    If its LHS has a missing cell, the site's alternative rows are tried in
    order before abstaining.  Rejected predictions leave the cell missing.
    """
    if masks is None:
        masks = build_masks(rules, table)
    for r, mask in masks:
        if len(mask.bits) != len(table.columns):
            raise LayoutError(f"mask of rule {r.name} has {len(mask.bits)} bits, "
                              f"table has {len(table.columns)} columns")
    if predictor is None:
        if checkpoint is None:
            raise ValueError("either a checkpoint or a predictor is required")
        predictor = model_predictor(checkpoint)
    vocab = checkpoint.vocab if checkpoint is not None else None
    rows = dict(table.rows)
    index = table_index(table)
    updates, decisions, calls = {}, [], 0

    for site in find_missing_sites(table):
        ranked = applicable_rules(masks, site.M)
        if not ranked:
            decisions.append(ImputationDecision(site, None, (), None, NO_RULE))
            continue
        decision = None
        for mid, m in ((site.match_id, site.M), *site.alternatives):
            values = rows[mid]
            rule = next((r for r in applicable_rules(masks, m)
                         if satisfies(values, r.lhs, table, graph) is not Status.FAILS), None)
            if rule is None:
                decision = decision or ImputationDecision(site, None, (), None, NO_RULE, mid)
                continue
            I = tuple(sorted({index[c] for c in rule.columns("lhs")}))
            tokens = assemble_input(values, rule, table)
            if tokens is None:
                decision = ImputationDecision(site, rule.name, I, None, MISSING_LHS, mid)
                continue
            enc = vocab.encode(tokens) if vocab is not None else tokens
            if vocab is not None and UNK_ID in enc:
                decision = ImputationDecision(site, rule.name, I, None, UNK_INPUT, mid)
                continue
            calls += 1
            value = predictor(enc, rule, site)
            label = table.labels.get(site.variable)
            if validate_semantic(value, site, graph, label):
                domain = attribute_domain(graph, label or graph.node(site.eid).label, site.attribute)
                updates[(site.eid, site.attribute)] = _typed(value, sorted(domain.values, key=value_text))
                decision = ImputationDecision(site, rule.name, I, value, IMPUTED, mid)
            else:
                decision = ImputationDecision(site, rule.name, I, value, REJECTED, mid)
            break
        decisions.append(decision)
        logger.debug("site %s/%s: %s", site.eid, site.attribute, decision.status)

    counts = {s: sum(d.status == s for d in decisions) for s in STATUSES}
    logger.info("imputation: %s, %d model calls", counts, calls)
    out = graph.with_values(updates) if updates else graph
    return ImputationResult(out, decisions, calls, counts)


def write_decisions(decisions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in decisions:
            fh.write(json.dumps(d.to_json(), sort_keys=True) + "\n")


def read_decisions(path) -> list[ImputationDecision]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if line.strip():
                try:
                    out.append(ImputationDecision.from_json(json.loads(line)))
                except (KeyError, ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{n}: bad decision record: {exc}") from None
    return out
