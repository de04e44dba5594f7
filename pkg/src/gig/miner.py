"""Levelwise discovery of GDDs over a pseudo-relational table.

A small stand-in for a full GDD miner: LHS sets grow one constraint per level,
sets below ``min_support`` are never extended, RHS sides are single
constraints and only minimal rules are kept.
"""
from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .distance import ABS, EDIT, EXACT
from .gdd import GDD, Cell, Const, DistanceConstraint, Status, check_constraint, satisfies
from .graph import parse_number, value_text
from .pattern import PseudoTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MinerConfig:
    max_lhs_size: int = 2
    edit_thresholds: tuple = (0, 1, 2)
    numeric_thresholds: tuple = (0,)
    min_support: int = 2
    min_confidence: float = 1.0

    def __post_init__(self):
        if self.max_lhs_size < 1:
            raise ValueError("max_lhs_size must be >= 1")
        if self.min_support < 1:
            raise ValueError("min_support must be >= 1")
        if not 0 < self.min_confidence <= 1:
            raise ValueError("min_confidence must lie in (0, 1]")
        for t in (*self.edit_thresholds, *self.numeric_thresholds):
            if not (np.isfinite(t) and t >= 0):
                raise ValueError(f"invalid threshold {t}")

    def to_json(self):
        return {"max_lhs_size": self.max_lhs_size, "edit_thresholds": list(self.edit_thresholds),
                "numeric_thresholds": list(self.numeric_thresholds),
                "min_support": self.min_support, "min_confidence": self.min_confidence}

    @classmethod
    def from_json(cls, doc):
        doc = dict(doc)
        for k in ("edit_thresholds", "numeric_thresholds"):
            if k in doc:
                doc[k] = tuple(doc[k])
        return cls(**doc)


def _column_is_numeric(values) -> bool:
    present = [v for v in values if v is not None]
    return bool(present) and all(parse_number(v) is not None for v in present)


def candidate_constraints(table: PseudoTable, config: MinerConfig = MinerConfig()) -> list:
    """Pairwise distance candidates between same-attribute columns plus frequent constants."""
    value_cols = [(i, c) for i, c in enumerate(table.columns) if c[1] != "id"]
    numeric = {c: _column_is_numeric(table.column(i)) for i, c in value_cols}
    out = []
    for (i, (v, a)), (j, (w, b)) in itertools.combinations(value_cols, 2):
        if a != b or v == w:
            continue
        lv, lw = table.labels.get(v), table.labels.get(w)
        if lv is not None and lw is not None and lv != lw:
            continue
        if numeric[(v, a)] and numeric[(w, b)]:
            fn, thresholds = ABS, config.numeric_thresholds
        else:
            fn, thresholds = EDIT, config.edit_thresholds
        for t in sorted(set(thresholds)):
            out.append(DistanceConstraint(fn, Cell(v, a), Cell(w, b), "<=", t))
    for i, (v, a) in value_cols:
        counts = Counter(value_text(x) for x in table.column(i) if x is not None)
        for value in sorted(counts):
            if counts[value] >= config.min_support:
                out.append(DistanceConstraint(EXACT, Cell(v, a), Const(value)))
    return sorted(out, key=DistanceConstraint.sort_key)


def score(table: PseudoTable, phi_x, phi_y, graph=None) -> tuple:
    """(support, confidence) over rows where both sides are defined.

    Confidence is ``None`` when the support is zero.
    """
    support = both = 0
    for _, values in table.rows:
        sx = satisfies(values, phi_x, table, graph)
        sy = satisfies(values, phi_y, table, graph)
        if Status.UNDEFINED in (sx, sy):
            continue
        if sx is Status.HOLDS:
            support += 1
            both += sy is Status.HOLDS
    return support, (both / support if support else None)


class _Statuses:
    """Per-row holds/fails vectors of candidate constraints and their conjunctions."""

    def __init__(self, table, candidates, graph):
        n = len(table.rows)
        self.holds = np.zeros((len(candidates), n), dtype=bool)
        self.fails = np.zeros((len(candidates), n), dtype=bool)
        for k, c in enumerate(candidates):
            for r, (_, values) in enumerate(table.rows):
                s = check_constraint(c, values, table, graph)
                self.holds[k, r] = s is Status.HOLDS
                self.fails[k, r] = s is Status.FAILS
        self.cache = {}

    def of(self, ids: tuple):
        hit = self.cache.get(ids)
        if hit is None:
            if len(ids) == 1:
                hit = (self.holds[ids[0]], self.fails[ids[0]])
            else:
                h, f = self.of(ids[:-1])
                hit = (h & self.holds[ids[-1]], f | self.fails[ids[-1]])
            self.cache[ids] = hit
        return hit


def mine(table: PseudoTable, config: MinerConfig = MinerConfig(), graph=None) -> list[GDD]:
    candidates = candidate_constraints(table, config)
    if not table.rows or not candidates:
        return []
    st = _Statuses(table, candidates, graph)
    cols = [set(c.columns()) for c in candidates]
    valid: dict[int, list] = {}
    found = []

    level = [(i,) for i in range(len(candidates)) if st.holds[i].sum() >= config.min_support]
    size = 1
    while level and size <= config.max_lhs_size:
        frequent = set(level)
        for lhs in level:
            hx, _ = st.of(lhs)
            lhs_cols = set().union(*(cols[i] for i in lhs))
            lhs_set = frozenset(lhs)
            for y in range(len(candidates)):
                if y in lhs_set or cols[y] & lhs_cols:
                    continue
                undefined_y = ~(st.holds[y] | st.fails[y])
                supporting = hx & ~undefined_y
                support = int(supporting.sum())
                if support < config.min_support:
                    continue
                confidence = int((supporting & st.holds[y]).sum()) / support
                if confidence < config.min_confidence:
                    continue
                if any(prev < lhs_set for prev in valid.get(y, ())):
                    continue
                valid.setdefault(y, []).append(lhs_set)
                found.append((lhs, y, support, confidence))
        size += 1
        if size > config.max_lhs_size:
            break
        nxt = []
        for a, b in itertools.combinations(level, 2):
            if a[:-1] != b[:-1]:
                continue
            cand = a + (b[-1],) if a[-1] < b[-1] else b + (a[-1],)
            if any(sub not in frequent for sub in itertools.combinations(cand, size - 1)):
                continue
            if st.of(cand)[0].sum() >= config.min_support:
                nxt.append(cand)
        level = sorted(nxt)

    rules = [GDD([candidates[i] for i in lhs], [candidates[y]], table.scope, "r", s, c)
             for lhs, y, s, c in found]
    rules.sort(key=GDD.rank_key)
    logger.info("mined %d rules from %d candidates over %d rows", len(rules), len(candidates), len(table.rows))
    return [r.with_stats(r.support, r.confidence, f"r{i}") for i, r in enumerate(rules, start=1)]


def select_rules(rules, top_k_per_rhs: int) -> list[GDD]:
    """Keep the best ``top_k_per_rhs`` rules for every RHS target column set."""
    groups = {}
    for r in sorted(rules, key=GDD.rank_key):
        groups.setdefault(tuple(r.columns("rhs")), []).append(r)
    kept = [r for members in groups.values() for r in members[:top_k_per_rhs]]
    return sorted(kept, key=GDD.rank_key)


def rescore(rules, table: PseudoTable, graph=None) -> list[GDD]:
    """Recompute support/confidence, e.g. after consolidation, and rename r1..rn."""
    out = []
    for r in rules:
        s, c = score(table, r.lhs, r.rhs, graph)
        out.append(r.with_stats(s, 0.0 if c is None else c))
    out.sort(key=GDD.rank_key)
    return [r.with_stats(r.support, r.confidence, f"r{i}") for i, r in enumerate(out, start=1)]
