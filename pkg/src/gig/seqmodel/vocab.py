"""Token inventory and the literal encoding of rule sides.

A constraint becomes one literal: its column references, its operator token
(``=0`` or ``<=k``), then the row's values for the referenced cells.  Values
are split on whitespace; the values of a two-cell literal are separated by
``<sep>``, and so are consecutive literals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

from ..gdd import Cell, EidRef, GDD, Status, satisfies, table_index
from ..graph import value_text
from ..pattern import PseudoTable

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK, SEP = "<pad>", "<bos>", "<eos>", "<unk>", "<sep>"
SPECIALS = (PAD, BOS, EOS, UNK, SEP)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, SEP_ID = range(5)


@dataclass
class Vocabulary:
    tokens: list
    colrefs: frozenset = frozenset()
    ops: frozenset = frozenset()
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIALS:
            raise ValueError("special tokens must occupy ids 0-4")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def encode(self, tokens) -> list:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def decode(self, ids) -> list:
        return [self.tokens[i] for i in ids]

    def to_json(self):
        return {"tokens": self.tokens, "colrefs": sorted(self.colrefs), "ops": sorted(self.ops)}

    @classmethod
    def from_json(cls, doc):
        return cls(list(doc["tokens"]), frozenset(doc["colrefs"]), frozenset(doc["ops"]))


def value_tokens(value) -> list:
    return value_text(value).split()


def build_vocab(table: PseudoTable, rules) -> Vocabulary:
    colrefs, ops, values = set(), set(), set()
    index = table_index(table)
    value_cols = set()
    for r in rules:
        for c in r.lhs + r.rhs:
            colrefs.update(c.refs())
            ops.add(c.op_token)
            value_cols.update(c.value_columns())
    # widen to every column sharing a referenced column's (label, attribute)
    kinds = {(table.labels.get(v), a) for v, a in value_cols if a != "id"}
    value_cols |= {(v, a) for v, a in table.columns if a != "id" and (table.labels.get(v), a) in kinds}
    for col in sorted(value_cols):
        if col not in index:
            continue
        for _, vals in table.rows:
            if vals[index[col]] is not None:
                values.update(value_tokens(vals[index[col]]))
    ops -= colrefs
    values -= colrefs | ops | set(SPECIALS)
    tokens = [*SPECIALS, *sorted(colrefs), *sorted(ops), *sorted(values)]
    return Vocabulary(tokens, frozenset(colrefs), frozenset(ops))


def literal(c, values, index) -> list | None:
    """Tokens of one constraint instantiated on a row; ``None`` if a cell is missing."""
    out = list(c.refs()) + [c.op_token]
    groups = []
    for o in c.operands():
        if isinstance(o, Cell):
            v = values[index[(o.var, o.attr)]]
        elif isinstance(o, EidRef):
            v = values[index[(o.var, "id")]]
        else:
            continue
        if v is None:
            return None
        groups.append(value_tokens(v))
    for k, g in enumerate(groups):
        if k:
            out.append(SEP)
        out.extend(g)
    return out


def encode_side(phi, values, table: PseudoTable) -> list | None:
    index = table_index(table)
    out = []
    for k, c in enumerate(phi):
        lit = literal(c, values, index)
        if lit is None:
            return None
        if k:
            out.append(SEP)
        out.extend(lit)
    return out


def encode_lhs(rule: GDD, values, table: PseudoTable) -> list | None:
    return encode_side(rule.lhs, values, table)


def encode_rhs(rule: GDD, values, table: PseudoTable) -> list | None:
    body = encode_side(rule.rhs, values, table)
    return None if body is None else [BOS, *body, EOS]


class TrainingPair(NamedTuple):
    enc: tuple
    dec: tuple
    rule: str
    match: str


def make_training_pairs(table: PseudoTable, rules, graph, vocab: Vocabulary,
                        max_len: int | None = None) -> list[TrainingPair]:
    """One pair per (rule, row) where both rule sides hold on the row."""
    pairs, skipped = [], 0
    for r in rules:
        if not r.lhs:
            continue
        for mid, values in table.rows:
            if satisfies(values, r.lhs, table, graph) is not Status.HOLDS:
                continue
            if satisfies(values, r.rhs, table, graph) is not Status.HOLDS:
                continue
            enc, dec = encode_lhs(r, values, table), encode_rhs(r, values, table)
            if enc is None or dec is None:
                continue
            if max_len is not None and (len(enc) > max_len or len(dec) > max_len):
                skipped += 1
                continue
            pairs.append(TrainingPair(tuple(vocab.encode(enc)), tuple(vocab.encode(dec)), r.name, mid))
    if skipped:
        logger.warning("skipped %d training pairs longer than %d tokens", skipped, max_len)
    return pairs


class Literal(NamedTuple):
    refs: tuple
    op: str | None
    values: tuple


def parse_literals(tokens, vocab: Vocabulary) -> list[Literal]:
    """Split decoded content tokens back into literals."""
    segments, cur = [], []
    for t in tokens:
        if t in (BOS, EOS, PAD):
            continue
        if t == SEP:
            segments.append(cur)
            cur = []
        else:
            cur.append(t)
    segments.append(cur)
    out = []
    for seg in segments:
        if seg and seg[0] in vocab.colrefs:
            k = 0
            while k < len(seg) and seg[k] in vocab.colrefs:
                k += 1
            op = seg[k] if k < len(seg) and seg[k] in vocab.ops else None
            rest = seg[k + (op is not None):]
            out.append(Literal(tuple(seg[:k]), op, (" ".join(rest),) if rest or op else ()))
        elif out:
            last = out[-1]
            out[-1] = last._replace(values=last.values + (" ".join(seg),))
    return out


def value_for(literals, ref: str):
    """The predicted value for column reference ``ref`` or ``None``."""
    for lit in literals:
        if ref in lit.refs and len(lit.values) == len(lit.refs):
            return lit.values[lit.refs.index(ref)]
    return None
