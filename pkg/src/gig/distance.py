"""Distance functions used by distance constraints.

Every function returns a non-negative number, ``0`` when either side is the
wildcard, and ``None`` (undefined) when either side is missing.
"""
from __future__ import annotations

from .graph import parse_number, value_text

EDIT = "edit"
ABS = "abs"
EXACT = "eq"
EID = "eid"
REL = "rel"

FUNCTIONS = (EDIT, ABS, EXACT, EID, REL)


class _Wildcard:
    """The ``*`` operand value: matches anything at distance 0."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "*"

    def __reduce__(self):
        return (_Wildcard, ())


WILDCARD = _Wildcard()


def levenshtein(a: str, b: str) -> int:
    """Unit-cost, case-sensitive edit distance."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def eval_distance(fn: str, a, b):
    if a is None or b is None:
        return None
    if a is WILDCARD or b is WILDCARD:
        return 0
    if fn == EDIT:
        return levenshtein(value_text(a), value_text(b))
    if fn == ABS:
        x, y = parse_number(a), parse_number(b)
        if x is None or y is None:
            raise TypeError(f"absolute difference needs numbers, got {a!r} and {b!r}")
        return abs(x - y)
    if fn in (EXACT, EID):
        return 0 if value_text(a) == value_text(b) else 1
    if fn == REL:
        # relation operands are sets of target eids; equal when they share a target
        a = a if isinstance(a, (set, frozenset)) else {value_text(a)}
        b = b if isinstance(b, (set, frozenset)) else {value_text(b)}
        return 0 if a & b else 1
    raise ValueError(f"unknown distance function {fn!r}")
