"""Distance constraints, graph differential dependencies and positional masks."""
from __future__ import annotations

import enum
from functools import cached_property
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

from .distance import ABS, EDIT, EID, EXACT, REL, WILDCARD, eval_distance
from .graph import PropertyGraph
from .pattern import PseudoTable


class Status(enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDEFINED = "undefined"


# --- operands ---------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Cell:
    var: str
    attr: str

    @property
    def ref(self):
        return f"{self.var}.{self.attr}"


@dataclass(frozen=True, order=True)
class Const:
    value: str


@dataclass(frozen=True, order=True)
class Wild:
    pass


@dataclass(frozen=True, order=True)
class EidRef:
    var: str

    @property
    def ref(self):
        return f"{self.var}.eid"


@dataclass(frozen=True, order=True)
class RelRef:
    var: str
    rela: str

    @property
    def ref(self):
        return f"{self.var}.{self.rela}"


Operand = Union[Cell, Const, Wild, EidRef, RelRef]


class ConstraintError(ValueError):
    pass


def _num(x) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class DistanceConstraint:
    """``fn(left, right) <= threshold`` (``op='<='``) or ``fn(left, right) = 0``."""

    fn: str
    left: Operand
    right: Operand
    op: str = "="
    threshold: float = 0

    def __post_init__(self):
        if self.fn in (EXACT, EID, REL):
            if self.op != "=" or self.threshold != 0:
                raise ConstraintError(f"{self.fn} constraints use '= 0'")
        elif self.fn in (EDIT, ABS):
            if self.op != "<=":
                raise ConstraintError(f"{self.fn} constraints use '<='")
            if not self.threshold >= 0:
                raise ConstraintError("threshold must be non-negative")
        else:
            raise ConstraintError(f"unknown distance function {self.fn!r}")
        if self.fn == EID and not isinstance(self.left, EidRef):
            raise ConstraintError("eid constraints need a v.eid left operand")
        if self.fn == REL and not isinstance(self.left, RelRef):
            raise ConstraintError("relation constraints need a relation left operand")
        if self.fn in (EXACT, EDIT, ABS) and not isinstance(self.left, Cell):
            raise ConstraintError(f"{self.fn} needs an attribute cell on the left")

    @cached_property
    def text(self) -> str:
        from .dsl import render_constraint
        return render_constraint(self)

    def render(self) -> str:
        return self.text

    def __str__(self):
        return self.text

    def sort_key(self):
        return self.text

    @property
    def op_token(self) -> str:
        return "=0" if self.op == "=" else f"<={_num(self.threshold)}"

    def operands(self):
        return (self.left, self.right)

    def variables(self) -> set:
        return {o.var for o in self.operands() if isinstance(o, (Cell, EidRef, RelRef))}

    def columns(self) -> list:
        """Pseudo-table columns read by this constraint, in operand order."""
        cols = []
        for o in self.operands():
            if isinstance(o, Cell):
                col = (o.var, o.attr)
            elif isinstance(o, (EidRef, RelRef)):
                col = (o.var, "id")
            else:
                continue
            if col not in cols:
                cols.append(col)
        return cols

    def value_columns(self) -> list:
        """Columns whose row values are carried into a literal."""
        return [(o.var, "id") if isinstance(o, EidRef) else (o.var, o.attr)
                for o in self.operands() if isinstance(o, (Cell, EidRef))]

    def refs(self) -> list:
        return [o.ref for o in self.operands() if isinstance(o, (Cell, EidRef, RelRef))]


def _resolve(op: Operand, values, index, graph):
    if isinstance(op, Cell):
        try:
            return values[index[(op.var, op.attr)]]
        except KeyError:
            raise ConstraintError(f"no column {op.var}.{op.attr}") from None
    if isinstance(op, Const):
        return op.value
    if isinstance(op, Wild):
        return WILDCARD
    try:
        eid = values[index[(op.var, "id")]]
    except KeyError:
        raise ConstraintError(f"no id column for variable {op.var!r}") from None
    if isinstance(op, EidRef):
        return eid
    if graph is None:
        raise ConstraintError("relation constraints need the graph")
    return frozenset(graph.targets(eid, op.rela))


def table_index(table: PseudoTable) -> dict:
    idx = getattr(table, "_index_cache", None)
    if idx is None or len(idx) != len(table.columns):
        idx = {col: i for i, col in enumerate(table.columns)}
        table._index_cache = idx
    return idx


def check_constraint(c: DistanceConstraint, values, table: PseudoTable,
                     graph: PropertyGraph | None = None) -> Status:
    index = table_index(table)
    a = _resolve(c.left, values, index, graph)
    b = _resolve(c.right, values, index, graph)
    d = eval_distance(c.fn, a, b)
    if d is None:
        return Status.UNDEFINED
    return Status.HOLDS if d <= c.threshold else Status.FAILS


def satisfies(values, phi, table: PseudoTable, graph: PropertyGraph | None = None) -> Status:
    """Three-valued conjunction: any failure fails, else any undefined is undefined."""
    undefined = False
    for c in phi:
        s = check_constraint(c, values, table, graph)
        if s is Status.FAILS:
            return Status.FAILS
        undefined |= s is Status.UNDEFINED
    return Status.UNDEFINED if undefined else Status.HOLDS


# --- dependencies -------------------------------------------------------------

def _canonical(constraints) -> tuple:
    return tuple(sorted(set(constraints), key=DistanceConstraint.sort_key))


@dataclass(frozen=True)
class GDD:
    lhs: tuple
    rhs: tuple
    scope: str = "Q"
    name: str = field(default="r", compare=False)
    support: int | None = field(default=None, compare=False)
    confidence: float | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lhs", _canonical(self.lhs))
        object.__setattr__(self, "rhs", _canonical(self.rhs))
        if not self.rhs:
            raise ConstraintError("a dependency needs at least one RHS constraint")

    @property
    def mined(self) -> bool:
        return self.support is not None

    def body(self) -> str:
        """Constraint-only rendering; the textual tiebreak for rankings."""
        lhs = "; ".join(c.render() for c in self.lhs)
        rhs = "; ".join(c.render() for c in self.rhs)
        return f"LHS: {lhs}; RHS: {rhs};"

    def rank_key(self):
        conf = -1.0 if self.confidence is None else self.confidence
        return (-conf, -(self.support or 0), self.body())

    def columns(self, side="both") -> list:
        phis = {"lhs": self.lhs, "rhs": self.rhs, "both": self.lhs + self.rhs}[side]
        cols = []
        for c in phis:
            for col in c.columns():
                if col not in cols:
                    cols.append(col)
        return cols

    def variables(self) -> set:
        return set().union(*(c.variables() for c in self.lhs + self.rhs))

    def with_stats(self, support, confidence, name=None) -> "GDD":
        return replace(self, support=support, confidence=confidence, name=name or self.name)

    def render(self) -> str:
        from .dsl import render_rules
        return render_rules([self])


class SatisfactionReport(NamedTuple):
    satisfied: bool
    violations: list
    undefined: list


def table_satisfies(table: PseudoTable, gdd: GDD, graph: PropertyGraph | None = None) -> SatisfactionReport:
    """Rows where the LHS holds but the RHS fails; undefined rows reported apart."""
    if table.scope and gdd.scope and table.scope != gdd.scope:
        raise ConstraintError(f"rule scope {gdd.scope!r} does not match table scope {table.scope!r}")
    missing = [c for c in gdd.columns() if c not in table_index(table)]
    if missing:
        raise ConstraintError(f"rule references columns not in the table: {missing}")
    violations, undefined = [], []
    for mid, values in table.rows:
        sx = satisfies(values, gdd.lhs, table, graph)
        sy = satisfies(values, gdd.rhs, table, graph)
        if Status.UNDEFINED in (sx, sy):
            undefined.append(mid)
            continue
        if sx is Status.HOLDS and sy is Status.FAILS:
            violations.append(mid)
    return SatisfactionReport(not violations, violations, undefined)


def consolidate(rules, merge_lhs: bool = True) -> list:
    """Merge same-LHS rules (RHS union) and, optionally, same-RHS rules (LHS union).

    Repeats until nothing merges, so the result is idempotent.  Merged rules
    lose their mining statistics; re-score them on the table if needed.
    """
    rules = list(rules)
    if len({r.scope for r in rules}) > 1:
        raise ConstraintError("cannot consolidate rules over different scopes")

    def merge(rules, key, combine):
        groups = {}
        for r in rules:
            groups.setdefault(key(r), []).append(r)
        out = []
        for members in groups.values():
            if len(members) == 1:
                out.append(members[0])
                continue
            first = min(members, key=lambda r: r.name)
            out.append(combine(first, members))
        return out

    while True:
        n = len(rules)
        rules = merge(rules, lambda r: r.lhs, lambda f, ms: GDD(
            f.lhs, [c for m in ms for c in m.rhs], f.scope, f.name))
        if merge_lhs:
            rules = merge(rules, lambda r: r.rhs, lambda f, ms: GDD(
                [c for m in ms for c in m.lhs], f.rhs, f.scope, f.name))
        if len(rules) == n:
            break
    return sorted(rules, key=GDD.body)


# --- masks ---------------------------------------------------------------------

class PositionalMask(NamedTuple):
    bits: tuple
    rhs_bits: tuple

    def covers(self, index: int) -> bool:
        return bool(self.rhs_bits[index])

    @property
    def lhs_indices(self) -> list:
        return [i for i, (b, r) in enumerate(zip(self.bits, self.rhs_bits)) if b and not r]


def to_mask(gdd: GDD, columns) -> PositionalMask:
    columns = [tuple(c) for c in columns]
    index = {c: i for i, c in enumerate(columns)}
    bits = [0] * len(columns)
    rhs_bits = [0] * len(columns)
    for side, phi in (("lhs", gdd.lhs), ("rhs", gdd.rhs)):
        for c in phi:
            for col in c.columns():
                if col not in index:
                    raise ConstraintError(f"column {col[0]}.{col[1]} is not in the table layout")
                bits[index[col]] = 1
                if side == "rhs":
                    rhs_bits[index[col]] = 1
    return PositionalMask(tuple(bits), tuple(rhs_bits))

