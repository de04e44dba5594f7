"""Scope patterns, match enumeration and the pseudo-relational table."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .graph import PropertyGraph, eid_key, value_text

MISSING_MARK = "?"


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class GraphPattern:
    """A scope pattern: ordered typed variables plus relation edges.

    ``distinct`` forbids two variables of the same label from binding the same
    node.  ``ordered`` lists variable pairs ``(v, w)`` whose bound eids must
    satisfy ``eid(v) < eid(w)``; it removes mirror-image matches of
    interchangeable variables.  ``attributes`` optionally projects a variable
    onto a subset of its label's attributes.
    """

    variables: tuple  # ((var, label), ...)
    edges: tuple = ()  # ((src_var, rela, dst_var), ...)
    distinct: bool = True
    ordered: tuple = ()
    attributes: dict = field(default_factory=dict)
    name: str = "Q"

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(tuple(v) for v in self.variables))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(self, "ordered", tuple(tuple(p) for p in self.ordered))
        names = [v for v, _ in self.variables]
        if len(set(names)) != len(names):
            raise PatternError(f"duplicate pattern variables: {names}")
        known = set(names)
        for src, _, dst in self.edges:
            if src not in known or dst not in known:
                raise PatternError(f"edge ({src}, {dst}) uses an undeclared variable")
        for a, b in self.ordered:
            if a not in known or b not in known:
                raise PatternError(f"ordering ({a}, {b}) uses an undeclared variable")
        for v in self.attributes:
            if v not in known:
                raise PatternError(f"attribute projection for undeclared variable {v!r}")
        if len(names) > 1 and not self._connected(names):
            raise PatternError("pattern is disconnected")

    def __hash__(self):
        return hash((self.variables, self.edges, self.distinct, self.ordered, self.name))

    def _connected(self, names):
        adj = {v: set() for v in names}
        for s, _, d in self.edges:
            adj[s].add(d)
            adj[d].add(s)
        seen, stack = {names[0]}, [names[0]]
        while stack:
            for w in adj[stack.pop()] - seen:
                seen.add(w)
                stack.append(w)
        return len(seen) == len(names)

    @property
    def labels(self) -> dict:
        return dict(self.variables)

    def variable_attributes(self, graph_schema: dict, var: str) -> list:
        label = self.labels[var]
        if var in self.attributes:
            attrs = list(self.attributes[var])
            unknown = set(attrs) - set(graph_schema[label])
            if unknown:
                raise PatternError(f"{var}: attributes {sorted(unknown)} not in schema of {label!r}")
            return attrs
        return list(graph_schema[label])

    def to_json(self) -> dict:
        doc = {"name": self.name, "variables": [list(v) for v in self.variables],
               "edges": [list(e) for e in self.edges], "distinct": self.distinct}
        if self.ordered:
            doc["ordered"] = [list(p) for p in self.ordered]
        if self.attributes:
            doc["attributes"] = {k: list(v) for k, v in self.attributes.items()}
        return doc

    @classmethod
    def from_json(cls, doc) -> "GraphPattern":
        return cls(variables=doc["variables"], edges=doc.get("edges", ()),
                   distinct=doc.get("distinct", True), ordered=doc.get("ordered", ()),
                   attributes=doc.get("attributes", {}), name=doc.get("name", "Q"))


def load_pattern(path) -> GraphPattern:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    doc.setdefault("name", "Q")
    return GraphPattern.from_json(doc)


def save_pattern(pattern: GraphPattern, path) -> None:
    Path(path).write_text(json.dumps(pattern.to_json(), indent=1) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Match:
    binding: dict  # var -> eid

    def key(self, variables):
        return tuple(eid_key(self.binding[v]) for v, _ in variables)


def find_matches(graph: PropertyGraph, pattern: GraphPattern) -> list[Match]:
    """All matches of ``pattern`` in ``graph`` by backtracking search.

    Output is sorted lexicographically by the bound eids in variable order.
    """
    for var, label in pattern.variables:
        if label not in graph.schema:
            raise PatternError(f"variable {var!r} has unknown label {label!r}")
    order = [v for v, _ in pattern.variables]
    labels = pattern.labels
    candidates = {v: [n.eid for n in graph.nodes_with_label(labels[v])] for v in order}
    # edges checked as soon as both endpoints are bound
    checks = {v: [] for v in order}
    pos = {v: i for i, v in enumerate(order)}
    for s, r, d in pattern.edges:
        checks[order[max(pos[s], pos[d])]].append((s, r, d))
    less = {v: [] for v in order}
    for a, b in pattern.ordered:
        less[order[max(pos[a], pos[b])]].append((a, b))

    out = []
    binding = {}

    def extend(i):
        if i == len(order):
            out.append(Match(dict(binding)))
            return
        var = order[i]
        for eid in candidates[var]:
            if pattern.distinct and any(
                    binding[w] == eid for w in order[:i] if labels[w] == labels[var]):
                continue
            binding[var] = eid
            if all(graph.has_edge(binding[s], r, binding[d]) for s, r, d in checks[var]) and \
                    all(eid_key(binding[a]) < eid_key(binding[b]) for a, b in less[var]):
                extend(i + 1)
            del binding[var]

    extend(0)
    out.sort(key=lambda m: m.key(pattern.variables))
    return out


@dataclass
class PseudoTable:
    """Rows are pattern matches, columns are ``(variable, attribute)`` pairs.

    Each variable contributes an ``id`` column (the bound eid) followed by its
    attributes.  Missing values stay in the table as ``None``.
    """

    columns: list  # [(var, attr), ...]
    rows: list  # [(match_id, [values...]), ...]
    labels: dict = field(default_factory=dict)  # var -> label (may be empty when read from CSV)
    scope: str = "Q"

    def __len__(self):
        return len(self.rows)

    @property
    def variables(self) -> list:
        seen = []
        for v, _ in self.columns:
            if v not in seen:
                seen.append(v)
        return seen

    def column_names(self) -> list:
        return [f"{v}.{a}" for v, a in self.columns]

    def column(self, idx) -> list:
        return [vals[idx] for _, vals in self.rows]

    def row(self, match_id):
        for mid, vals in self.rows:
            if mid == match_id:
                return vals
        raise KeyError(match_id)

    def binding(self, values) -> dict:
        return {v: values[i] for i, (v, a) in enumerate(self.columns) if a == "id"}


def build_pseudo_table(graph: PropertyGraph, pattern: GraphPattern,
                       matches: list[Match] | None = None) -> PseudoTable:
    if matches is None:
        matches = find_matches(graph, pattern)
    columns = []
    for var, _ in pattern.variables:
        columns.append((var, "id"))
        columns.extend((var, a) for a in pattern.variable_attributes(graph.schema, var))
    rows = []
    for i, m in enumerate(matches, start=1):
        vals = [m.binding[v] if a == "id" else graph.value(m.binding[v], a) for v, a in columns]
        rows.append((f"h{i}", vals))
    return PseudoTable(columns, rows, pattern.labels, pattern.name)


def column_index(table: PseudoTable, variable: str, attribute: str) -> int:
    try:
        return table.columns.index((variable, attribute))
    except ValueError:
        raise KeyError(f"no column {variable}.{attribute}") from None


def write_table_csv(table: PseudoTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["match", *table.column_names()])
        for mid, vals in table.rows:
            w.writerow([mid, *(MISSING_MARK if v is None else value_text(v) for v in vals)])


def read_table_csv(path, scope: str = "Q", labels: dict | None = None) -> PseudoTable:
    """Inverse of :func:`write_table_csv`; cell values come back as text."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "match":
            raise PatternError(f"{path}: first column must be 'match'")
        columns = []
        for name in header[1:]:
            var, sep, attr = name.partition(".")
            if not sep:
                raise PatternError(f"{path}: column {name!r} is not of the form var.attr")
            columns.append((var, attr))
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise PatternError(f"{path}:{lineno}: expected {len(header)} fields")
            rows.append((rec[0], [None if c == MISSING_MARK else c for c in rec[1:]]))
    return PseudoTable(columns, rows, dict(labels or {}), scope)
