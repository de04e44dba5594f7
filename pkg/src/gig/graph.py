"""Property-graph data model, ingestion, persistence and missing-value injection.

Attribute values are plain Python objects: ``str`` for text, ``int``/``float``
for numbers and ``None`` for a missing cell.  ``None`` is never confused with
``""`` or ``0``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

MISSING = None

_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class GraphError(ValueError):
    """Raised for malformed graphs, documents and ingestion input."""


def is_missing(value) -> bool:
    return value is None


def parse_number(value):
    """Return ``value`` as a float if it is a clean decimal, else ``None``."""
    if isinstance(value, bool) or value is None:
        return None
    if isinstance(value, (int, float)):
        return float(value) if math.isfinite(value) else None
    text = str(value).strip()
    if not _NUMBER_RE.match(text):
        return None
    return float(text)


def value_text(value) -> str:
    """Canonical text form used for tokens, equality and CSV export."""
    if value is None:
        raise ValueError("missing value has no text form")
    if isinstance(value, float):
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)


def value_kind(value) -> str:
    return "numeric" if parse_number(value) is not None else "text"


def _natural(eid: str):
    return (0, int(eid), eid) if eid.isdigit() else (1, 0, eid)


def eid_key(eid) -> tuple:
    """Sort key for entity ids: numeric ids in numeric order, then the rest."""
    return _natural(str(eid))


@dataclass(frozen=True)
class Node:
    eid: str
    label: str
    attrs: dict = field(default_factory=dict)

    def get(self, attribute):
        return self.attrs.get(attribute)


@dataclass(frozen=True, order=True)
class Edge:
    src: str
    rela: str
    dst: str


class Domain(NamedTuple):
    values: frozenset
    kind: str


@dataclass(frozen=True)
class GroundTruth:
    """Original values of the cells blanked by :func:`inject_missing`."""

    entries: tuple = ()  # (eid, attribute, original value)

    def __len__(self):
        return len(self.entries)

    def lookup(self) -> dict:
        return {(eid, attr): value for eid, attr, value in self.entries}

    def to_json(self) -> dict:
        return {"entries": [{"eid": e, "attribute": a, "value": v} for e, a, v in self.entries]}

    @classmethod
    def from_json(cls, doc) -> "GroundTruth":
        return cls(tuple((str(d["eid"]), d["attribute"], d["value"]) for d in doc["entries"]))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class PropertyGraph:
    """Typed nodes with attribute maps plus labelled relation edges.

    Treated as immutable: every "mutating" helper returns a new graph.
    """

    def __init__(self, schema: dict, nodes: Iterable[Node] = (), edges: Iterable[Edge] = ()):
        self.schema = {label: list(attrs) for label, attrs in schema.items()}
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.eid in self.nodes:
                raise GraphError(f"duplicate eid {node.eid!r}")
            if node.label not in self.schema:
                raise GraphError(f"node {node.eid!r} has unknown label {node.label!r}")
            extra = set(node.attrs) - set(self.schema[node.label])
            if extra:
                raise GraphError(f"node {node.eid!r} has attributes outside its schema: {sorted(extra)}")
            self.nodes[node.eid] = node
        self.edges = tuple(sorted(set(edges)))
        for e in self.edges:
            for end in (e.src, e.dst):
                if end not in self.nodes:
                    raise GraphError(f"edge {e.src}-{e.rela}->{e.dst} references missing node {end!r}")
        self._out: dict[tuple[str, str], set] = {}
        for e in self.edges:
            self._out.setdefault((e.src, e.rela), set()).add(e.dst)

    def __eq__(self, other):
        if not isinstance(other, PropertyGraph):
            return NotImplemented
        return self.schema == other.schema and self.nodes == other.nodes and self.edges == other.edges

    def __repr__(self):
        return f"PropertyGraph({len(self.nodes)} nodes, {len(self.edges)} edges, labels={list(self.schema)})"

    def node(self, eid) -> Node:
        return self.nodes[str(eid)]

    def value(self, eid, attribute):
        return self.nodes[str(eid)].attrs.get(attribute)

    def nodes_with_label(self, label) -> list[Node]:
        return sorted((n for n in self.nodes.values() if n.label == label), key=lambda n: eid_key(n.eid))

    def targets(self, eid, rela) -> set:
        return self._out.get((str(eid), rela), set())

    def has_edge(self, src, rela, dst) -> bool:
        return dst in self._out.get((src, rela), ())

    def cells(self):
        """All attribute cells ``(eid, attribute)`` in canonical order."""
        for eid in sorted(self.nodes, key=eid_key):
            node = self.nodes[eid]
            for attr in self.schema[node.label]:
                yield eid, attr

    def with_values(self, updates: dict) -> "PropertyGraph":
        """Copy of the graph with ``{(eid, attribute): value}`` applied."""
        attrs = {eid: dict(n.attrs) for eid, n in self.nodes.items()}
        for (eid, attr), value in updates.items():
            node = self.nodes[str(eid)]
            if attr not in self.schema[node.label]:
                raise GraphError(f"{attr!r} is not an attribute of {node.label!r}")
            attrs[node.eid][attr] = value
        nodes = [Node(n.eid, n.label, attrs[n.eid]) for n in self.nodes.values()]
        return PropertyGraph(self.schema, nodes, self.edges)

    def merge(self, other: "PropertyGraph") -> "PropertyGraph":
        schema = dict(self.schema)
        for label, attrs in other.schema.items():
            if label in schema and schema[label] != attrs:
                raise GraphError(f"conflicting schema for label {label!r}")
            schema[label] = attrs
        return PropertyGraph(schema, [*self.nodes.values(), *other.nodes.values()], [*self.edges, *other.edges])


# ---------------------------------------------------------------------------
# ingestion

def ingest_csv(rows: Iterable[Sequence[str]], table_name: str, id_column: str | None = None,
               refs: dict | None = None, base: PropertyGraph | None = None,
               na_values: Iterable[str] = ()) -> PropertyGraph:
    """Turn tabular records (header row first) into graph nodes.

    Each row becomes one node labelled ``table_name``.  ``id_column`` supplies
    the entity id; without it ids are the 1-based row ordinals.  ``refs`` maps
    a column to a referenced label: its value becomes an edge named after that
    label, pointing at the node with that id (in ``base`` or this table).
    """
    refs = dict(refs or {})
    na = set(na_values)
    rows = iter(rows)
    try:
        header = [h.strip() for h in next(rows)]
    except StopIteration:
        raise GraphError("CSV input has no header row") from None
    if len(set(header)) != len(header):
        raise GraphError(f"duplicate column names in header: {header}")
    for col in ([id_column] if id_column else []) + list(refs):
        if col not in header:
            raise GraphError(f"column {col!r} not in header {header}")
    attrs = [h for h in header if h != id_column and h not in refs]

    nodes, edges, seen = [], [], {}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise GraphError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        rec = dict(zip(header, row))
        eid = rec[id_column].strip() if id_column else str(lineno - 1)
        if eid in seen:
            raise GraphError(f"duplicate eid {eid!r} on rows {seen[eid]} and {lineno}")
        seen[eid] = lineno
        nodes.append(Node(eid, table_name, {a: (None if rec[a] in na else rec[a]) for a in attrs}))
        for col, label in refs.items():
            if rec[col] not in na and rec[col] != "":
                edges.append(Edge(eid, label, rec[col].strip()))

    graph = PropertyGraph({table_name: attrs}, nodes)
    if base is not None:
        graph = base.merge(graph)
    return PropertyGraph(graph.schema, graph.nodes.values(), edges + list(graph.edges))


def ingest_csv_file(path, table_name: str, delimiter: str = ",", **kwargs) -> PropertyGraph:
    with open(path, newline="", encoding="utf-8") as fh:
        return ingest_csv(csv.reader(fh, delimiter=delimiter), table_name, **kwargs)


# ---------------------------------------------------------------------------
# persistence

def graph_to_json(graph: PropertyGraph) -> dict:
    nodes = []
    for eid in sorted(graph.nodes, key=eid_key):
        n = graph.nodes[eid]
        nodes.append({"eid": n.eid, "label": n.label,
                      "attrs": {a: n.attrs.get(a) for a in graph.schema[n.label]}})
    edges = [{"src": e.src, "rela": e.rela, "dst": e.dst} for e in graph.edges]
    return {"schema": graph.schema, "nodes": nodes, "edges": edges}


def dumps_graph(graph: PropertyGraph) -> str:
    return json.dumps(graph_to_json(graph), sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def save_graph(graph: PropertyGraph, path) -> None:
    Path(path).write_text(dumps_graph(graph), encoding="utf-8")


def graph_from_json(doc) -> PropertyGraph:
    def need(obj, key, where, kind):
        if not isinstance(obj, dict) or key not in obj:
            raise GraphError(f"{where}: missing key {key!r}")
        if not isinstance(obj[key], kind):
            names = kind.__name__ if isinstance(kind, type) else " or ".join(k.__name__ for k in kind)
            raise GraphError(f"{where}.{key}: expected {names}")
        return obj[key]

    schema = need(doc, "schema", "document", dict)
    for label, attrs in schema.items():
        if not isinstance(attrs, list) or not all(isinstance(a, str) for a in attrs):
            raise GraphError(f"schema.{label}: expected a list of attribute names")
    nodes = []
    for i, nd in enumerate(need(doc, "nodes", "document", list)):
        where = f"nodes[{i}]"
        attrs = need(nd, "attrs", where, dict)
        for a, v in attrs.items():
            if isinstance(v, (dict, list, bool)):
                raise GraphError(f"{where}.attrs.{a}: unsupported value {v!r}")
        nodes.append(Node(str(need(nd, "eid", where, (str, int))), need(nd, "label", where, str), dict(attrs)))
    edges = []
    for i, ed in enumerate(doc.get("edges", [])):
        where = f"edges[{i}]"
        edges.append(Edge(str(need(ed, "src", where, (str, int))), need(ed, "rela", where, str),
                          str(need(ed, "dst", where, (str, int)))))
    return PropertyGraph(schema, nodes, edges)


def loads_graph(text: str) -> PropertyGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"malformed graph document at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return graph_from_json(doc)


def load_graph(path) -> PropertyGraph:
    return loads_graph(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# missing values

def missing_count(pct: float, cells: int) -> int:
    """round(pct * cells) with halves rounded up, computed exactly."""
    exact = Fraction(str(pct)) * cells
    return math.floor(exact + Fraction(1, 2))


def inject_missing(graph: PropertyGraph, pct: float, seed: int,
                   attributes: Iterable | None = None) -> tuple[PropertyGraph, GroundTruth]:
    """Blank ``round(pct * tuples * attributes)`` cells chosen uniformly by ``seed``.

    ``attributes`` optionally restricts selection to some attribute names (or
    ``(label, attribute)`` pairs); the count is then taken over those cells
    only.  Cells that are already missing are never selected.
    """
    if not 0 <= pct <= 1:
        raise ValueError(f"pct must lie in [0, 1], got {pct}")
    cells = list(graph.cells())
    if attributes is not None:
        wanted = set(attributes)
        cells = [(eid, a) for eid, a in cells if a in wanted or (graph.nodes[eid].label, a) in wanted]
    count = missing_count(pct, len(cells))
    available = [c for c in cells if graph.value(*c) is not None]
    if count > len(available):
        raise ValueError(f"requested {count} missing cells but only {len(available)} are available")
    if count == 0:
        return graph, GroundTruth()
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(available), size=count, replace=False).tolist())
    chosen = [available[i] for i in picked]
    truth = GroundTruth(tuple((eid, a, graph.value(eid, a)) for eid, a in chosen))
    return graph.with_values({c: None for c in chosen}), truth


def mask_cells(graph: PropertyGraph, cells: Iterable[tuple]) -> tuple[PropertyGraph, GroundTruth]:
    """Blank an explicit list of ``(eid, attribute)`` cells."""
    chosen = [(str(e), a) for e, a in cells]
    for eid, a in chosen:
        if graph.value(eid, a) is None:
            raise ValueError(f"cell ({eid}, {a}) is already missing")
    truth = GroundTruth(tuple((eid, a, graph.value(eid, a)) for eid, a in chosen))
    return graph.with_values({c: None for c in chosen}), truth


def attribute_domain(graph: PropertyGraph, label: str, attribute: str) -> Domain:
    """Distinct observed values of ``label.attribute`` and their majority kind."""
    if label not in graph.schema:
        raise KeyError(f"unknown label {label!r}")
    if attribute not in graph.schema[label]:
        raise KeyError(f"unknown attribute {label}.{attribute}")
    values = {n.attrs.get(attribute) for n in graph.nodes_with_label(label)}
    values.discard(None)
    return Domain(frozenset(values), infer_kind(values))


def infer_kind(values: Iterable) -> str:
    values = list(values)
    numeric = sum(parse_number(v) is not None for v in values)
    return "numeric" if values and numeric * 2 > len(values) else "text"


def read_rows(text: str, delimiter: str = ",") -> list[list[str]]:
    return list(csv.reader(io.StringIO(text), delimiter=delimiter))
