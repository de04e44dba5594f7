"""Bundled fixtures and synthetic dataset generators."""
from __future__ import annotations

from importlib import resources

import numpy as np

from .graph import Node, PropertyGraph, loads_graph
from .pattern import GraphPattern

# tuples and attribute counts of the public benchmark datasets
TABLE2_SHAPES = {
    "Restaurant": (864, 6),
    "Customer_shopping_data": (500, 6),
    "Adult": (500, 11),
    "Ncvoter": (500, 7),
    "Entity Resolution": (676, 13),
    "Graph Data Science": (519, 7),
    "WomensWorldCup2019": (514, 13),
}


def _data(name: str) -> str:
    return resources.files("gig.data").joinpath(name).read_text(encoding="utf-8")


def table1(missing: bool = True) -> PropertyGraph:
    """The publisher/game toy graph; node 7's Name is blank unless ``missing=False``."""
    g = loads_graph(_data("table1.json"))
    return g.with_values({("7", "Name"): None}) if missing else g


def table1_pattern() -> GraphPattern:
    import json
    return GraphPattern.from_json(json.loads(_data("table1_pattern.json")))


def planted_fd(n: int = 300, a_domain: int = 10, b_domain: int = 5, noise_domain: int = 7,
               seed: int = 0) -> PropertyGraph:
    """Records ``(A, B, C)`` where ``B`` is a fixed function of ``A`` and ``C`` is noise.

    Every A value occurs at least twice so each ``A = a -> B = f(a)`` rule is
    supported.
    """
    rng = np.random.default_rng(seed)
    a_vals = [f"a{i}" for i in range(a_domain)]
    f = {a: f"b{i % b_domain}" for i, a in enumerate(a_vals)}
    draws = np.concatenate([np.repeat(np.arange(a_domain), 2), rng.integers(0, a_domain, n - 2 * a_domain)])
    rng.shuffle(draws)
    nodes = []
    for i, k in enumerate(draws, start=1):
        a = a_vals[k]
        nodes.append(Node(str(i), "record", {"A": a, "B": f[a], "C": f"c{rng.integers(noise_domain)}"}))
    return PropertyGraph({"record": ["A", "B", "C"]}, nodes)


def record_pattern(label: str = "record") -> GraphPattern:
    return GraphPattern(variables=[("t", label)])


def shaped_graph(tuples: int, attributes: int, seed: int = 0, label: str = "record",
                 domain: int = 20) -> PropertyGraph:
    """Random categorical records with the requested shape (for injection counts)."""
    rng = np.random.default_rng(seed)
    attrs = [f"A{j + 1}" for j in range(attributes)]
    codes = rng.integers(0, domain, size=(tuples, attributes))
    nodes = [Node(str(i + 1), label, {a: f"v{codes[i, j]}" for j, a in enumerate(attrs)})
             for i in range(tuples)]
    return PropertyGraph({label: attrs}, nodes)
