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

# # Walkthrough on the games/publishers toy graph
#
# Two publishers and five games.  Game 7 has lost its name; the goal is to
# recover it from dependencies mined on the rest of the graph.

import numpy as np

from gig.datasets import table1, table1_pattern
from gig.dsl import render_rules
from gig.gdd import consolidate, to_mask
from gig.imputer import find_missing_sites, impute_graph
from gig.miner import MinerConfig, mine, rescore
from gig.pattern import build_pseudo_table
from gig.seqmodel import ModelParams, build_vocab, make_training_pairs, train

full = table1(missing=False)
damaged = table1(missing=True)
pattern = table1_pattern()
print(pattern)

# The pattern matches a publisher and two of its games.  Each match is a row.

table = build_pseudo_table(full, pattern)
print(" | ".join(table.column_names()))
for mid, vals in table.rows:
    print(mid, vals)

# ## Mining
#
# Support at least 2, confidence 1.  Rules sharing a left-hand side are merged
# and scored again.

rules = rescore(consolidate(mine(table, MinerConfig(min_support=2)), merge_lhs=False), table, full)
print(len(rules), "rules")
print(render_rules(rules[:6]))

# Each rule becomes a bit mask over the eleven columns.

for r in rules[:4]:
    print(r.name, to_mask(r, table.columns).bits)

# ## Training
#
# Rule-satisfying rows are turned into (LHS literals, RHS literals) pairs.

vocab = build_vocab(table, rules)
pairs = make_training_pairs(table, rules, full, vocab)
print(len(vocab), "tokens,", len(pairs), "pairs")
print(vocab.decode(pairs[0].enc), "->", vocab.decode(pairs[0].dec))

ckpt = train(pairs, ModelParams(seed=7), vocab)
losses = np.array([h.loss for h in ckpt.history])
print(f"loss {ckpt.initial_loss:.3f} -> {losses[-1]:.3f} in {len(losses)} epochs")

# ## Imputation

gap_table = build_pseudo_table(damaged, pattern)
print(find_missing_sites(gap_table))
result = impute_graph(damaged, gap_table, rules, ckpt)
for d in result.decisions:
    print(d.site.eid, d.site.attribute, d.status, d.rule, repr(d.predicted))
print("node 7 Name:", result.graph.value("7", "Name"))
