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

# # Sanity checks on the sequence model

import math

import numpy as np

from gig.seqmodel import ModelParams, TrainingPair, Transformer, grad_check, init_weights, kl_loss
from gig.seqmodel import transformer as tf

tiny = ModelParams(embed_dim=8, num_heads=2, num_layers=1, feedforward_dim=16, dropout_rate=0.0,
                   max_seq_len=16)
pair = TrainingPair((5, 6, 7, 4, 8), (1, 9, 10, 4, 11, 2), "r", "h")

# Analytic gradients against central differences.  Halving the step should
# cut the error by about four.

for step in (4e-4, 2e-4, 1e-4):
    _, rows = grad_check(tiny, pair, 12, step=step, details=True)
    errs = np.array([abs(a - n) for *_, a, n, _ in rows])
    print(f"step {step:.0e}: max abs err {errs.max():.2e}, max rel err {max(r[-1] for r in rows):.2e}")

# KL against a smoothed one-hot target.

print(kl_loss(np.full((1, 4), 0.25), [2], 0.0), math.log(4))
q = tf.smoothed_targets(np.array([1, 3]), 4, 0.1)
print(q, kl_loss(q, [1, 3], 0.1, pad_id=-1))

# With every weight zeroed the output is uniform.

w = init_weights(9, tiny, np.random.default_rng(0))
for v in w.values():
    v[...] = 0
print(Transformer(w, tiny).forward([5, 6], [1, 7])[0])
