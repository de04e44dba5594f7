import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gig.distance import EXACT
from gig.gdd import GDD, Cell, Const, DistanceConstraint
from gig.seqmodel import (CheckpointError, ModelParams, TrainingError, TrainingPair,
                          Transformer, Vocabulary, build_vocab, grad_check, init_weights, kl_loss,
                          load_checkpoint, make_training_pairs, predict_topk, save_checkpoint, train)
from gig.seqmodel import transformer as tf
from gig.seqmodel.checkpoint import checkpoint_bytes, checkpoint_from_bytes
from gig.seqmodel.vocab import BOS, EOS, SEP, SPECIALS, UNK_ID, parse_literals, value_for

TINY = ModelParams(embed_dim=8, num_heads=2, num_layers=1, feedforward_dim=16, dropout_rate=0.0,
                   max_seq_len=16)


def eq(var, attr, value):
    return DistanceConstraint(EXACT, Cell(var, attr), Const(value))


def toy_vocab():
    return Vocabulary(list(SPECIALS) + ["x.A", "y.B", "=0", "a1", "a2", "b1", "b2"],
                      frozenset({"x.A", "y.B"}), frozenset({"=0"}))


def toy_pair(vocab, a="a1", b="b1"):
    return TrainingPair(tuple(vocab.encode(["x.A", "=0", a])),
                        tuple(vocab.encode([BOS, "y.B", "=0", b, EOS])), "r1", "h1")


@pytest.fixture(scope="module")
def memorized():
    vocab = toy_vocab()
    pair = toy_pair(vocab)
    return pair, train([pair] * 50, ModelParams(epochs=30, seed=3), vocab)


# -- vocabulary and pairs ------------------------------------------------------------

def test_vocab_table1(full_table):
    rule = GDD([eq("x", "Name", "EA")], [eq("y", "Name", "F20")])
    v = build_vocab(full_table, [rule])
    for tok in ["x.Name", "y.Name", "GL", "EA", "AF9", "AF11", "F20", "F21"]:
        assert tok in v
    assert v.tokens[:5] == list(SPECIALS)
    assert "Soccer" not in v  # Genre is not referenced


def test_vocab_empty_rules(full_table):
    assert build_vocab(full_table, []).tokens == list(SPECIALS)


def test_vocab_value_once(full_table):
    rule = GDD([eq("y", "Name", "F20")], [eq("y2", "Name", "F20")])
    v = build_vocab(full_table, [rule])
    assert v.tokens.count("F20") == 1
    assert len(set(v.tokens)) == len(v.tokens)


def test_vocab_rejects_duplicates():
    with pytest.raises(ValueError):
        Vocabulary(list(SPECIALS) + ["a", "a"])


def test_training_pair_layout(full_table, full_graph):
    rule = GDD([eq("x", "Name", "EA")], [eq("y", "Genre", "Soccer")], name="r")
    v = build_vocab(full_table, [rule])
    pairs = make_training_pairs(full_table, [rule], full_graph, v)
    h3 = next(p for p in pairs if p.match == "h3")
    assert v.decode(h3.enc) == ["x.Name", "=0", "EA"]
    assert v.decode(h3.dec) == [BOS, "y.Genre", "=0", "Soccer", EOS]
    assert [p.match for p in pairs] == ["h2", "h3", "h4"]


def test_pairs_exclude_violations_and_missing(gap_table, gap_graph):
    rule = GDD([eq("x", "Name", "EA")], [eq("y", "Year", "2019")])
    named = GDD([eq("x", "Name", "EA")], [eq("y", "Name", "F20")])
    v = build_vocab(gap_table, [rule, named])
    assert [p.match for p in make_training_pairs(gap_table, [rule], gap_graph, v)] == ["h2", "h3", "h4"]
    assert [p.match for p in make_training_pairs(gap_table, [named], gap_graph, v)] == ["h4"]


def test_pair_literals_are_sep_joined(full_table, full_graph):
    from gig.distance import EDIT
    lhs = [eq("x", "Name", "EA"), DistanceConstraint(EDIT, Cell("y", "Name"), Cell("y2", "Name"), "<=", 1)]
    rule = GDD(lhs, [eq("y", "Genre", "Soccer")])
    v = build_vocab(full_table, [rule])
    (pair, *_) = make_training_pairs(full_table, [rule], full_graph, v)
    toks = v.decode(pair.enc)
    lits = parse_literals(toks, v)
    assert [tuple(lit.refs) for lit in lits] == [tuple(c.refs()) for c in rule.lhs]
    assert toks.count(SEP) == 2  # between literals and between the two operand values
    assert value_for(lits, "x.Name") == "EA"
    assert value_for(lits, "y2.Name") == "F20"
    name_lit = toks[toks.index("y.Name"):]
    assert name_lit[:5] == ["y.Name", "y2.Name", "<=1", "F20", SEP]


def test_long_pairs_skipped(full_table, full_graph, caplog):
    rule = GDD([eq("x", "Name", "EA")], [eq("y", "Genre", "Soccer")])
    v = build_vocab(full_table, [rule])
    assert make_training_pairs(full_table, [rule], full_graph, v, max_len=4) == []
    assert "longer than 4" in caplog.text


# -- forward pass ----------------------------------------------------------------------

def test_rows_sum_to_one():
    rng = np.random.default_rng(0)
    model = Transformer(init_weights(12, TINY, rng), TINY)
    for _ in range(50):
        enc = rng.integers(1, 12, size=rng.integers(1, 10))
        dec = rng.integers(1, 12, size=rng.integers(1, 10))
        p = model.forward(enc, dec)
        assert p.shape == (len(dec), 12)
        assert np.all(p >= 0) and np.allclose(p.sum(axis=1), 1, atol=1e-6)


def test_causal_mask():
    rng = np.random.default_rng(1)
    model = Transformer(init_weights(12, TINY, rng), TINY)
    enc = [5, 6, 7]
    dec = [1, 8, 9, 10, 11]
    base = model.forward(enc, dec)
    for p in range(len(dec) - 1):
        changed = list(dec)
        changed[p + 1] = 4 if dec[p + 1] != 4 else 3
        out = model.forward(enc, changed)
        assert np.array_equal(out[:p + 1], base[:p + 1])
        assert not np.allclose(out[p + 1:], base[p + 1:])


def test_pad_is_masked():
    rng = np.random.default_rng(2)
    model = Transformer(init_weights(12, TINY, rng), TINY)
    a = model.forward([5, 6, 7], [1, 8])
    b = model.logits(np.array([[5, 6, 7, 0, 0]]), np.array([[1, 8]]))[0][0]
    assert np.allclose(a, tf.ops.softmax(b), atol=1e-12)


def test_zero_weights_give_uniform():
    w = init_weights(9, TINY, np.random.default_rng(0))
    for v in w.values():
        v[...] = 0
    p = Transformer(w, TINY).forward([5, 6], [1, 7, 8])
    assert np.allclose(p, 1 / 9, atol=1e-12)


def test_token_out_of_range():
    model = Transformer(init_weights(9, TINY, np.random.default_rng(0)), TINY)
    with pytest.raises(IndexError):
        model.forward([5, 9], [1])


def test_too_long():
    model = Transformer(init_weights(9, TINY, np.random.default_rng(0)), TINY)
    with pytest.raises(ValueError, match="max_seq_len"):
        model.forward([5] * 40, [1])


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(embed_dim=10, num_heads=3)
    with pytest.raises(ValueError):
        ModelParams(label_smoothing=1.0)


# -- loss ------------------------------------------------------------------------------

def test_kl_one_hot_zero():
    assert kl_loss(np.eye(4)[[2]], [2], 0.0) == 0.0


def test_kl_uniform_ln4():
    assert abs(kl_loss(np.full((1, 4), 0.25), [1], 0.0) - math.log(4)) < 1e-9


def test_kl_smoothed_target_zero():
    q = tf.smoothed_targets(np.array([0, 3]), 4, 0.1)
    assert kl_loss(q, [0, 3], 0.1, pad_id=-1) == pytest.approx(0.0, abs=1e-15)


def test_kl_excludes_pad():
    pred = np.array([[0.25] * 4, [1.0, 0, 0, 0]])
    assert kl_loss(pred, [1, 0], 0.0) == pytest.approx(math.log(4))


def test_kl_clamps_zero_probability():
    assert kl_loss(np.array([[1.0, 0.0]]), [1], 0.0) == pytest.approx(-math.log(1e-12))


probs = st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6)


@settings(max_examples=200, deadline=None)
@given(probs, st.integers(0, 5), st.floats(0, 0.9))
def test_kl_nonnegative(raw, target, eps):
    p = np.array(raw) / sum(raw)
    target = target % len(p)
    loss = kl_loss(p[None], [target], eps, pad_id=-1)
    assert loss >= -1e-12
    q = tf.smoothed_targets(np.array([target]), len(p), eps)
    if np.allclose(p, q[0], atol=1e-9):
        assert loss == pytest.approx(0, abs=1e-9)
    else:
        assert loss > 0


def test_loss_gradient_matches_kl():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 3, 7))
    target = np.array([[1, 2, 0], [3, 3, 3]])
    loss, grad = tf.loss_and_dlogits(logits, target, 0.1)
    assert loss == pytest.approx(kl_loss(tf.ops.softmax(logits), target, 0.1))
    h = 1e-6
    for idx in [(0, 0, 1), (1, 2, 6), (0, 1, 0)]:
        bump = logits.copy()
        bump[idx] += h
        down = logits.copy()
        down[idx] -= h
        num = (tf.loss_and_dlogits(bump, target, 0.1)[0] - tf.loss_and_dlogits(down, target, 0.1)[0]) / (2 * h)
        assert grad[idx] == pytest.approx(num, rel=1e-5, abs=1e-9)


# -- gradients -------------------------------------------------------------------------

def test_grad_check_tiny_model():
    pair = TrainingPair((5, 6, 7, 4, 8), (1, 9, 10, 4, 11, 2), "r", "h")
    worst, rows = grad_check(TINY, pair, 12, step=1e-4, details=True)
    assert len(rows) >= 200
    assert worst < 1e-3


def test_grad_check_richardson_trend():
    pair = TrainingPair((5, 6, 7), (1, 9, 10, 2), "r", "h")
    _, r1 = grad_check(TINY, pair, 12, step=1e-4, seed=4, details=True)
    _, r2 = grad_check(TINY, pair, 12, step=2e-4, seed=4, details=True)
    e1 = np.array([abs(a - n) for *_, a, n, _ in r1])
    e2 = np.array([abs(a - n) for *_, a, n, _ in r2])
    # central differences: doubling the step quadruples truncation error
    live = e2 > 1e-9
    assert live.sum() >= 10
    assert 3.0 < np.median(e2[live] / e1[live]) < 5.0


def test_zero_loss_gradient():
    V = 12
    w = init_weights(V, TINY, np.random.default_rng(0))
    for v in w.values():
        v[...] = 0
    model = Transformer(w, TINY)
    pair = TrainingPair((5, 6, 7), (1, 9, 10, 2), "r", "h")
    loss, grads = tf.batch_loss(model, [pair], (V - 1) / V, with_grads=True)
    assert loss == pytest.approx(0, abs=1e-12)
    assert math.sqrt(sum(float((g ** 2).sum()) for g in grads.values())) < 1e-8


def test_grad_check_with_two_layers_and_batch():
    mp = TINY.replace(num_layers=2)
    pair = TrainingPair((5, 6, 7, 8), (1, 9, 4, 10, 2), "r", "h")
    assert grad_check(mp, pair, 12, step=1e-4, seed=9) < 1e-3


# -- training --------------------------------------------------------------------------

def test_memorization(memorized):
    pair, ckpt = memorized
    assert ckpt.history[-1].loss < 0.1 * ckpt.initial_loss
    losses = [h.loss for h in ckpt.history]
    assert losses == sorted(losses, reverse=True)


def test_memorized_prediction(memorized):
    pair, ckpt = memorized
    (best,) = predict_topk(ckpt, pair.enc, k=1)
    assert best.ids == pair.dec[1:-1]
    assert best.values == ("b1",)
    assert not best.unk_input


def test_beam_width(memorized):
    pair, ckpt = memorized
    beams = predict_topk(ckpt, pair.enc, k=3)
    assert 1 <= len(beams) <= 3
    assert [b.score for b in beams] == sorted((b.score for b in beams), reverse=True)
    with pytest.raises(ValueError):
        predict_topk(ckpt, pair.enc, k=0)


def test_unk_only_input_flagged(memorized):
    _, ckpt = memorized
    (best,) = predict_topk(ckpt, [UNK_ID, UNK_ID], k=1)
    assert best.unk_input


def test_zero_epochs():
    vocab = toy_vocab()
    ckpt = train([toy_pair(vocab)], ModelParams(epochs=0, seed=1), vocab)
    assert ckpt.history == []
    fresh = init_weights(len(vocab), ckpt.params, np.random.default_rng(1))
    assert all(np.array_equal(fresh[k], ckpt.weights[k]) for k in fresh)


def test_no_pairs():
    with pytest.raises(TrainingError):
        train([], ModelParams(), toy_vocab())


def test_divergence_names_epoch(monkeypatch):
    vocab = toy_vocab()
    real = tf.batch_loss

    def poisoned(model, pairs, eps, rng=None, with_grads=False):
        loss, grads = real(model, pairs, eps, rng, with_grads)
        return (float("nan"), grads) if with_grads else (loss, grads)

    monkeypatch.setattr(tf, "batch_loss", poisoned)
    with pytest.raises(TrainingError, match="epoch 1"):
        train([toy_pair(vocab)], ModelParams(epochs=3), vocab)


def test_training_is_reproducible():
    vocab = toy_vocab()
    pairs = [toy_pair(vocab, "a1", "b1"), toy_pair(vocab, "a2", "b2")] * 5
    params = ModelParams(embed_dim=16, feedforward_dim=32, epochs=5, seed=4)
    a, b = train(pairs, params, vocab), train(pairs, params, vocab)
    assert checkpoint_bytes(a) == checkpoint_bytes(b)
    assert a.history == b.history


def test_table1_history_non_increasing(table1_run):
    _, result = table1_run
    losses = [h.loss for h in result.checkpoint.history]
    assert losses and all(b <= a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < result.checkpoint.initial_loss


def test_table1_model_predicts_f20(table1_run):
    _, result = table1_run
    ckpt = result.checkpoint
    enc = ckpt.vocab.encode(["x.Name", "=0", "EA"])
    (best,) = predict_topk(ckpt, enc, k=1)
    assert value_for(parse_literals(best.tokens, ckpt.vocab), "y.Name") == "F20"


# -- checkpoints ---------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path, memorized):
    _, ckpt = memorized
    save_checkpoint(ckpt, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.params == ckpt.params and back.history == ckpt.history
    assert back.vocab.tokens == ckpt.vocab.tokens
    rng = np.random.default_rng(0)
    for _ in range(10):
        enc = rng.integers(4, len(ckpt.vocab), size=rng.integers(1, 6)).tolist()
        assert predict_topk(back, enc, 2) == predict_topk(ckpt, enc, 2)
    assert checkpoint_bytes(back) == checkpoint_bytes(ckpt)


def test_truncated_checkpoint(memorized):
    data = checkpoint_bytes(memorized[1])
    with pytest.raises(CheckpointError, match="integrity"):
        checkpoint_from_bytes(data[:-100])
    with pytest.raises(CheckpointError):
        checkpoint_from_bytes(data[:10])


def test_version_mismatch(memorized):
    import struct
    import zlib
    data = bytearray(checkpoint_bytes(memorized[1]))
    data[4:8] = struct.pack("<I", 99)
    body = bytes(data[:-4])
    with pytest.raises(CheckpointError, match="version 99"):
        checkpoint_from_bytes(body + struct.pack("<I", zlib.crc32(body)))


def test_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint_from_bytes(b"NOPE" + bytes(40))
