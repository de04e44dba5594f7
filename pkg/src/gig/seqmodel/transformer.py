"""Encoder-decoder attention model trained with a label-smoothed KL loss.

Post-norm layout: each sub-layer computes ``LayerNorm(x + Dropout(f(x)))``.
Token embeddings are scaled by ``sqrt(embed_dim)`` and summed with fixed
sinusoidal positions.  Everything runs in float64 numpy on one CPU thread of
control, which keeps training bit-reproducible for a fixed seed.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import ops
from .vocab import BOS_ID, EOS_ID, PAD_ID, UNK_ID, TrainingPair, Vocabulary, parse_literals

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelParams:
    embed_dim: int = 64
    num_heads: int = 2
    num_layers: int = 2
    feedforward_dim: int = 128
    max_seq_len: int = 96
    dropout_rate: float = 0.1
    label_smoothing: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    min_learning_rate: float = 1e-5

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if not 0 <= self.label_smoothing < 1:
            raise ValueError("label_smoothing must lie in [0, 1)")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def replace(self, **kw) -> "ModelParams":
        return ModelParams(**{**asdict(self), **kw})


def init_weights(vocab_size: int, mp: ModelParams, rng) -> dict:
    d, f = mp.embed_dim, mp.feedforward_dim

    def xavier(n_in, n_out):
        lim = math.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-lim, lim, size=(n_in, n_out))

    w = {"src_emb": rng.normal(0, d ** -0.5, size=(vocab_size, d)),
         "tgt_emb": rng.normal(0, d ** -0.5, size=(vocab_size, d))}

    def attn(prefix):
        for name in "qkvo":
            w[f"{prefix}{name}.w"] = xavier(d, d)
            w[f"{prefix}{name}.b"] = np.zeros(d)

    def norm(prefix):
        w[prefix + "g"] = np.ones(d)
        w[prefix + "b"] = np.zeros(d)

    def ffn(prefix):
        w[prefix + "1.w"], w[prefix + "1.b"] = xavier(d, f), np.zeros(f)
        w[prefix + "2.w"], w[prefix + "2.b"] = xavier(f, d), np.zeros(d)

    for l in range(mp.num_layers):
        attn(f"enc{l}.attn."), norm(f"enc{l}.ln1."), ffn(f"enc{l}.ffn."), norm(f"enc{l}.ln2.")
    for l in range(mp.num_layers):
        attn(f"dec{l}.self."), norm(f"dec{l}.ln1."), attn(f"dec{l}.cross."), norm(f"dec{l}.ln2.")
        ffn(f"dec{l}.ffn."), norm(f"dec{l}.ln3.")
    w["out.w"] = xavier(d, vocab_size)
    w["out.b"] = np.zeros(vocab_size)
    return w


class Transformer:
    def __init__(self, weights: dict, mp: ModelParams):
        self.w = weights
        self.mp = mp
        self.vocab_size = weights["out.b"].shape[0]
        self._pos = ops.sinusoidal_positions(mp.max_seq_len + 1, mp.embed_dim)

    # -- forward -----------------------------------------------------------

    def _embed(self, ids, table, rng, caches):
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError("token id out of range")
        T = ids.shape[1]
        if T > self._pos.shape[0]:
            raise ValueError(f"sequence of length {T} exceeds max_seq_len {self.mp.max_seq_len}")
        x = self.w[table][ids] * math.sqrt(self.mp.embed_dim) + self._pos[:T]
        x, keep = ops.dropout_forward(x, self.mp.dropout_rate, rng)
        caches.append((table, ids, keep))
        return x

    def _sublayer(self, x, fx, prefix, rng, caches):
        fx, keep = ops.dropout_forward(fx, self.mp.dropout_rate, rng)
        y, ln = ops.layernorm_forward(x + fx, self.w[prefix + "g"], self.w[prefix + "b"])
        caches.append((keep, ln))
        return y

    def encode(self, enc, rng=None, caches=None):
        caches = [] if caches is None else caches
        h = self.mp.num_heads
        key_mask = (enc != PAD_ID)[:, None, :]
        x = self._embed(enc, "src_emb", rng, caches)
        for l in range(self.mp.num_layers):
            a, c = ops.attention_forward(x, x, key_mask, self.w, f"enc{l}.attn.", h)
            caches.append(c)
            x = self._sublayer(x, a, f"enc{l}.ln1.", rng, caches)
            f, c = ops.ffn_forward(x, self.w, f"enc{l}.ffn.")
            caches.append(c)
            x = self._sublayer(x, f, f"enc{l}.ln2.", rng, caches)
        return x, key_mask

    def decode(self, memory, mem_mask, dec, rng=None, caches=None):
        caches = [] if caches is None else caches
        h = self.mp.num_heads
        T = dec.shape[1]
        self_mask = np.tril(np.ones((T, T), dtype=bool))[None] & (dec != PAD_ID)[:, None, :]
        x = self._embed(dec, "tgt_emb", rng, caches)
        for l in range(self.mp.num_layers):
            a, c = ops.attention_forward(x, x, self_mask, self.w, f"dec{l}.self.", h)
            caches.append(c)
            x = self._sublayer(x, a, f"dec{l}.ln1.", rng, caches)
            a, c = ops.attention_forward(x, memory, mem_mask, self.w, f"dec{l}.cross.", h)
            caches.append(c)
            x = self._sublayer(x, a, f"dec{l}.ln2.", rng, caches)
            f, c = ops.ffn_forward(x, self.w, f"dec{l}.ffn.")
            caches.append(c)
            x = self._sublayer(x, f, f"dec{l}.ln3.", rng, caches)
        logits, _ = ops.linear_forward(x, self.w["out.w"], self.w["out.b"])
        caches.append(x)
        return logits

    def logits(self, enc, dec, rng=None):
        """Batched logits plus the caches needed by :meth:`backward`."""
        enc_c, dec_c = [], []
        memory, mem_mask = self.encode(enc, rng, enc_c)
        out = self.decode(memory, mem_mask, dec, rng, dec_c)
        return out, (enc_c, dec_c)

    def forward(self, enc, dec_prefix) -> np.ndarray:
        """Next-token distributions for one sequence pair, shape ``(len(dec_prefix), V)``."""
        enc = np.asarray(enc, dtype=np.int64)[None]
        dec = np.asarray(dec_prefix, dtype=np.int64)[None]
        out, _ = self.logits(enc, dec)
        return ops.softmax(out[0])

    # -- backward ----------------------------------------------------------

    def _embed_back(self, dx, cache, grads):
        table, ids, keep = cache
        dx = ops.dropout_backward(dx, keep) * math.sqrt(self.mp.embed_dim)
        g = grads.setdefault(table, np.zeros_like(self.w[table]))
        np.add.at(g, ids.reshape(-1), dx.reshape(-1, dx.shape[-1]))

    def _sublayer_back(self, dy, cache, prefix, grads):
        keep, ln = cache
        dsum = ops.layernorm_backward(dy, ln, grads, prefix)
        return dsum, ops.dropout_backward(dsum, keep)

    def backward(self, dlogits, caches) -> dict:
        enc_c, dec_c = caches
        grads = {}
        L = self.mp.num_layers
        dc = list(dec_c)
        x_final = dc.pop()
        dx = ops.linear_backward(dlogits, x_final, self.w["out.w"], grads, "out.")
        dmem = 0.0
        for l in reversed(range(L)):
            ln3, ffc, ln2, crc, ln1, sac = dc.pop(), dc.pop(), dc.pop(), dc.pop(), dc.pop(), dc.pop()
            dres, df = self._sublayer_back(dx, ln3, f"dec{l}.ln3.", grads)
            dx = dres + ops.ffn_backward(df, ffc, self.w, grads, f"dec{l}.ffn.")
            dres, da = self._sublayer_back(dx, ln2, f"dec{l}.ln2.", grads)
            dq, dm = ops.attention_backward(da, crc, self.w, grads, f"dec{l}.cross.")
            dx, dmem = dres + dq, dmem + dm
            dres, da = self._sublayer_back(dx, ln1, f"dec{l}.ln1.", grads)
            dq, dkv = ops.attention_backward(da, sac, self.w, grads, f"dec{l}.self.")
            dx = dres + dq + dkv
        self._embed_back(dx, dc.pop(), grads)

        ec = list(enc_c)
        dx = dmem
        for l in reversed(range(L)):
            ln2, ffc, ln1, atc = ec.pop(), ec.pop(), ec.pop(), ec.pop()
            dres, df = self._sublayer_back(dx, ln2, f"enc{l}.ln2.", grads)
            dx = dres + ops.ffn_backward(df, ffc, self.w, grads, f"enc{l}.ffn.")
            dres, da = self._sublayer_back(dx, ln1, f"enc{l}.ln1.", grads)
            dq, dkv = ops.attention_backward(da, atc, self.w, grads, f"enc{l}.attn.")
            dx = dres + dq + dkv
        if isinstance(dx, np.ndarray):
            self._embed_back(dx, ec.pop(), grads)
        for name, value in self.w.items():
            grads.setdefault(name, np.zeros_like(value))
        return grads


# -- loss ------------------------------------------------------------------------

def smoothed_targets(target_ids, vocab_size: int, eps: float) -> np.ndarray:
    q = np.full(np.shape(target_ids) + (vocab_size,), eps / (vocab_size - 1) if vocab_size > 1 else 0.0)
    np.put_along_axis(q, np.asarray(target_ids)[..., None], 1.0 - eps, axis=-1)
    return q


def kl_loss(pred, target_ids, eps: float = 0.0, pad_id: int = PAD_ID) -> float:
    """Mean over non-PAD positions of KL(smoothed one-hot || pred).

    Predicted probabilities are floored at 1e-12 before taking logs.
    """
    pred = np.asarray(pred, dtype=float)
    target_ids = np.asarray(target_ids)
    keep = target_ids != pad_id
    if not keep.any():
        return 0.0
    q = smoothed_targets(target_ids, pred.shape[-1], eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        qlogq = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)
    kl = (qlogq - q * np.log(np.maximum(pred, PROB_FLOOR))).sum(axis=-1)
    return float(kl[keep].mean())


def loss_and_dlogits(logits, target_ids, eps):
    """KL loss from logits and its gradient with respect to the logits."""
    V = logits.shape[-1]
    keep = target_ids != PAD_ID
    n = max(int(keep.sum()), 1)
    logp = ops.log_softmax(logits)
    q = smoothed_targets(target_ids, V, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        qlogq = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)
    kl = (qlogq - q * np.maximum(logp, math.log(PROB_FLOOR))).sum(axis=-1)
    loss = float(kl[keep].sum() / n)
    dlogits = (np.exp(logp) - q) * keep[..., None] / n
    return loss, dlogits


# -- batching / training -----------------------------------------------------------

def pad_batch(seqs) -> np.ndarray:
    width = max(len(s) for s in seqs)
    out = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
    return out


def _batch_arrays(pairs):
    enc = pad_batch([p.enc for p in pairs])
    dec = pad_batch([p.dec for p in pairs])
    return enc, dec[:, :-1], dec[:, 1:]


def batch_loss(model: Transformer, pairs, eps, rng=None, with_grads=False):
    enc, dec_in, target = _batch_arrays(pairs)
    logits, caches = model.logits(enc, dec_in, rng)
    loss, dlogits = loss_and_dlogits(logits, target, eps)
    if not with_grads:
        return loss, None
    return loss, model.backward(dlogits, caches)


def dataset_loss(model: Transformer, pairs, eps, chunk: int = 256) -> float:
    """Token-weighted mean loss over all pairs with dropout off."""
    total = tokens = 0.0
    for i in range(0, len(pairs), chunk):
        part = pairs[i:i + chunk]
        n = sum(len(p.dec) - 1 for p in part)
        loss, _ = batch_loss(model, part, eps)
        total += loss * n
        tokens += n
    return total / tokens


class HistoryEntry(NamedTuple):
    epoch: int
    loss: float
    learning_rate: float


@dataclass
class Checkpoint:
    vocab: Vocabulary
    params: ModelParams
    weights: dict
    history: list = field(default_factory=list)
    initial_loss: float | None = None

    def model(self) -> Transformer:
        return Transformer(self.weights, self.params)


class _Adam:
    def __init__(self, weights, b1=0.9, b2=0.98, eps=1e-9):
        self.m = {k: np.zeros_like(v) for k, v in weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in weights.items()}
        self.t = 0
        self.b1, self.b2, self.eps = b1, b2, eps

    def step(self, weights, grads, lr):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in sorted(weights):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            weights[k] -= lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def snapshot(self):
        return ({k: v.copy() for k, v in self.m.items()}, {k: v.copy() for k, v in self.v.items()}, self.t)

    def restore(self, snap):
        m, v, self.t = snap
        self.m = {k: a.copy() for k, a in m.items()}
        self.v = {k: a.copy() for k, a in v.items()}


def train(pairs, params: ModelParams, vocab: Vocabulary, log=None) -> Checkpoint:
    """Mini-batch Adam with teacher forcing and learning-rate halving on plateaus.

    After every epoch the full-data loss (dropout off) is measured.  If it did
    not improve, the epoch is rolled back and the learning rate halved, so
    the recorded history never increases.  Training stops early once the
    learning rate drops below ``min_learning_rate``.
    """
    pairs = list(pairs)
    if not pairs:
        raise TrainingError("no training pairs")
    too_long = [p for p in pairs if max(len(p.enc), len(p.dec)) > params.max_seq_len]
    if too_long:
        raise TrainingError(f"{len(too_long)} pairs exceed max_seq_len={params.max_seq_len}")
    rng = np.random.default_rng(params.seed)
    weights = init_weights(len(vocab), params, rng)
    model = Transformer(weights, params)
    eps = params.label_smoothing
    initial = dataset_loss(model, pairs, eps)
    ckpt = Checkpoint(vocab, params, weights, [], initial)
    if params.epochs == 0:
        return ckpt

    opt = _Adam(weights)
    lr = params.learning_rate
    best = initial
    saved = ({k: v.copy() for k, v in weights.items()}, opt.snapshot())
    for epoch in range(1, params.epochs + 1):
        order = rng.permutation(len(pairs))
        for i in range(0, len(order), params.batch_size):
            batch = [pairs[j] for j in order[i:i + params.batch_size]]
            loss, grads = batch_loss(model, batch, eps, rng, with_grads=True)
            if not math.isfinite(loss):
                raise TrainingError(f"loss diverged (NaN/inf) in epoch {epoch}")
            opt.step(weights, grads, lr)
        current = dataset_loss(model, pairs, eps)
        if not math.isfinite(current):
            raise TrainingError(f"loss diverged (NaN/inf) in epoch {epoch}")
        if current < best:
            best = current
            saved = ({k: v.copy() for k, v in weights.items()}, opt.snapshot())
        else:
            for k, v in saved[0].items():
                weights[k][...] = v
            opt.restore(saved[1])
            lr /= 2
        ckpt.history.append(HistoryEntry(epoch, best, lr))
        if log is not None:
            log(epoch, best, lr)
        if lr < params.min_learning_rate:
            break
    if not best < initial:
        raise TrainingError(f"training did not reduce the loss (initial {initial:.6g}, final {best:.6g})")
    return ckpt


# -- gradient check -----------------------------------------------------------------

def grad_check(params: ModelParams, pair: TrainingPair, vocab_size: int, step: float = 1e-4,
               samples: int = 200, seed: int = 0, weights: dict | None = None,
               details: bool = False):
    """Max relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, 1e-7)`` over ``samples``
    weights drawn across every tensor.
    """
    params = params.replace(dropout_rate=0.0)
    rng = np.random.default_rng(seed)
    if weights is None:
        weights = init_weights(vocab_size, params, rng)
    model = Transformer(weights, params)
    eps = params.label_smoothing
    _, grads = batch_loss(model, [pair], eps, with_grads=True)

    names = sorted(weights)
    sizes = np.array([weights[n].size for n in names], dtype=float)
    per = np.maximum(2, np.ceil(samples * sizes / sizes.sum())).astype(int)
    picks = []
    for name, k in zip(names, per):
        for flat in rng.choice(weights[name].size, size=min(k, weights[name].size), replace=False):
            picks.append((name, int(flat)))

    worst, rows = 0.0, []
    for name, flat in picks:
        arr = weights[name].reshape(-1)
        orig = arr[flat]
        arr[flat] = orig + step
        lp, _ = batch_loss(model, [pair], eps)
        arr[flat] = orig - step
        lm, _ = batch_loss(model, [pair], eps)
        arr[flat] = orig
        num = (lp - lm) / (2 * step)
        ana = grads[name].reshape(-1)[flat]
        rel = abs(ana - num) / max(abs(ana), abs(num), 1e-7)
        worst = max(worst, rel)
        rows.append((name, flat, ana, num, rel))
    return (worst, rows) if details else worst


# -- decoding ------------------------------------------------------------------------

class Prediction(NamedTuple):
    ids: tuple
    tokens: tuple
    values: tuple
    score: float
    unk_input: bool = False


def _beam_search(model: Transformer, enc, k: int, max_len: int):
    enc_arr = np.asarray(enc, dtype=np.int64)[None]
    memory, mem_mask = model.encode(enc_arr)
    alive = [((BOS_ID,), 0.0)]
    done = []
    while alive and len(done) < k:
        dec = np.array([ids for ids, _ in alive], dtype=np.int64)
        mem = np.repeat(memory, len(alive), axis=0)
        mask = np.repeat(mem_mask, len(alive), axis=0)
        logp = ops.log_softmax(model.decode(mem, mask, dec)[:, -1])
        cand = []
        for (ids, lp), row in zip(alive, logp):
            top = np.argsort(-row, kind="stable")[:k]
            cand.extend((ids + (int(t),), lp + float(row[t])) for t in top)
        cand.sort(key=lambda c: (-c[1], c[0]))
        alive = []
        for ids, lp in cand[:k]:
            if ids[-1] == EOS_ID or len(ids) >= max_len:
                done.append((ids, lp / (len(ids) - 1)))
            else:
                alive.append((ids, lp))
    done.extend((ids, lp / (len(ids) - 1)) for ids, lp in alive)
    done.sort(key=lambda b: (-b[1], b[0]))
    return done[:k]


def predict_topk(ckpt: Checkpoint, enc, k: int = 1, max_len: int | None = None) -> list[Prediction]:
    """Beam search of width ``k`` scored by length-normalised log-probability.

    Each prediction carries the decoded content tokens (BOS/EOS stripped) and
    the value strings read back from its literals.  ``unk_input`` flags an
    encoder input whose content is entirely UNK.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    flag = unk_only(enc)
    if flag:
        logger.warning("encoder input is UNK-only; prediction is unreliable")
    model = ckpt.model()
    out = []
    for ids, score in _beam_search(model, enc, k, max_len or ckpt.params.max_seq_len):
        content = tuple(i for i in ids[1:] if i != EOS_ID)
        tokens = tuple(ckpt.vocab.decode(content))
        values = tuple(v for lit in parse_literals(tokens, ckpt.vocab) for v in lit.values)
        out.append(Prediction(content, tokens, values, score, flag))
    return out


def unk_only(enc) -> bool:
    content = [i for i in enc if i != PAD_ID]
    return bool(content) and all(i == UNK_ID for i in content)
