"""Numpy building blocks with explicit backward passes.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and the cache, adds parameter gradients into ``grads``
under the given prefix and returns the input gradient(s).
"""
from __future__ import annotations

import numpy as np

NEG_INF = -1e9
LN_EPS = 1e-5


def softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    z = x - x.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def _acc(grads, name, g):
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g


def linear_forward(x, w, b):
    return x @ w + b, x


def linear_backward(dout, x, w, grads, prefix):
    _acc(grads, prefix + "w", x.reshape(-1, x.shape[-1]).T @ dout.reshape(-1, dout.shape[-1]))
    _acc(grads, prefix + "b", dout.reshape(-1, dout.shape[-1]).sum(axis=0))
    return dout @ w.T


def layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return g * xhat + b, (xhat, inv, g)


def layernorm_backward(dout, cache, grads, prefix):
    xhat, inv, g = cache
    flat = dout.reshape(-1, dout.shape[-1])
    _acc(grads, prefix + "g", (flat * xhat.reshape(flat.shape)).sum(axis=0))
    _acc(grads, prefix + "b", flat.sum(axis=0))
    dxhat = dout * g
    n = xhat.shape[-1]
    return inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))


def dropout_forward(x, rate, rng):
    if rate <= 0 or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(dout, keep):
    return dout if keep is None else dout * keep


def attention_forward(xq, xkv, mask, p, prefix, heads):
    """Multi-head scaled dot-product attention.

    ``mask`` is boolean, broadcastable to ``(B, Tq, Tk)``; False blocks a key.
    """
    B, Tq, d = xq.shape
    Tk = xkv.shape[1]
    dk = d // heads
    q, _ = linear_forward(xq, p[prefix + "q.w"], p[prefix + "q.b"])
    k, _ = linear_forward(xkv, p[prefix + "k.w"], p[prefix + "k.b"])
    v, _ = linear_forward(xkv, p[prefix + "v.w"], p[prefix + "v.b"])
    qh = q.reshape(B, Tq, heads, dk).transpose(0, 2, 1, 3)
    kh = k.reshape(B, Tk, heads, dk).transpose(0, 2, 1, 3)
    vh = v.reshape(B, Tk, heads, dk).transpose(0, 2, 1, 3)
    scale = 1.0 / np.sqrt(dk)
    scores = qh @ kh.transpose(0, 1, 3, 2) * scale
    scores = np.where(mask[:, None], scores, NEG_INF)
    attn = softmax(scores)
    ctx = (attn @ vh).transpose(0, 2, 1, 3).reshape(B, Tq, d)
    out, _ = linear_forward(ctx, p[prefix + "o.w"], p[prefix + "o.b"])
    return out, (xq, xkv, qh, kh, vh, attn, ctx, scale, heads, mask)


def attention_backward(dout, cache, p, grads, prefix):
    xq, xkv, qh, kh, vh, attn, ctx, scale, heads, mask = cache
    B, Tq, d = xq.shape
    Tk = xkv.shape[1]
    dctx = linear_backward(dout, ctx, p[prefix + "o.w"], grads, prefix + "o.")
    dctx = dctx.reshape(B, Tq, heads, d // heads).transpose(0, 2, 1, 3)
    dattn = dctx @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores = np.where(mask[:, None], dscores, 0.0) * scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh
    dq = dqh.transpose(0, 2, 1, 3).reshape(B, Tq, d)
    dk = dkh.transpose(0, 2, 1, 3).reshape(B, Tk, d)
    dv = dvh.transpose(0, 2, 1, 3).reshape(B, Tk, d)
    dxq = linear_backward(dq, xq, p[prefix + "q.w"], grads, prefix + "q.")
    dxkv = linear_backward(dk, xkv, p[prefix + "k.w"], grads, prefix + "k.")
    dxkv = dxkv + linear_backward(dv, xkv, p[prefix + "v.w"], grads, prefix + "v.")
    return dxq, dxkv


def ffn_forward(x, p, prefix):
    h, _ = linear_forward(x, p[prefix + "1.w"], p[prefix + "1.b"])
    a = np.maximum(h, 0.0)
    out, _ = linear_forward(a, p[prefix + "2.w"], p[prefix + "2.b"])
    return out, (x, h, a)


def ffn_backward(dout, cache, p, grads, prefix):
    x, h, a = cache
    da = linear_backward(dout, a, p[prefix + "2.w"], grads, prefix + "2.")
    dh = da * (h > 0)
    return linear_backward(dh, x, p[prefix + "1.w"], grads, prefix + "1.")
