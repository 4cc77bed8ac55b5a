"""Independent plain-numpy recomputations used to cross-check the engine.

Nothing here touches the autodiff tape: forward passes are rebuilt from the
architecture definition with explicit dense matrices, and the metric oracles
use a different formulation than the primary implementations (trapezoidal ROC
integration vs pairwise ranking; explicit counting loops vs vectorized
confusion). These stay separate from the code paths they check.
"""

from __future__ import annotations

import math

import numpy as np

from .visual import extract_patches

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def matmul_naive(a, b):
    """Triple-loop matrix product for rank-2 inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, k = a.shape
    k2, m = b.shape
    assert k == k2
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def softmax_np(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def gelu_np(x):
    u = _GELU_K * (x + _GELU_C * x ** 3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t)


def linear_np(x, lin):
    return x @ lin.w.data + lin.b.data


def layer_norm_np(x, ln):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    denom = np.sqrt(var + ln.eps)
    inv = np.where(denom == 0.0, 0.0, 1.0 / np.where(denom == 0.0, 1.0, denom))
    return ln.gamma.data * (xc * inv) + ln.beta.data


def feed_forward_np(x, ffn):
    return linear_np(gelu_np(linear_np(x, ffn.fc1)), ffn.fc2)


def transformer_layer_np(x, layer):
    """Dense recomputation of one self-attention layer, explicit score matrices."""
    h = layer_norm_np(x, layer.ln_attn)
    q = linear_np(h, layer.wq)
    k = linear_np(h, layer.wk)
    v = linear_np(h, layer.wv)
    d = layer.head_dim
    outs = []
    for i in range(layer.heads):
        cols = slice(i * d, (i + 1) * d)
        # contiguous copies so the BLAS calls see the same layout as the engine
        qh = np.ascontiguousarray(q[:, cols])
        kh = np.ascontiguousarray(k[:, cols])
        vh = np.ascontiguousarray(v[:, cols])
        scores = (qh @ kh.T) * layer.scale
        outs.append(softmax_np(scores, axis=-1) @ vh)
    o = linear_np(np.concatenate(outs, axis=1), layer.wo)
    x = x + o
    return x + feed_forward_np(layer_norm_np(x, layer.ln_ffn), layer.ffn)


def prompted_tab_layer_np(layer, prompts, x):
    """Run one tabular layer on [prompts; x] and return the kept attribute rows."""
    seq = np.concatenate([prompts, x], axis=0)
    out = transformer_layer_np(seq, layer)
    return out[prompts.shape[0]:]


def embed_record_np(embedder, record):
    tokens = []
    for a in embedder.schema.attributes:
        if a.kind == "categorical":
            onehot = np.zeros((1, len(a.levels)))
            onehot[0, a.levels.index(str(record[a.name]))] = 1.0
            tok = onehot @ embedder._tables[a.name].data
        else:
            t = (float(record[a.name]) - a.vmin) / (a.vmax - a.vmin)
            t = min(max(t, 0.0), 1.0)
            tok = (embedder._directions[a.name].data * t).reshape(1, embedder.width)
        tokens.append(tok + embedder._idents[a.name].data.reshape(1, embedder.width))
    return np.concatenate(tokens, axis=0)


def tabular_forward_np(encoder, record):
    """Vanilla (prompt-free) tabular encoder forward pass."""
    assert encoder.prompt_count == 0, "vanilla oracle covers the unprompted configuration"
    x = embed_record_np(encoder.embedder, record)
    for layer in encoder.layers:
        x = transformer_layer_np(x, layer)
    return x


def paired_block_np(block, tokens):
    """Vanilla (prompt-free) paired-attention block forward pass."""
    assert block.prompt_count == 0, "vanilla oracle covers the unprompted configuration"
    n, width = tokens.shape
    h = layer_norm_np(tokens, block.ln_attn)
    q = linear_np(h, block.wq)
    k = linear_np(h, block.wk)
    vs = linear_np(h, block.wv_spatial)
    vc = linear_np(h, block.wv_channel)
    spatial = softmax_np((q @ k.T) * (1.0 / math.sqrt(width)), axis=-1) @ vs
    spatial = linear_np(spatial, block.out_spatial)
    channel = vc @ softmax_np((q.T @ k) * (1.0 / math.sqrt(n)), axis=0)
    channel = linear_np(channel, block.out_channel)
    x = tokens + (spatial + channel)
    return x + feed_forward_np(layer_norm_np(x, block.ln_ffn), block.ffn)


def visual_forward_np(encoder, volume):
    """Vanilla (prompt-free) visual encoder forward pass."""
    cfg = encoder.cfg
    patches = extract_patches(np.asarray(volume, dtype=np.float64), cfg.patch_size)
    tokens = linear_np(patches, encoder.patch_embed.proj) + encoder.patch_embed.pos.data
    grids = cfg.stage_grids()
    for s, blocks in enumerate(encoder.stages):
        if s > 0:
            merge = encoder.merges[s - 1]
            gd, gh, gw = grids[s - 1]
            f = merge.factor
            x = tokens.reshape(gd // f, f, gh // f, f, gw // f, f, merge.width_in)
            x = x.transpose(0, 2, 4, 1, 3, 5, 6)
            x = x.reshape((gd // f) * (gh // f) * (gw // f), f ** 3 * merge.width_in)
            tokens = linear_np(x, merge.proj)
        for block in blocks:
            tokens = paired_block_np(block, tokens)
    return tokens


def trapezoid_auc(scores, labels):
    """ROC area by trapezoidal integration over distinct slice thresholds."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    last_of_group = np.r_[np.where(np.diff(s) != 0)[0], s.size - 1]
    tps = np.cumsum(y)[last_of_group].astype(np.float64)
    fps = np.cumsum(1 - y)[last_of_group].astype(np.float64)
    tpr = np.r_[0.0, tps / tps[-1]]
    fpr = np.r_[0.0, fps / fps[-1]]
    trapz = getattr(np, "trapezoid", None) or np.trapz
    return float(trapz(tpr, fpr))


def confusion_metrics_loop(labels, predictions):
    """Balanced accuracy and F1 from an explicit counting loop."""
    tp = fp = tn = fn = 0
    for y, p in zip(labels, predictions):
        if y == 1 and p == 1:
            tp += 1
        elif y == 0 and p == 1:
            fp += 1
        elif y == 0 and p == 0:
            tn += 1
        else:
            fn += 1
    bacc = 0.5 * (tp / (tp + fn) + tn / (tn + fp)) if (tp + fn) and (tn + fp) else None
    f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) else None
    return bacc, f1


def pairwise_auc_loop(scores, labels):
    """Exhaustive positive/negative pair comparison."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))
