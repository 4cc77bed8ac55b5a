"""Shared building blocks: linear maps, layer norm, and the transformer layer."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError


class Linear:
    def __init__(self, store, name, n_in, n_out, init):
        self.w = store.add(f"{name}.weight", Tensor(init.trunc_normal((n_in, n_out)), requires_grad=True))
        self.b = store.add(f"{name}.bias", Tensor(init.zeros(n_out), requires_grad=True))

    def __call__(self, x):
        return ad.add(ad.matmul(x, self.w), self.b)


class LayerNorm:
    def __init__(self, store, name, width, eps=1e-5):
        self.gamma = store.add(f"{name}.gamma", Tensor(np.ones(width), requires_grad=True))
        self.beta = store.add(f"{name}.beta", Tensor(np.zeros(width), requires_grad=True))
        self.eps = eps

    def __call__(self, x):
        return ad.layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward:
    def __init__(self, store, name, width, mult, init):
        self.fc1 = Linear(store, f"{name}.fc1", width, width * mult, init)
        self.fc2 = Linear(store, f"{name}.fc2", width * mult, width, init)

    def __call__(self, x):
        return self.fc2(ad.gelu(self.fc1(x)))


class TransformerLayer:
    """Pre-norm multi-head self-attention + feed-forward, both with residuals."""

    def __init__(self, store, name, width, heads, ffn_mult, init):
        if width % heads != 0:
            raise ConfigError(f"{name}: head count {heads} must divide width {width}")
        self.width = width
        self.heads = heads
        self.head_dim = width // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.ln_attn = LayerNorm(store, f"{name}.ln_attn", width)
        self.wq = Linear(store, f"{name}.wq", width, width, init)
        self.wk = Linear(store, f"{name}.wk", width, width, init)
        self.wv = Linear(store, f"{name}.wv", width, width, init)
        self.wo = Linear(store, f"{name}.wo", width, width, init)
        self.ln_ffn = LayerNorm(store, f"{name}.ln_ffn", width)
        self.ffn = FeedForward(store, f"{name}.ffn", width, ffn_mult, init)

    def __call__(self, x):
        h = self.ln_attn(x)
        q = self.wq(h)
        k = self.wk(h)
        v = self.wv(h)
        sizes = [self.head_dim] * self.heads
        q_heads = ad.split(q, sizes, axis=1)
        k_heads = ad.split(k, sizes, axis=1)
        v_heads = ad.split(v, sizes, axis=1)
        outs = []
        for qh, kh, vh in zip(q_heads, k_heads, v_heads):
            att = ad.softmax(ad.mul(ad.matmul(qh, ad.transpose(kh)), self.scale), axis=-1)
            outs.append(ad.matmul(att, vh))
        o = self.wo(ad.concat(outs, axis=1))
        x = ad.add(x, o)
        return ad.add(x, self.ffn(self.ln_ffn(x)))
