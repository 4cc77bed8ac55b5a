"""3D volume encoder: patch embedding, token merging, paired-attention blocks.

Each block attends along two axes with shared query/key projection weights:
spatial attention mixes token rows, channel attention mixes feature columns
through a width-by-width map, and the two results are summed into a residual.
Prompt tokens, when enabled, are split half-and-half between the two branches
and prepended to the block input; a per-block linear transform of the prompt
output positions produces a global channel-scaling vector that multiplies the
combined attention map before the residual add.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .layers import FeedForward, LayerNorm, Linear


@dataclass(frozen=True)
class VisualConfig:
    volume_shape: tuple = (32, 32, 32)
    patch_size: int = 8
    stage_widths: tuple = (16, 32)
    stage_blocks: tuple = (1, 1)
    downsample_factors: tuple = (2,)  # between consecutive stages
    ffn_mult: int = 4

    def validate(self):
        if len(self.stage_widths) != len(self.stage_blocks):
            raise ConfigError("stage_widths and stage_blocks must have equal length")
        if len(self.downsample_factors) != len(self.stage_widths) - 1:
            raise ConfigError("need one downsample factor per stage transition")
        for extent in self.volume_shape:
            if extent % self.patch_size != 0:
                raise ConfigError(
                    f"patch size {self.patch_size} does not divide volume extent {extent}"
                )
        grid = [extent // self.patch_size for extent in self.volume_shape]
        for f in self.downsample_factors:
            for g in grid:
                if g % f != 0:
                    raise ConfigError(f"downsample factor {f} does not divide token grid {tuple(grid)}")
            grid = [g // f for g in grid]

    def stage_grids(self):
        grid = tuple(extent // self.patch_size for extent in self.volume_shape)
        grids = [grid]
        for f in self.downsample_factors:
            grid = tuple(g // f for g in grid)
            grids.append(grid)
        return grids


def extract_patches(volume, patch_size):
    """Cut a (D, H, W) array into row-major (N, patch_size**3) patch rows."""
    d, h, w = volume.shape
    p = patch_size
    if d % p or h % p or w % p:
        raise ConfigError(f"patch size {p} does not divide volume shape {volume.shape}")
    blocks = volume.reshape(d // p, p, h // p, p, w // p, p)
    blocks = blocks.transpose(0, 2, 4, 1, 3, 5)
    return blocks.reshape((d // p) * (h // p) * (w // p), p ** 3)


class PatchEmbed:
    """Linear patch projection plus a learned positional embedding.

    Positional information enters the visual path here and nowhere else.
    """

    def __init__(self, store, cfg, init, name="visual.patch_embed"):
        self.patch_size = cfg.patch_size
        n_tokens = int(np.prod(cfg.stage_grids()[0]))
        self.proj = Linear(store, f"{name}.proj", cfg.patch_size ** 3, cfg.stage_widths[0], init)
        self.pos = store.add(
            f"{name}.pos",
            Tensor(init.trunc_normal((n_tokens, cfg.stage_widths[0])), requires_grad=True),
        )

    def __call__(self, volume):
        patches = Tensor(extract_patches(np.asarray(volume, dtype=np.float64), self.patch_size))
        return ad.add(self.proj(patches), self.pos)


class TokenMerge:
    """Strided token-grid downsampling: concatenate each factor**3 block, project."""

    def __init__(self, store, name, grid, factor, width_in, width_out, init):
        self.grid = grid
        self.factor = factor
        self.width_in = width_in
        self.proj = Linear(store, f"{name}.proj", factor ** 3 * width_in, width_out, init)

    def __call__(self, tokens):
        gd, gh, gw = self.grid
        f = self.factor
        x = ad.reshape(tokens, (gd // f, f, gh // f, f, gw // f, f, self.width_in))
        x = ad.transpose(x, (0, 2, 4, 1, 3, 5, 6))
        x = ad.reshape(x, ((gd // f) * (gh // f) * (gw // f), f ** 3 * self.width_in))
        return self.proj(x)


def spatial_attention(seq, wq, wk, wv, scale):
    """Scaled dot-product attention across token rows of (T, C) input."""
    q = wq(seq)
    k = wk(seq)
    v = wv(seq)
    att = ad.softmax(ad.mul(ad.matmul(q, ad.transpose(k)), scale), axis=-1)
    return ad.matmul(att, v)


def channel_attention(seq, wq, wk, wv, scale):
    """Attention across feature channels of (T, C) input.

    The C-by-C mixing map is column-normalized: each output channel is a
    convex combination of input channels, weighted by query/key agreement and
    scaled by the reciprocal square root of the token count.
    """
    q = wq(seq)
    k = wk(seq)
    v = wv(seq)
    att = ad.softmax(ad.mul(ad.matmul(ad.transpose(q), k), scale), axis=0)
    return ad.matmul(v, att)


class PairedAttentionBlock:
    """One visual block: prompted spatial + channel attention, then feed-forward.

    Query and key projections are shared weights between the two attention
    branches. With `prompt_count` > 0, half the prompts join each branch; with
    a global transform attached, the prompt output positions are flattened
    into a channel scale applied to the summed attention features.
    """

    def __init__(self, store, name, width, ffn_mult, init, prompt_count=0, global_transform=False):
        if prompt_count % 2 != 0:
            raise ConfigError(f"{name}: prompt count must be even, got {prompt_count}")
        self.width = width
        self.prompt_count = prompt_count
        self.half = prompt_count // 2
        self.ln_attn = LayerNorm(store, f"{name}.ln_attn", width)
        self.wq = Linear(store, f"{name}.wq", width, width, init)
        self.wk = Linear(store, f"{name}.wk", width, width, init)
        self.wv_spatial = Linear(store, f"{name}.wv_spatial", width, width, init)
        self.wv_channel = Linear(store, f"{name}.wv_channel", width, width, init)
        self.out_spatial = Linear(store, f"{name}.out_spatial", width, width, init)
        self.out_channel = Linear(store, f"{name}.out_channel", width, width, init)
        self.ln_ffn = LayerNorm(store, f"{name}.ln_ffn", width)
        self.ffn = FeedForward(store, f"{name}.ffn", width, ffn_mult, init)
        self.prompt_spatial = None
        self.prompt_channel = None
        self.global_transform = None
        if prompt_count > 0:
            self.prompt_spatial = store.add(
                f"{name}.prompt.spatial", Tensor(init.prompt((self.half, width), width), requires_grad=True)
            )
            self.prompt_channel = store.add(
                f"{name}.prompt.channel", Tensor(init.prompt((self.half, width), width), requires_grad=True)
            )
            if global_transform:
                self.global_transform = Linear(
                    store, f"{name}.global_prompt", prompt_count * width, width, init
                )
                # unit-gate init: the scale starts at ~1 so a freshly prompted
                # block reproduces the scale-free form around a pretrained backbone
                self.global_transform.b.data[:] = 1.0

    def ffn_sublayer(self, x):
        return ad.add(x, self.ffn(self.ln_ffn(x)))

    def __call__(self, tokens):
        n = tokens.shape[0]
        h = self.ln_attn(tokens)
        if self.prompt_count > 0:
            seq_s = ad.concat([self.prompt_spatial, h], axis=0)
            seq_c = ad.concat([self.prompt_channel, h], axis=0)
        else:
            seq_s = seq_c = h
        rows = n + self.half
        spatial = self.out_spatial(
            spatial_attention(seq_s, self.wq, self.wk, self.wv_spatial, 1.0 / math.sqrt(self.width))
        )
        channel = self.out_channel(
            channel_attention(seq_c, self.wq, self.wk, self.wv_channel, 1.0 / math.sqrt(rows))
        )
        if self.prompt_count > 0:
            p_s, feat_s = ad.split(spatial, [self.half, n], axis=0)
            p_c, feat_c = ad.split(channel, [self.half, n], axis=0)
        else:
            p_s = p_c = None
            feat_s, feat_c = spatial, channel
        combined = ad.add(feat_s, feat_c)
        if self.global_transform is not None:
            prompt_out = ad.reshape(ad.concat([p_s, p_c], axis=0), (1, self.prompt_count * self.width))
            g = ad.reshape(self.global_transform(prompt_out), (self.width,))
            combined = ad.mul(combined, g)
        x = ad.add(tokens, combined)
        return self.ffn_sublayer(x)


class VisualEncoder:
    """Staged encoder: patch embed, then per-stage token merging and blocks."""

    def __init__(self, store, cfg, init, prompt_count=0, global_transform=False):
        cfg.validate()
        self.cfg = cfg
        self.patch_embed = PatchEmbed(store, cfg, init)
        grids = cfg.stage_grids()
        self.merges = []
        self.stages = []
        for s, (width, blocks) in enumerate(zip(cfg.stage_widths, cfg.stage_blocks)):
            if s > 0:
                self.merges.append(
                    TokenMerge(
                        store,
                        f"visual.stages.{s}.merge",
                        grids[s - 1],
                        cfg.downsample_factors[s - 1],
                        cfg.stage_widths[s - 1],
                        width,
                        init,
                    )
                )
            self.stages.append(
                [
                    PairedAttentionBlock(
                        store,
                        f"visual.stages.{s}.blocks.{b}",
                        width,
                        cfg.ffn_mult,
                        init,
                        prompt_count=prompt_count,
                        global_transform=global_transform,
                    )
                    for b in range(blocks)
                ]
            )

    @property
    def output_shape(self):
        grid = self.cfg.stage_grids()[-1]
        return (int(np.prod(grid)), self.cfg.stage_widths[-1])

    def __call__(self, volume):
        expected = tuple(self.cfg.volume_shape)
        if tuple(np.asarray(volume).shape) != expected:
            raise ShapeError(f"volume shape {np.asarray(volume).shape} != configured {expected}")
        tokens = self.patch_embed(volume)
        for s, blocks in enumerate(self.stages):
            if s > 0:
                tokens = self.merges[s - 1](tokens)
            for block in blocks:
                tokens = block(tokens)
        return tokens
