"""Class-token fusion of visual and tabular features, plus the classifier head."""

from __future__ import annotations

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Linear, TransformerLayer


class FusionHead:
    """Concatenate [class token; projected visual; projected tabular], run the
    fusion layers, and classify from the class-token output position.

    No positional embedding is added here; modality identity is carried by the
    two projection maps.
    """

    def __init__(self, store, visual_width, tabular_width, width, depth, heads, ffn_mult, head_hidden, init):
        self.width = width
        self.cls = store.add("fusion.cls", Tensor(init.trunc_normal((1, width)), requires_grad=True))
        self.proj_visual = Linear(store, "fusion.proj_visual", visual_width, width, init)
        self.proj_tabular = Linear(store, "fusion.proj_tabular", tabular_width, width, init)
        self.layers = [
            TransformerLayer(store, f"fusion.layers.{i}", width, heads, ffn_mult, init)
            for i in range(depth)
        ]
        self.head_fc1 = Linear(store, "fusion.head.fc1", width, head_hidden, init)
        self.head_fc2 = Linear(store, "fusion.head.fc2", head_hidden, 1, init)

    def __call__(self, visual_tokens, tabular_tokens):
        seq = ad.concat(
            [self.cls, self.proj_visual(visual_tokens), self.proj_tabular(tabular_tokens)], axis=0
        )
        for layer in self.layers:
            seq = layer(seq)
        cls_out = ad.split(seq, [1, seq.shape[0] - 1], axis=0)[0]
        logit = self.head_fc2(ad.gelu(self.head_fc1(cls_out)))
        return ad.reshape(logit, (1,))
