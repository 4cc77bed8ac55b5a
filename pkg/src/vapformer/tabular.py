"""Clinical-attribute schema, embedding, and the prompted tabular transformer.

A record of 7 attributes becomes a 7-token sequence: categorical attributes
select a row of a learned embedding table via one-hot, numerical attributes
scale a learned direction by their min-max-normalized value, and every
attribute adds its own learned identity vector so that attributes with equal
values stay distinguishable. Prompt tokens, when enabled, are prepended to
every layer's input and their output positions discarded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, InputError
from .layers import TransformerLayer

ATTRIBUTE_COUNT = 7


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str  # "categorical" | "numerical"
    levels: tuple = ()  # categorical only
    vmin: float = 0.0  # numerical only
    vmax: float = 1.0


class AttributeSchema:
    def __init__(self, attributes):
        attributes = list(attributes)
        if len(attributes) != ATTRIBUTE_COUNT:
            raise ConfigError(f"schema must describe exactly {ATTRIBUTE_COUNT} attributes, got {len(attributes)}")
        for a in attributes:
            if a.kind == "categorical":
                if len(a.levels) < 2:
                    raise ConfigError(f"categorical attribute {a.name} needs cardinality >= 2")
            elif a.kind == "numerical":
                if not a.vmin < a.vmax:
                    raise ConfigError(f"numerical attribute {a.name} needs min < max")
            else:
                raise ConfigError(f"attribute {a.name} has unknown kind {a.kind!r}")
        self.attributes = attributes

    def names(self):
        return [a.name for a in self.attributes]

    def to_dict(self):
        out = []
        for a in self.attributes:
            if a.kind == "categorical":
                out.append({"name": a.name, "kind": a.kind, "levels": list(a.levels)})
            else:
                out.append({"name": a.name, "kind": a.kind, "min": a.vmin, "max": a.vmax})
        return {"attributes": out}

    @classmethod
    def from_dict(cls, d):
        attrs = []
        for item in d["attributes"]:
            if item["kind"] == "categorical":
                attrs.append(Attribute(item["name"], "categorical", levels=tuple(item["levels"])))
            else:
                attrs.append(Attribute(item["name"], "numerical", vmin=float(item["min"]), vmax=float(item["max"])))
        return cls(attrs)

    def save(self, path):
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(path.read_text()))


class AttributeEmbedder:
    """Maps one record to a (7, width) token matrix."""

    def __init__(self, store, schema, width, init, name="tabular.embed"):
        self.schema = schema
        self.width = width
        self.clamp_warnings = 0
        self._tables = {}
        self._directions = {}
        self._idents = {}
        for a in schema.attributes:
            if a.kind == "categorical":
                self._tables[a.name] = store.add(
                    f"{name}.{a.name}.table",
                    Tensor(init.trunc_normal((len(a.levels), width)), requires_grad=True),
                )
            else:
                self._directions[a.name] = store.add(
                    f"{name}.{a.name}.direction",
                    Tensor(init.trunc_normal((width,)), requires_grad=True),
                )
            self._idents[a.name] = store.add(
                f"{name}.{a.name}.ident",
                Tensor(init.zeros(width), requires_grad=True),
            )

    def normalize(self, attribute, value):
        t = (float(value) - attribute.vmin) / (attribute.vmax - attribute.vmin)
        if t < 0.0 or t > 1.0:
            self.clamp_warnings += 1
            t = min(max(t, 0.0), 1.0)
        return t

    def __call__(self, record):
        tokens = []
        for a in self.schema.attributes:
            if a.name not in record:
                raise InputError(f"record is missing attribute {a.name}")
            if a.kind == "categorical":
                level = str(record[a.name])
                if level not in a.levels:
                    raise InputError(f"unknown level {level!r} for categorical attribute {a.name}")
                onehot = np.zeros((1, len(a.levels)))
                onehot[0, a.levels.index(level)] = 1.0
                tok = ad.matmul(Tensor(onehot), self._tables[a.name])
            else:
                t = self.normalize(a, record[a.name])
                tok = ad.reshape(ad.mul(self._directions[a.name], t), (1, self.width))
            tokens.append(ad.add(tok, ad.reshape(self._idents[a.name], (1, self.width))))
        return ad.concat(tokens, axis=0)


class TabularEncoder:
    """Stack of self-attention layers with optional per-layer prompt tokens."""

    def __init__(self, store, schema, width, depth, heads, ffn_mult, prompt_count, init):
        self.width = width
        self.depth = depth
        self.prompt_count = prompt_count
        self.embedder = AttributeEmbedder(store, schema, width, init)
        self.layers = [
            TransformerLayer(store, f"tabular.layers.{i}", width, heads, ffn_mult, init)
            for i in range(depth)
        ]
        self.prompts = []
        if prompt_count > 0:
            for i in range(depth):
                self.prompts.append(
                    store.add(
                        f"tabular.layers.{i}.prompt",
                        Tensor(init.prompt((prompt_count, width), width), requires_grad=True),
                    )
                )

    def forward_tokens(self, x):
        """Run the layer stack on an already-embedded (M, width) sequence."""
        m = x.shape[0]
        for i, layer in enumerate(self.layers):
            if self.prompt_count > 0:
                out = layer(ad.concat([self.prompts[i], x], axis=0))
                # prompt output positions are dropped; fresh prompts enter next layer
                _, x = ad.split(out, [self.prompt_count, m], axis=0)
            else:
                x = layer(x)
        return x

    def __call__(self, record):
        return self.forward_tokens(self.embedder(record))
