"""Named parameters, the AdamW optimizer, and finite-difference verification."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, GradientMissingError, NumericError


class ParameterStore:
    """Ordered map of dotted parameter names to tensors, plus a freeze set.

    Names are unique. Frozen names are excluded from optimization; their
    tensors must never be mutated by a training step.
    """

    def __init__(self):
        self._entries = {}
        self.freeze_mask = set()

    def add(self, name, tensor):
        if name in self._entries:
            raise ConfigError(f"parameter name registered twice: {name}")
        if not isinstance(tensor, Tensor):
            tensor = Tensor(tensor, requires_grad=True)
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return list(self._entries.items())

    def freeze(self, names):
        names = set(names)
        unknown = names - set(self._entries)
        if unknown:
            raise ConfigError(f"freeze mask names not in store: {sorted(unknown)}")
        self.freeze_mask = names
        for name, t in self._entries.items():
            t.requires_grad = name not in names

    def trainable_items(self):
        return [(n, t) for n, t in self._entries.items() if n not in self.freeze_mask]

    def total_params(self):
        return sum(t.size for t in self._entries.values())

    def trainable_params(self):
        return sum(t.size for n, t in self.trainable_items())


class AdamW:
    """AdamW with decoupled weight decay over the non-frozen store entries.

    Moment buffers exist only for non-frozen parameters; frozen tensors are
    never touched, byte for byte. Gradients of stepped parameters are cleared
    after each step.
    """

    def __init__(self, store, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in store.trainable_items()}
        self.v = {n: np.zeros_like(p.data) for n, p in store.trainable_items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.store.trainable_items():
            if p.grad is None:
                raise GradientMissingError(f"no gradient for trainable parameter {name}")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= self.lr * update
            p.grad = None


def grad_check(f, store, h=1e-5, subset=None, n_coords=100, seed=0):
    """Compare backward-pass gradients of `f(store)` to central differences.

    `f` must deterministically return a scalar Tensor. Coordinates are drawn
    across every name in `subset` (all trainable names by default), at least
    `n_coords` in total. Returns the maximum relative error
    |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
    """
    if not (1e-6 <= h <= 1e-3):
        raise ConfigError(f"grad_check: h={h} outside [1e-6, 1e-3]")
    names = list(subset) if subset is not None else [n for n, _ in store.trainable_items()]
    if not names:
        raise ConfigError("grad_check: empty parameter subset")

    out = f(store)
    if out.size != 1:
        raise ConfigError("grad_check: f must return a scalar")
    out.backward()
    grads = {}
    for name in names:
        p = store[name]
        grads[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        p.grad = None

    rng = np.random.default_rng(seed)
    per_name = max(1, math.ceil(n_coords / len(names)))
    worst = 0.0
    for name in names:
        p = store[name]
        flat = p.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(per_name, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            with ad.no_grad():
                flat[i] = orig + h
                f_plus = float(f(store).data)
                flat[i] = orig - h
                f_minus = float(f(store).data)
            flat[i] = orig
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError(f"grad_check: non-finite value while probing {name}[{i}]")
            g_fd = (f_plus - f_minus) / (2.0 * h)
            g_ad = grads[name].reshape(-1)[i]
            err = abs(g_ad - g_fd) / max(1.0, abs(g_ad), abs(g_fd))
            worst = max(worst, err)
    return worst


class Initializer:
    """Deterministic parameter initialization from one seeded generator."""

    def __init__(self, seed):
        self.rng = np.random.default_rng(np.random.Philox(key=seed))

    def trunc_normal(self, shape, std=0.02):
        # resample anything beyond two standard deviations
        x = self.rng.standard_normal(shape) * std
        mask = np.abs(x) > 2.0 * std
        while mask.any():
            x[mask] = self.rng.standard_normal(int(mask.sum())) * std
            mask = np.abs(x) > 2.0 * std
        return x

    def zeros(self, shape):
        return np.zeros(shape)

    def ones(self, shape):
        return np.ones(shape)

    def prompt(self, shape, width):
        # moderate-magnitude uniform init, scaled by token width
        return self.rng.uniform(-0.5, 0.5, size=shape) / math.sqrt(width)
