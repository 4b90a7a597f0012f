"""Parameter registry and transformer building blocks on the tensor engine."""

from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError

INIT_STD = 0.02
MASK_BIAS = -1e9


class Module:
    """Tree of named parameters; assignment of Tensors/Modules registers them."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children[f"{name}.{i}"] = v
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield (f"{prefix}{name}", p)
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}/")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state(self, arrays: Dict[str, np.ndarray], strict: bool = True) -> None:
        own = dict(self.named_parameters())
        for name, p in own.items():
            if name in arrays:
                arr = arrays[name].astype(p.data.dtype)
                if arr.shape != p.data.shape:
                    raise ShapeError(f"load_state: {name} shape {arr.shape} vs {p.data.shape}")
                p.data = arr.copy()
            elif strict:
                raise KeyError(f"load_state: checkpoint lacks parameter {name}")

    def cast(self, dtype) -> None:
        """Switch every parameter's dtype (float64 for gradient verification)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)


def param(data: np.ndarray, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 zero_init: bool = False, std: float = INIT_STD):
        super().__init__()
        if zero_init:
            self.weight = param(np.zeros((in_dim, out_dim)))
        else:
            self.weight = param(rng.normal(0.0, std, size=(in_dim, out_dim)))
        self.bias = param(np.zeros(out_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ad.linear(x, self.weight, self.bias)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = param(rng.normal(0.0, INIT_STD, size=(count, dim)))

    def __call__(self, indices: np.ndarray) -> Tensor:
        return ad.embedding(self.weight, indices)


class MLP(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ad.gelu(self.fc1(x)))


def key_mask_bias(valid: np.ndarray, heads: int, n_query: int, dtype) -> Tensor:
    """Additive attention bias (B, H, T, S): 0 for valid keys, -1e9 otherwise."""
    b, s = valid.shape
    bias = np.where(valid[:, None, None, :], 0.0, MASK_BIAS)
    return Tensor(np.broadcast_to(bias, (b, heads, n_query, s)).astype(dtype))


class MultiHeadAttention(Module):
    """Standard scaled dot-product attention; optional zero-init output proj."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 zero_out: bool = False):
        super().__init__()
        if dim % heads:
            raise ShapeError(f"attention: dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng, zero_init=zero_out)

    def _split(self, x: Tensor, b: int, t: int) -> Tensor:
        return ad.transpose(ad.reshape(x, (b, t, self.heads, self.head_dim)), (0, 2, 1, 3))

    def __call__(self, query: Tensor, keyval: Tensor,
                 key_valid: Optional[np.ndarray] = None) -> Tensor:
        b, t, _ = query.shape
        s = keyval.shape[1]
        q = self._split(self.wq(query), b, t)
        k = self._split(self.wk(keyval), b, s)
        v = self._split(self.wv(keyval), b, s)
        logits = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                          1.0 / np.sqrt(self.head_dim))
        if key_valid is not None:
            logits = ad.add(logits, key_mask_bias(key_valid, self.heads, t, logits.dtype))
        attn = ad.softmax(logits)
        out = ad.matmul(attn, v)
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (b, t, self.dim))
        return self.wo(out)


def modulate(x: Tensor, shift: Tensor, scl: Tensor) -> Tensor:
    """x * (1 + scale) + shift with (B, d) modulation over (B, T, d) tokens."""
    b, t, d = x.shape
    scl = ad.expand(ad.reshape(scl, (b, 1, d)), (b, t, d))
    shift = ad.expand(ad.reshape(shift, (b, 1, d)), (b, t, d))
    return ad.add(ad.mul(x, ad.shift(scl, 1.0)), shift)


def timestep_embedding(t: np.ndarray, dim: int, dtype=np.float32) -> Tensor:
    """Sinusoidal features of flow time t in (0, 1), scaled like diffusion steps."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * 1000.0 * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return Tensor(emb.astype(dtype))
