"""Parameterized building blocks: linear maps, layer norm, attention, transformer stacks."""

import math
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.model.tensor import Tensor, concat, one_hot, where
from src.utils.errors import DegenerateAttention


class Parameter(Tensor):
    """A trainable tensor."""

    def __init__(self, data):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)


class Module:
    """Container whose Parameter / Module attributes form a named parameter tree."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """Copy values into the parameters; with strict=False unknown or missing names are skipped."""
        own = dict(self.named_parameters())
        if strict:
            missing = set(own) - set(state)
            unexpected = set(state) - set(own)
            if missing or unexpected:
                raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, value in state.items():
            if name not in own:
                continue
            value = np.asarray(value, dtype=np.float64)
            if value.shape != own[name].shape:
                raise ValueError(f"{name}: expected shape {own[name].shape}, got {value.shape}")
            own[name].data[...] = value


def xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    """y = x W + b with W of shape (in, out)."""

    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True, zero: bool = False):
        self.weight = Parameter(np.zeros((d_in, d_out)) if zero else xavier(rng, d_in, d_out))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(d))
        self.beta = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered * (var + self.eps) ** -0.5 * self.gamma + self.beta


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention over h heads with (d, d) projections.

    Masks are boolean with True marking keys that may be attended to; masked
    logits are set to -inf so their softmax weight is exactly zero.
    """

    def __init__(self, rng: np.random.Generator, d: int, heads: int, zero_output: bool = False):
        if d % heads:
            raise ValueError(f"width {d} is not divisible by {heads} heads")
        self.heads = heads
        self.d_head = d // heads
        self.wq = Linear(rng, d, d, bias=False)
        self.wk = Linear(rng, d, d, bias=False)
        self.wv = Linear(rng, d, d, bias=False)
        self.wo = Linear(rng, d, d, bias=False, zero=zero_output)

    def _split(self, x: Tensor) -> Tensor:
        b, n, _ = x.shape
        return x.reshape(b, n, self.heads, self.d_head).transpose(0, 2, 1, 3)

    def __call__(self, q: Tensor, kv: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        """
        Args:
            q: (B, n_q, d) queries
            kv: (B, n_k, d) keys and values
            mask: Boolean, broadcastable to (B, n_q, n_k)

        Returns:
            (B, n_q, d)
        """
        b, n_q, d = q.shape
        n_k = kv.shape[1]
        if mask is not None:
            mask = np.broadcast_to(np.asarray(mask, dtype=bool), (b, n_q, n_k))
            if not mask.any(axis=-1).all():
                raise DegenerateAttention("a query row has no key to attend to")

        Q = self._split(self.wq(q))
        K = self._split(self.wk(kv))
        V = self._split(self.wv(kv))
        scores = (Q @ K.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d_head))
        if mask is not None:
            scores = where(mask[:, None, :, :], scores, -np.inf)
        weights = scores.softmax(axis=-1)
        out = (weights @ V).transpose(0, 2, 1, 3).reshape(b, n_q, d)
        return self.wo(out)


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, d: int, d_ff: int, zero_output: bool = False):
        self.fc1 = Linear(rng, d, d_ff)
        self.fc2 = Linear(rng, d_ff, d, zero=zero_output)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(self.fc1(x).gelu())


class EncoderBlock(Module):
    """Pre-norm self-attention and feed-forward, each with a residual connection."""

    def __init__(self, rng: np.random.Generator, d: int, heads: int, d_ff: int, zero_residual: bool = False):
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(rng, d, heads, zero_output=zero_residual)
        self.ln2 = LayerNorm(d)
        self.ff = FeedForward(rng, d, d_ff, zero_output=zero_residual)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, mask)
        return x + self.ff(self.ln2(x))


class DecoderBlock(Module):
    """Pre-norm causal self-attention, cross-attention and feed-forward."""

    def __init__(self, rng: np.random.Generator, d: int, heads: int, d_ff: int, zero_residual: bool = False):
        self.ln1 = LayerNorm(d)
        self.self_attn = MultiHeadAttention(rng, d, heads, zero_output=zero_residual)
        self.ln2 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(rng, d, heads, zero_output=zero_residual)
        self.ln3 = LayerNorm(d)
        self.ff = FeedForward(rng, d, d_ff, zero_output=zero_residual)

    def __call__(self, x: Tensor, memory: Tensor, memory_mask: Optional[np.ndarray] = None) -> Tensor:
        steps = x.shape[1]
        causal = np.tril(np.ones((steps, steps), dtype=bool))
        h = self.ln1(x)
        x = x + self.self_attn(h, h, causal)
        x = x + self.cross_attn(self.ln2(x), memory, memory_mask)
        return x + self.ff(self.ln3(x))


class Encoder(Module):
    def __init__(self, rng: np.random.Generator, layers: int, d: int, heads: int, d_ff: int):
        self.blocks = [EncoderBlock(rng, d, heads, d_ff) for _ in range(layers)]
        self.norm = LayerNorm(d)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        for block in self.blocks:
            x = block(x, mask)
        return self.norm(x)


class Decoder(Module):
    def __init__(self, rng: np.random.Generator, layers: int, d: int, heads: int, d_ff: int):
        self.blocks = [DecoderBlock(rng, d, heads, d_ff) for _ in range(layers)]
        self.norm = LayerNorm(d)

    def __call__(self, x: Tensor, memory: Tensor, memory_mask: Optional[np.ndarray] = None) -> Tensor:
        for block in self.blocks:
            x = block(x, memory, memory_mask)
        return self.norm(x)


def embed_labels(layer: Linear, labels: np.ndarray, classes: int) -> Tensor:
    """Linear embedding of integer labels via their one-hot vectors."""
    return layer(Tensor(one_hot(labels, classes)))


def concat_halves(a: Tensor, b: Tensor) -> Tensor:
    return concat([a, b], axis=-1)
