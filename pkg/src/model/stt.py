"""
Social tensor transformer.

Each occupancy-grid slice becomes a small token set: one embedded token per
occupied cell plus a learned null token that is always present. The tokens
are self-encoded and the target's input embedding at that step queries them
through a single cross-attention fusion block. Steps never attend to each
other.
"""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.data.social_tensor import GridSpec
from src.model.layers import Encoder, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, Parameter
from src.model.tensor import Tensor, as_tensor, concat, encodings_distinct, pos_encode_2d, where
from src.utils.logger import get_logger

logger = get_logger(__name__)

VALUE_SCALE = 0.01  # network input per meter of relative motion

ArrayOrTensor = Union[np.ndarray, Tensor]


class FusionBlock(Module):
    """Pre-norm single-query cross-attention and feed-forward; output projections start at zero."""

    def __init__(self, rng: np.random.Generator, d: int, heads: int, d_ff: int):
        self.ln_query = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(rng, d, heads, zero_output=True)
        self.ln_ff = LayerNorm(d)
        self.ff = FeedForward(rng, d, d_ff, zero_output=True)

    def __call__(self, x: Tensor, tokens: Tensor, token_mask: np.ndarray) -> Tensor:
        y = x + self.cross_attn(self.ln_query(x), tokens, token_mask)
        return y + self.ff(self.ln_ff(y))


class SocialTensorTransformer(Module):
    """
    Fuses per-step occupancy grids into the target's input embeddings.

    Args:
        rng: Initialization source
        grid: Grid layout; fixes the 2D positional encoding table
        d: Embedding width shared with the main model
        heads: Attention heads
        d_ff: Feed-forward width
        layers: Token encoder depth
    """

    def __init__(self, rng: np.random.Generator, grid: GridSpec, d: int, heads: int, d_ff: int, layers: int = 1):
        self.W, self.L = grid.W, grid.L
        self.d = d
        pe = pos_encode_2d(grid.W, grid.L, d)
        if not encodings_distinct(pe):
            raise ValueError(f"2D positional encoding is not unique on a {grid.W}x{grid.L} grid at d={d}")
        self._pe = pe.reshape(grid.W * grid.L, d)

        self.cell_embed = Linear(rng, 2, d)
        self.null_token = Parameter(rng.normal(0.0, 0.02, size=d))
        self.encoder = Encoder(rng, layers, d, heads, d_ff)
        self.fusion = FusionBlock(rng, d, heads, d_ff)

    # ------------------------------------------------------------------
    # token sets
    # ------------------------------------------------------------------

    def encode_cells(self, cell_values: ArrayOrTensor, cell_index: np.ndarray, valid: np.ndarray) -> Tuple[Tensor, np.ndarray]:
        """
        Encode explicit cell tokens.

        Args:
            cell_values: (G, M, 2) relative motion per token (m per step)
            cell_index: (G, M) flat cell index w * L + l of each token
            valid: (G, M) whether a slot holds a token; invalid slots are padding

        Returns:
            (G, M + 1, d) encoded tokens with the null token at slot 0, and the
            (G, M + 1) token mask
        """
        cell_values = as_tensor(cell_values)
        cell_index = np.asarray(cell_index, dtype=np.int64)
        valid = np.asarray(valid, dtype=bool)
        g = valid.shape[0]

        values = where(valid[..., None], cell_values, 0.0) * VALUE_SCALE
        cells = self.cell_embed(values) + self._pe[cell_index]
        null = self.null_token.reshape(1, 1, self.d) + np.zeros((g, 1, self.d))
        tokens = concat([null, cells], axis=1)

        token_mask = np.concatenate([np.ones((g, 1), dtype=bool), valid], axis=1)
        encoded = self.encoder(tokens, token_mask[:, None, :])
        return encoded, token_mask

    def encode_grids(
        self,
        values: ArrayOrTensor,
        mask: np.ndarray,
        orders: Optional[Sequence[Optional[np.ndarray]]] = None,
    ) -> Tuple[Tensor, np.ndarray]:
        """
        Encode a batch of grid slices.

        Args:
            values: (G, W, L, 2) slice values
            mask: (G, W, L) occupancy
            orders: Optional per-grid permutation of the occupied cells' row-major order

        Returns:
            (G, M + 1, d) encoded tokens and token mask, M the largest occupancy in the batch
        """
        mask = np.asarray(mask, dtype=bool)
        g = mask.shape[0]
        flat_mask = mask.reshape(g, self.W * self.L)

        occupied: List[np.ndarray] = []
        for i in range(g):
            cells = np.flatnonzero(flat_mask[i])
            if orders is not None and orders[i] is not None:
                cells = cells[np.asarray(orders[i], dtype=np.int64)]
            occupied.append(cells)
        m = max((len(c) for c in occupied), default=0)

        cell_index = np.zeros((g, m), dtype=np.int64)
        valid = np.zeros((g, m), dtype=bool)
        for i, cells in enumerate(occupied):
            cell_index[i, :len(cells)] = cells
            valid[i, :len(cells)] = True

        flat_values = as_tensor(values).reshape(g, self.W * self.L, 2)
        rows = np.broadcast_to(np.arange(g)[:, None], (g, m))
        gathered = flat_values[rows, cell_index]
        return self.encode_cells(gathered, cell_index, valid)

    def encode_grid(self, values_t: ArrayOrTensor, mask_t: np.ndarray, order: Optional[np.ndarray] = None) -> Tuple[Tensor, np.ndarray]:
        """Single-slice form of `encode_grids`: (m + 1, d) tokens and (m + 1,) mask."""
        values_t = as_tensor(values_t)
        encoded, token_mask = self.encode_grids(
            values_t.reshape(1, self.W, self.L, 2), np.asarray(mask_t, dtype=bool)[None], [order]
        )
        return encoded.reshape(encoded.shape[1], self.d), token_mask[0]

    # ------------------------------------------------------------------
    # fusion
    # ------------------------------------------------------------------

    def fuse_many(self, queries: Tensor, encoded: Tensor, token_mask: np.ndarray) -> Tensor:
        """(G, d) target embeddings fused with their own (G, M + 1, d) token sets."""
        g = queries.shape[0]
        fused = self.fusion(queries.reshape(g, 1, self.d), encoded, np.asarray(token_mask, dtype=bool)[:, None, :])
        return fused.reshape(g, self.d)

    def fuse(self, target_embed_t: Tensor, encoded: Tensor, token_mask: np.ndarray) -> Tensor:
        """Fuse one (d,) embedding with one (m + 1, d) token set."""
        out = self.fuse_many(
            as_tensor(target_embed_t).reshape(1, self.d),
            encoded.reshape(1, *encoded.shape),
            np.asarray(token_mask, dtype=bool)[None],
        )
        return out.reshape(self.d)

    def fuse_sequence(self, input_embeds: Tensor, values: ArrayOrTensor, mask: np.ndarray) -> Tensor:
        """
        Fuse every observed step with its own grid slice.

        Args:
            input_embeds: (B, T, d) target input embeddings
            values: (B, W, L, T, 2) social tensor values
            mask: (B, W, L, T) occupancy

        Returns:
            (B, T, d) socially informed embeddings
        """
        b, t, d = input_embeds.shape
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (b, self.W, self.L, t):
            raise ValueError(f"social mask shape {mask.shape} does not match embeddings {input_embeds.shape}")
        slices = as_tensor(values).transpose(0, 3, 1, 2, 4).reshape(b * t, self.W, self.L, 2)
        slice_mask = mask.transpose(0, 3, 1, 2).reshape(b * t, self.W, self.L)

        encoded, token_mask = self.encode_grids(slices, slice_mask)
        logger.debug("fusing %d grid slices with up to %d tokens", b * t, encoded.shape[1])
        fused = self.fuse_many(input_embeds.reshape(b * t, d), encoded, token_mask)
        return fused.reshape(b, t, d)
