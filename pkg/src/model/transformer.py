"""
Encoder-decoder classification transformer over dislocation labels.

The three ablation variants share this network: CT and sp-CT differ only in the
frame their labels are measured in, sosp-CT additionally fuses the social
tensor into the encoder input.
"""

from typing import Optional, Tuple

import numpy as np

from src.data.social_tensor import SocialTensor
from src.model.config import ModelConfig, Variant
from src.model.layers import Decoder, Encoder, Linear, Module, Parameter, concat_halves, embed_labels
from src.model.stt import SocialTensorTransformer
from src.model.tensor import Tensor, concat, no_grad, pos_encode_1d, softmax_xent
from src.navigation.context import NavigationContext
from src.utils.errors import VariantMismatch
from src.utils.logger import get_logger

logger = get_logger(__name__)


class LossWeights(Module):
    """Learned log-variances s = log sigma^2 of the two classification tasks."""

    def __init__(self, s_x: float = 0.0, s_y: float = 0.0):
        self.s_x = Parameter(s_x)
        self.s_y = Parameter(s_y)

    @property
    def sigma_x(self) -> float:
        return float(np.exp(self.s_x.data / 2.0))

    @property
    def sigma_y(self) -> float:
        return float(np.exp(self.s_y.data / 2.0))


def uncertainty_weighted(loss_x: Tensor, loss_y: Tensor, w: LossWeights) -> Tensor:
    """exp(-s_x) L_x + exp(-s_y) L_y + (s_x + s_y) / 2."""
    return (-w.s_x).exp() * loss_x + (-w.s_y).exp() * loss_y + (w.s_x + w.s_y) * 0.5


class ClassificationTransformer(Module):
    """
    Predicts per-step lateral and longitudinal label distributions.

    Inputs are batched: observed labels (B, t_obs), navigation context (B, K),
    teacher-forced decoder labels (B, k) and, for sosp-CT only, social tensor
    values (B, W, L, t_obs, 2) with mask (B, W, L, t_obs).
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.variant = cfg.variant
        c1, c2 = cfg.n_lateral, cfg.n_longitudinal
        d, half = cfg.d, cfg.d // 2
        rng = np.random.default_rng(cfg.seed)

        self.embed_x = Linear(rng, c1, half)
        self.embed_y = Linear(rng, c2, half)
        self.dec_embed_x = Linear(rng, c1, half)
        self.dec_embed_y = Linear(rng, c2, half)
        self.context_embed = Linear(rng, cfg.context_dim, d)
        self.encoder = Encoder(rng, cfg.layers, d, cfg.heads, cfg.d_ff)
        self.decoder = Decoder(rng, cfg.layers, d, cfg.heads, cfg.d_ff)
        self.head_x = Linear(rng, d, c1)
        self.head_y = Linear(rng, d, c2)
        self.loss_weights = LossWeights()
        # drawn last so the shared weights match across variants for one seed
        self.stt = (
            SocialTensorTransformer(rng, cfg.grid, d, cfg.heads, cfg.d_ff, cfg.stt_layers)
            if self.variant.social
            else None
        )
        self._pe = pos_encode_1d(max(cfg.t_obs, cfg.n), d)

    @property
    def t_obs(self) -> int:
        return self.cfg.t_obs

    @property
    def n(self) -> int:
        return self.cfg.n

    def _check_social(self, social_values, social_mask) -> None:
        given = social_values is not None and social_mask is not None
        if given != self.variant.social:
            raise VariantMismatch(
                f"{self.variant.value} {'needs' if self.variant.social else 'takes no'} social tensor"
            )

    def encode(
        self,
        obs_x: np.ndarray,
        obs_y: np.ndarray,
        social_values=None,
        social_mask: Optional[np.ndarray] = None,
    ) -> Tensor:
        """(B, t_obs, d) encoder memory."""
        self._check_social(social_values, social_mask)
        x = concat_halves(
            embed_labels(self.embed_x, obs_x, self.cfg.n_lateral),
            embed_labels(self.embed_y, obs_y, self.cfg.n_longitudinal),
        )
        if self.stt is not None:
            x = self.stt.fuse_sequence(x, social_values, social_mask)
        x = x + self._pe[: x.shape[1]]
        return self.encoder(x)

    def decode(self, memory: Tensor, context: np.ndarray, dec_x: np.ndarray, dec_y: np.ndarray) -> Tuple[Tensor, Tensor]:
        """
        Context embedding at position 0 followed by embedded decoder labels, truncated to n positions.

        Returns:
            (B, steps, C1) and (B, steps, C2) logits, steps = min(1 + k, n)
        """
        context = np.asarray(context, dtype=np.float64)
        b = context.shape[0]
        first = self.context_embed(Tensor(context)).reshape(b, 1, self.cfg.d)
        dec_x = np.asarray(dec_x, dtype=np.int64).reshape(b, -1)
        dec_y = np.asarray(dec_y, dtype=np.int64).reshape(b, -1)
        k = min(dec_x.shape[1], self.n - 1)
        if k > 0:
            labels = concat_halves(
                embed_labels(self.dec_embed_x, dec_x[:, :k], self.cfg.n_lateral),
                embed_labels(self.dec_embed_y, dec_y[:, :k], self.cfg.n_longitudinal),
            )
            x = concat([first, labels], axis=1)
        else:
            x = first
        x = x + self._pe[: x.shape[1]]
        h = self.decoder(x, memory)
        return self.head_x(h), self.head_y(h)

    def forward(
        self,
        obs_x: np.ndarray,
        obs_y: np.ndarray,
        context: np.ndarray,
        dec_x: np.ndarray,
        dec_y: np.ndarray,
        social_values=None,
        social_mask: Optional[np.ndarray] = None,
    ) -> Tuple[Tensor, Tensor]:
        memory = self.encode(obs_x, obs_y, social_values, social_mask)
        return self.decode(memory, context, dec_x, dec_y)

    __call__ = forward

    def forward_sample(
        self,
        obs_labels: np.ndarray,
        tensor: Optional[SocialTensor],
        ctx: NavigationContext,
        dec_inputs: np.ndarray,
    ) -> Tuple[Tensor, Tensor]:
        """
        Unbatched forward pass.

        Args:
            obs_labels: (t_obs, 2) lateral/longitudinal labels
            tensor: Social tensor, required for sosp-CT only
            ctx: Navigation context ahead of the target
            dec_inputs: (k, 2) teacher-forced labels

        Returns:
            (steps, C1) and (steps, C2) logits
        """
        obs = np.asarray(obs_labels, dtype=np.int64).reshape(-1, 2)
        dec = np.asarray(dec_inputs, dtype=np.int64).reshape(-1, 2)
        values = mask = None
        if tensor is not None:
            values, mask = tensor.values[None], tensor.mask[None]
        lx, ly = self.forward(
            obs[None, :, 0], obs[None, :, 1], ctx.scaled()[None], dec[None, :, 0], dec[None, :, 1], values, mask
        )
        return lx.reshape(lx.shape[1:]), ly.reshape(ly.shape[1:])

    def dual_loss(
        self, logits_x: Tensor, logits_y: Tensor, target_x: np.ndarray, target_y: np.ndarray
    ) -> Tuple[Tensor, float, float]:
        """Weighted loss plus the unweighted lateral and longitudinal cross-entropies."""
        steps = logits_x.shape[1]
        target_x = np.asarray(target_x)[:, :steps].reshape(-1)
        target_y = np.asarray(target_y)[:, :steps].reshape(-1)
        loss_x = softmax_xent(logits_x.reshape(-1, self.cfg.n_lateral), target_x)
        loss_y = softmax_xent(logits_y.reshape(-1, self.cfg.n_longitudinal), target_y)
        return uncertainty_weighted(loss_x, loss_y, self.loss_weights), loss_x.item(), loss_y.item()

    def teacher_forced(self, obs_x, obs_y, context, fut_x, fut_y, social_values=None, social_mask=None):
        """Logits for all n steps with the ground-truth labels as decoder input."""
        fut_x = np.asarray(fut_x)
        fut_y = np.asarray(fut_y)
        return self.forward(obs_x, obs_y, context, fut_x[:, :-1], fut_y[:, :-1], social_values, social_mask)

    def greedy_decode(
        self,
        obs_x: np.ndarray,
        obs_y: np.ndarray,
        context: np.ndarray,
        social_values=None,
        social_mask: Optional[np.ndarray] = None,
        steps: Optional[int] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Autoregressive argmax decoding; ties resolve to the lower class index.

        Returns:
            (B, steps) lateral and longitudinal labels
        """
        steps = self.n if steps is None else min(steps, self.n)
        obs_x = np.asarray(obs_x, dtype=np.int64)
        b = obs_x.shape[0]
        out_x = np.zeros((b, 0), dtype=np.int64)
        out_y = np.zeros((b, 0), dtype=np.int64)
        with no_grad():
            memory = self.encode(obs_x, obs_y, social_values, social_mask)
            for _ in range(steps):
                lx, ly = self.decode(memory, context, out_x, out_y)
                out_x = np.concatenate([out_x, np.argmax(lx.data[:, -1], axis=-1)[:, None]], axis=1)
                out_y = np.concatenate([out_y, np.argmax(ly.data[:, -1], axis=-1)[:, None]], axis=1)
        return out_x, out_y


def build_variant(cfg: ModelConfig, variant: Optional[Variant] = None, seed: Optional[int] = None) -> ClassificationTransformer:
    """Construct one ablation variant; `variant` and `seed` override the config."""
    update = {}
    if variant is not None:
        update["variant"] = Variant(variant)
    if seed is not None:
        update["seed"] = seed
    if update:
        cfg = cfg.model_copy(update=update)
    model = ClassificationTransformer(cfg)
    logger.debug("built %s with %d parameters", model.variant.value, model.num_parameters())
    return model
