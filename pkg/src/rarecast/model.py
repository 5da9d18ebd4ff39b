"""Attention-bottleneck transformer with one decision head and three
training-only auxiliary heads.

Forward path: feature embedding + layer norm, sinusoidal positional codes
scaled by a learnable factor, a stack of post-norm encoder blocks, a
single-query softmax pooling over time, a shared d->d MLP, then four linear
heads (classification logit, Normal-Inverse-Gamma tuple, Generalized Pareto
tuple, precursor logit). Inference needs only the classification head; the
auxiliaries exist to shape training.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

XI_MIN, XI_MAX = -0.5, 1.0  # GPD shape kept in a numerically tame range
POSITIVITY_FLOOR = 1e-6


class ConfigError(ValueError):
    pass


class ShapeError(ValueError):
    pass


class NumericError(RuntimeError):
    """Non-finite activation, with the first offending stage named."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs. ``reference()`` is the published budget setting."""

    d: int = 128
    layers: int = 6
    heads: int = 4
    ffn: int = 256
    dropout: float = 0.20
    window_len: int = 10
    n_features: int = 9
    pooling: str = "attention"  # "attention" | "mean" (ablation)

    def __post_init__(self) -> None:
        if self.d % self.heads != 0:
            raise ConfigError(f"d={self.d} must be divisible by heads={self.heads}")
        if self.d % 2 != 0:
            raise ConfigError("d must be even for sinusoidal positional codes")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0,1)")
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")
        if self.pooling not in ("attention", "mean"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")

    @classmethod
    def reference(cls) -> "ModelConfig":
        return cls()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ForwardOutput:
    """Per-window outputs of one forward pass (all torch tensors)."""

    logit: Tensor          # (N,)
    prob: Tensor           # (N,) sigmoid of logit
    mu: Tensor             # (N,) NIG location
    v: Tensor              # (N,) NIG evidence, > 0
    alpha: Tensor          # (N,) NIG shape, > 1
    beta: Tensor           # (N,) NIG scale, > 0
    xi: Tensor             # (N,) GPD shape
    sigma: Tensor          # (N,) GPD scale, > 0
    precursor_logit: Tensor  # (N,)
    attn_weights: Tensor   # (N, T) nonnegative, rows sum to 1
    pooled: Tensor         # (N, d)


def sinusoidal_pe(window_len: int, d: int) -> Tensor:
    """Standard interleaved sin/cos positional codes, shape (T, d)."""
    if d % 2 != 0:
        raise ConfigError("positional encoding needs even d")
    position = torch.arange(window_len, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, d, 2, dtype=torch.float64) * (-math.log(10000.0) / d))
    pe = torch.zeros(window_len, d, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(position * div)
    pe[:, 1::2] = torch.cos(position * div)
    return pe


def _dropout(x: Tensor, p: float, training: bool, rng: torch.Generator | None) -> Tensor:
    if not training or p == 0.0:
        return x
    keep = 1.0 - p
    mask = torch.rand(x.shape, generator=rng, dtype=x.dtype, device=x.device) < keep
    return x * mask.to(x.dtype) / keep


class EncoderBlock(nn.Module):
    """Post-norm block: LN(x + Drop[MHA(x)]) then LN(. + Drop[FFN(.)])."""

    def __init__(self, d: int, heads: int, ffn: int, dropout: float) -> None:
        super().__init__()
        self.heads = heads
        self.head_dim = d // heads
        self.dropout = dropout
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.out_proj = nn.Linear(d, d)
        self.ffn_in = nn.Linear(d, ffn)
        self.ffn_out = nn.Linear(ffn, d)
        self.norm_attn = nn.LayerNorm(d)
        self.norm_ffn = nn.LayerNorm(d)

    def attention(self, x: Tensor) -> Tensor:
        n, t, d = x.shape
        def split(proj: nn.Linear) -> Tensor:
            return proj(x).view(n, t, self.heads, self.head_dim).transpose(1, 2)
        q, k, v = split(self.q_proj), split(self.k_proj), split(self.v_proj)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        mixed = (weights @ v).transpose(1, 2).reshape(n, t, d)
        return self.out_proj(mixed)

    def forward(self, x: Tensor, training: bool, rng: torch.Generator | None) -> Tensor:
        x = self.norm_attn(x + _dropout(self.attention(x), self.dropout, training, rng))
        ffn = self.ffn_out(F.gelu(self.ffn_in(x)))
        return self.norm_ffn(x + _dropout(ffn, self.dropout, training, rng))


class BottleneckTransformer(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        d = config.d
        self.embed = nn.Linear(config.n_features, d)
        self.embed_norm = nn.LayerNorm(d)
        self.pe_scale = nn.Parameter(torch.tensor(1.0))
        self.register_buffer("pe", sinusoidal_pe(config.window_len, d).to(torch.float32))
        self.blocks = nn.ModuleList(
            EncoderBlock(d, config.heads, config.ffn, config.dropout)
            for _ in range(config.layers)
        )
        self.pool_query = nn.Parameter(torch.zeros(d))
        nn.init.normal_(self.pool_query, std=d ** -0.5)
        self.shared_mlp = nn.Linear(d, d)
        self.clf_head = nn.Linear(d, 1)
        self.evidential_head = nn.Linear(d, 4)
        self.evt_head = nn.Linear(d, 2)
        self.precursor_head = nn.Linear(d, 1)

    def encode(self, x: Tensor, training: bool, rng: torch.Generator | None) -> Tensor:
        """Run embedding + encoder stack; returns hidden states (N, T, d)."""
        cfg = self.config
        if x.ndim != 3 or x.shape[1] != cfg.window_len or x.shape[2] != cfg.n_features:
            raise ShapeError(
                f"expected (N, {cfg.window_len}, {cfg.n_features}) input, got {tuple(x.shape)}"
            )
        h0 = self.embed_norm(self.embed(x))
        h = _dropout(h0 + self.pe_scale * self.pe.to(x.dtype), cfg.dropout, training, rng)
        for block in self.blocks:
            h = block(h, training, rng)
        return h

    def pool(self, hidden: Tensor) -> tuple[Tensor, Tensor]:
        """Single-query softmax pooling over time -> (pooled (N,d), weights (N,T))."""
        n, t, _ = hidden.shape
        if self.config.pooling == "mean":
            weights = torch.full((n, t), 1.0 / t, dtype=hidden.dtype, device=hidden.device)
        else:
            scores = hidden @ self.pool_query.to(hidden.dtype)
            weights = torch.softmax(scores, dim=1)
        pooled = (weights.unsqueeze(-1) * hidden).sum(dim=1)
        return pooled, weights

    def forward(
        self,
        x: Tensor,
        training: bool = False,
        rng: torch.Generator | None = None,
        check_finite: bool = False,
    ) -> ForwardOutput:
        hidden = self.encode(x, training, rng)
        pooled, weights = self.pool(hidden)
        shared = F.gelu(self.shared_mlp(pooled))

        logit = self.clf_head(shared).squeeze(-1)
        prob = torch.sigmoid(logit)
        nig_raw = self.evidential_head(shared)
        mu = nig_raw[:, 0]
        v = F.softplus(nig_raw[:, 1]) + POSITIVITY_FLOOR
        alpha = F.softplus(nig_raw[:, 2]) + 1.0 + POSITIVITY_FLOOR
        beta = F.softplus(nig_raw[:, 3]) + POSITIVITY_FLOOR
        evt_raw = self.evt_head(shared)
        xi = torch.clamp(evt_raw[:, 0], XI_MIN, XI_MAX)
        sigma = F.softplus(evt_raw[:, 1]) + POSITIVITY_FLOOR
        precursor_logit = self.precursor_head(shared).squeeze(-1)

        out = ForwardOutput(
            logit=logit, prob=prob, mu=mu, v=v, alpha=alpha, beta=beta,
            xi=xi, sigma=sigma, precursor_logit=precursor_logit,
            attn_weights=weights, pooled=pooled,
        )
        if check_finite:
            self._assert_finite(x, out, training, rng)
        return out

    def _assert_finite(
        self, x: Tensor, out: ForwardOutput, training: bool, rng: torch.Generator | None
    ) -> None:
        head_outputs = (out.logit, out.mu, out.v, out.alpha, out.beta, out.xi,
                        out.sigma, out.precursor_logit)
        if all(torch.isfinite(t).all() for t in head_outputs):
            return
        # diagnose: replay stage by stage to name the first bad one
        with torch.no_grad():
            h = self.embed_norm(self.embed(x))
            if not torch.isfinite(h).all():
                raise NumericError("non-finite activation in embedding")
            h = h + self.pe_scale * self.pe.to(x.dtype)
            for i, block in enumerate(self.blocks):
                h = block(h, False, None)
                if not torch.isfinite(h).all():
                    raise NumericError(f"non-finite activation in encoder block {i}")
        raise NumericError("non-finite activation in pooling or heads")

    def saliency(self, window: Tensor | np.ndarray) -> np.ndarray:
        """Gradient of the classification logit w.r.t. one (T, F) window."""
        was_training = self.training
        self.eval()
        try:
            x = torch.as_tensor(
                np.asarray(window), dtype=next(self.parameters()).dtype
            ).unsqueeze(0)
            x.requires_grad_(True)
            out = self.forward(x, training=False)
            out.logit.sum().backward()
            grad = x.grad
        finally:
            self.train(was_training)
        if grad is None or not torch.isfinite(grad).all():
            raise NumericError("non-finite saliency gradient")
        return grad.squeeze(0).detach().cpu().numpy()
