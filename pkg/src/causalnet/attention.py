"""Masked pseudo-attention, spatial/temporal causal attention and causal relation mining.

Token grids are tensors of shape (..., N, D) with N = m * m tokens in row-major
order: token i sits at (x, y) = (i mod m, i // m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import torch
from torch import Tensor, nn


@dataclass(frozen=True)
class GridGeometry:
    m: int = 2
    r: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("grid side m must be >= 1")
        if self.r < 0:
            raise ValueError("neighbourhood radius r must be >= 0")

    @property
    def n_tokens(self) -> int:
        return self.m * self.m

    def coords(self) -> Tensor:
        i = torch.arange(self.n_tokens)
        return torch.stack([i % self.m, i // self.m], dim=-1)


def _squared_distances(geom: GridGeometry) -> Tensor:
    xy = geom.coords()
    return ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)


def build_neighborhood_mask(geom: GridGeometry, dtype=torch.float64) -> Tensor:
    """M(i, j) = 1 iff the squared distance between tokens i and j is <= r."""
    return (_squared_distances(geom) <= geom.r).to(dtype)


def _pseudo_matrix(geom: GridGeometry, gamma: float, dtype=torch.float64) -> Tensor:
    mask = build_neighborhood_mask(geom, dtype)
    j = torch.arange(geom.n_tokens, dtype=dtype).expand(geom.n_tokens, -1)
    # + 0.0 turns the -0.0 at column 0 into 0.0
    return torch.where(mask.bool(), torch.zeros_like(j), -j * gamma) + 0.0


def build_pseudo_matrix(geom: GridGeometry, gamma: float, dtype=torch.float64) -> Tensor:
    """P(i, j) = 0 inside the neighbourhood, -j * gamma at masked positions."""
    if not gamma > 0:
        raise ValueError(f"decay rate gamma must be > 0, got {gamma}")
    return _pseudo_matrix(geom, gamma, dtype)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return x.reshape(*lead, n, heads, d // heads).transpose(-3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dk = x.shape
    return x.transpose(-3, -2).reshape(*lead, n, h * dk)


def _check_finite(*tensors: Tensor) -> None:
    for t in tensors:
        if not torch.isfinite(t).all():
            raise ValueError("attention inputs contain non-finite values")


def masked_pseudo_attention(q: Tensor, k: Tensor, v: Tensor, mask: Tensor, pseudo: Tensor,
                            heads: int = 1) -> Tuple[Tensor, Tensor]:
    """SM((QK^T / sqrt(d_k)) * M + P) * M applied to V.

    q, k, v: (..., N, D). Returns (output (..., N, D), attention). The attention
    has shape (..., N, N) for one head and (..., heads, N, N) otherwise. Pseudo
    scores take part in the softmax normaliser but are zeroed before
    aggregating values, so attention rows sum to less than one wherever a row
    has a masked position.
    """
    _check_finite(q, k, v)
    if q.shape[-1] % heads:
        raise ValueError(f"feature dim {q.shape[-1]} not divisible by heads={heads}")
    if heads > 1:
        q, k, v = (_split_heads(t, heads) for t in (q, k, v))
    d_k = q.shape[-1]
    scores = q @ k.transpose(-2, -1) / math.sqrt(d_k) * mask + pseudo
    attn = torch.softmax(scores, dim=-1) * mask
    out = attn @ v
    if heads > 1:
        out = _merge_heads(out)
    return out, attn


class MonotonicityError(AssertionError):
    pass


@dataclass(frozen=True)
class MonotonicityResult:
    row_sums: Tuple[float, ...]
    status: str  # "monotonic" or "degenerate"


def position_monotonicity_check(gamma: float, geom: GridGeometry = GridGeometry(),
                                dim: int = 4) -> MonotonicityResult:
    """Row sums of the attention matrix for an identical-token sequence.

    Every query/key pair scores 0, so only the pseudo scores distinguish rows.
    With gamma > 0 the row sums must strictly decrease with the row index;
    gamma == 0 gives constant rows and is reported as degenerate.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    n = geom.n_tokens
    q = torch.zeros(n, dim, dtype=torch.float64)
    kv = torch.ones(n, dim, dtype=torch.float64)
    mask = build_neighborhood_mask(geom)
    _, attn = masked_pseudo_attention(q, kv, kv, mask, _pseudo_matrix(geom, gamma))
    sums = tuple(attn.sum(-1).tolist())
    if gamma == 0:
        return MonotonicityResult(sums, "degenerate")
    for i in range(n - 1):
        if not sums[i] > sums[i + 1]:
            raise MonotonicityError(
                f"row sums not strictly decreasing at rows {i},{i + 1}: {sums[i]} <= {sums[i + 1]}")
    return MonotonicityResult(sums, "monotonic")


def causal_relation_mining(y_for2: Tensor, y_back2: Tensor, d_k: Optional[int] = None) -> Tensor:
    """SM(y_for2 y_back2^T / sqrt(d_k)) (y_for2 + y_back2) over (..., N, D) grids."""
    if y_for2.shape != y_back2.shape:
        raise ValueError(f"shape mismatch: {tuple(y_for2.shape)} vs {tuple(y_back2.shape)}")
    d_k = d_k or y_for2.shape[-1]
    attn = torch.softmax(y_for2 @ y_back2.transpose(-2, -1) / math.sqrt(d_k), dim=-1)
    return attn @ (y_for2 + y_back2)


class PosAttention(nn.Module):
    """Masked pseudo-attention with per-token Q/K/V projections.

    Used both as cross attention (query grid differs from key/value grid) and
    as within-time spatial self attention. Leading dimensions are batch-like,
    so a (B, T, N, D) input attends only within each time step.
    """

    def __init__(self, dim: int, geom: GridGeometry = GridGeometry(), gamma: float = 0.1,
                 heads: int = 1, residual_norm: bool = True):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.residual_norm = residual_norm
        self.norm = nn.LayerNorm(dim) if residual_norm else nn.Identity()
        self.register_buffer("mask", build_neighborhood_mask(geom, torch.float32))
        self.register_buffer("pseudo", build_pseudo_matrix(geom, gamma, torch.float32))

    def forward(self, x_q: Tensor, x_kv: Optional[Tensor] = None) -> Tensor:
        x_kv = x_q if x_kv is None else x_kv
        out, _ = masked_pseudo_attention(self.q(x_q), self.k(x_kv), self.v(x_kv),
                                         self.mask, self.pseudo, self.heads)
        if self.residual_norm:
            out = self.norm(x_q + out)
        return out


class TemporalCausalAttention(nn.Module):
    """Attention across the two time steps at each spatial position.

    Input (..., 2, N, D). The t=1 grid is returned untouched; the t=2 token at
    each position attends over the t=1 and t=2 tokens at that same position.
    """

    def __init__(self, dim: int, heads: int = 1, residual_norm: bool = True):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.residual_norm = residual_norm
        self.norm = nn.LayerNorm(dim) if residual_norm else nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[-3] != 2:
            raise ValueError(f"expected 2 time steps, got {x.shape[-3]}")
        _check_finite(x)
        x1, x2 = x[..., 0, :, :], x[..., 1, :, :]
        # (..., N, T=2, D): each position is an independent length-2 sequence
        seq = x.transpose(-3, -2)
        q = self.q(x2).unsqueeze(-2)
        k, v = self.k(seq), self.v(seq)
        if self.heads > 1:
            q, k, v = (_split_heads(t, self.heads) for t in (q, k, v))
        attn = torch.softmax(q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1]), dim=-1)
        out = attn @ v
        if self.heads > 1:
            out = _merge_heads(out)
        out = out.squeeze(-2)
        if self.residual_norm:
            out = self.norm(x2 + out)
        return torch.stack([x1, out], dim=-3)


class SpatialTemporalCausalAttention(nn.Module):
    def __init__(self, dim: int, geom: GridGeometry = GridGeometry(), gamma: float = 0.1,
                 heads: int = 1, residual_norm: bool = True):
        super().__init__()
        self.spatial = PosAttention(dim, geom, gamma, heads, residual_norm)
        self.temporal = TemporalCausalAttention(dim, heads, residual_norm)

    def forward(self, x: Tensor) -> Tensor:
        return self.temporal(self.spatial(x))
