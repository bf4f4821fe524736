"""CausalNet: flow encoders, motion-position cross attention, causal attention block, classifier."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .attention import GridGeometry, PosAttention, SpatialTemporalCausalAttention, causal_relation_mining
from .config import Config
from .flow import SampleInputs

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class LiteConvEncoder(nn.Module):
    """Three stride-2 conv stages, then average pooling to an m x m token grid."""

    def __init__(self, in_channels: int, dim: int, m: int = 2, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1), nn.GELU(),
            nn.Conv2d(2 * width, dim, 3, stride=2, padding=1), nn.GELU(),
            nn.AdaptiveAvgPool2d(m),
        )

    def forward(self, x: Tensor) -> Tensor:
        # (B, D, m, m) -> (B, m*m, D), row-major over (y, x)
        return self.net(x).flatten(2).transpose(1, 2)


def _finite(name: str, t: Tensor) -> Tensor:
    if not torch.isfinite(t).all():
        raise FloatingPointError(f"non-finite activations in layer {name!r}")
    return t


class CausalNet(nn.Module):
    def __init__(self, dim: int = 256, n_classes: int = 3, m: int = 2, r: float = 1.0,
                 gamma: float = 0.1, heads: int = 1, residual_norm: bool = True,
                 n_blocks: int = 1, share_flow_encoder: bool = True, enc_width: int = 32,
                 flow_channels: int = 3, dir_channels: int = 2):
        super().__init__()
        geom = GridGeometry(m, r)
        self.geom = geom
        self.dim = dim
        self.flow_encoder = LiteConvEncoder(flow_channels, dim, m, enc_width)
        self.flow_encoder_ao = (self.flow_encoder if share_flow_encoder
                                else LiteConvEncoder(flow_channels, dim, m, enc_width))
        self.dir_encoder = LiteConvEncoder(dir_channels, dim, m, enc_width)
        self.cmplm = PosAttention(dim, geom, gamma, heads, residual_norm)
        self.blocks = nn.ModuleList(
            SpatialTemporalCausalAttention(dim, geom, gamma, heads, residual_norm)
            for _ in range(n_blocks))
        self.classifier = nn.Linear(3 * geom.n_tokens * dim, n_classes)

    @classmethod
    def from_config(cls, config: Config) -> "CausalNet":
        return cls(dim=config.dim, n_classes=config.n_classes, m=config.grid, r=config.radius,
                   gamma=config.gamma, heads=config.heads, residual_norm=config.residual_norm,
                   n_blocks=config.n_blocks, share_flow_encoder=config.share_flow_encoder,
                   enc_width=config.enc_width)

    def encode_flows(self, flow_oa: Tensor, flow_ao: Tensor) -> Tuple[Tensor, Tensor]:
        return self.flow_encoder(flow_oa), self.flow_encoder_ao(flow_ao)

    def cmplm_forward(self, dir_oa: Tensor, dir_ao: Tensor) -> Tuple[Tensor, Tensor]:
        """Position embeddings from the two direction maps via cross attention."""
        if dir_oa.shape != dir_ao.shape:
            raise ValueError(f"direction map shape mismatch: {tuple(dir_oa.shape)} vs {tuple(dir_ao.shape)}")
        x_pos1 = self.dir_encoder(dir_oa)
        x_pos2 = self.dir_encoder(dir_ao)
        return self.cmplm(x_pos1, x_pos2), self.cmplm(x_pos2, x_pos1)

    def cab_forward(self, x1: Tensor, x2: Tensor, pos1: Tensor, pos2: Tensor,
                    return_parts: bool = False):
        """Returns y_all of shape (B, 3*N, D) (and the intermediate grids if asked)."""
        shapes = {tuple(t.shape) for t in (x1, x2, pos1, pos2)}
        if len(shapes) != 1:
            raise ValueError(f"token grid shapes differ: {sorted(shapes)}")
        a1 = x1 + pos1
        a2 = x2 + pos2
        x_for = torch.stack([a1, a2], dim=-3)
        x_back = torch.stack([a2, a1], dim=-3)
        y = torch.stack([x_for, x_back], dim=-4)  # (..., 2 directions, 2 steps, N, D)
        for block in self.blocks:
            y = block(y)
        y_for1, y_for2 = y[..., 0, 0, :, :], y[..., 0, 1, :, :]
        y_back1, y_back2 = y[..., 1, 0, :, :], y[..., 1, 1, :, :]
        y_long = causal_relation_mining(y_for2, y_back2)
        y_all = torch.cat([y_long, y_for1, y_back1], dim=-2)
        if return_parts:
            parts = dict(y_for1=y_for1, y_for2=y_for2, y_back1=y_back1, y_back2=y_back2, y_long=y_long)
            return y_all, parts
        return y_all

    def forward(self, flow_oa: Tensor, flow_ao: Tensor, dir_oa: Tensor, dir_ao: Tensor) -> Tensor:
        x1, x2 = self.encode_flows(flow_oa, flow_ao)
        _finite("flow_encoder", x1)
        _finite("flow_encoder", x2)
        pos1, pos2 = self.cmplm_forward(dir_oa, dir_ao)
        _finite("cmplm", pos1)
        _finite("cmplm", pos2)
        y_all = _finite("cab", self.cab_forward(x1, x2, pos1, pos2))
        return _finite("classifier", self.classifier(y_all.flatten(-2)))


def classify(logits) -> Union[int, np.ndarray]:
    """Arg-max class; ties go to the lowest index."""
    a = logits.detach().cpu().numpy() if isinstance(logits, Tensor) else np.asarray(logits)
    if a.ndim == 1:
        return int(np.argmax(a))
    return np.argmax(a, axis=-1)


def to_tensors(inputs: Sequence[SampleInputs], dtype=torch.float32) -> Tuple[Tensor, ...]:
    """Stack per-sample inputs into four (B, C, 28, 28) tensors."""
    def stack(arrays):
        return torch.from_numpy(np.stack(arrays).transpose(0, 3, 1, 2).copy()).to(dtype)

    return (
        stack([s.flow_oa.data for s in inputs]),
        stack([s.flow_ao.data for s in inputs]),
        stack([s.dir_oa.data for s in inputs]),
        stack([s.dir_ao.data for s in inputs]),
    )


@dataclass
class TrainResult:
    model: CausalNet
    losses: List[float] = field(default_factory=list)


def train(inputs: Sequence[SampleInputs], labels: Sequence[int], config: Config,
          seed: int) -> TrainResult:
    """Fit a fresh CausalNet with Adam on cross-entropy; deterministic given seed."""
    if len(inputs) == 0:
        raise TrainingError("empty training split")
    if len(inputs) != len(labels):
        raise TrainingError("inputs and labels differ in length")
    torch.manual_seed(seed)
    model = CausalNet.from_config(config)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    data = to_tensors(inputs)
    y = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    gen = torch.Generator().manual_seed(seed)
    n = len(y)
    losses = []
    model.train()
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            loss = F.cross_entropy(model(*(t[idx] for t in data)), y[idx])
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        losses.append(total / n)
        log.debug("epoch %d loss %.4f", epoch, losses[-1])
    model.eval()
    return TrainResult(model, losses)


@torch.no_grad()
def predict(model: CausalNet, inputs: Sequence[SampleInputs]) -> np.ndarray:
    model.eval()
    dtype = next(model.parameters()).dtype
    return classify(model(*to_tensors(inputs, dtype)))


def save_checkpoint(path: Union[str, Path], model: CausalNet, config: Config, **extra) -> None:
    torch.save({"config": config.to_dict(), "state_dict": model.state_dict(), **extra}, path)


def load_checkpoint(path: Union[str, Path]) -> Tuple[CausalNet, Config]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    config = Config(**blob["config"])
    model = CausalNet.from_config(config)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, config
