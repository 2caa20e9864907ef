"""Enrollment utterance to unit-norm speaker embedding."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .frontend import FrameGeometry, SpectralEncoder


class ResBlock1d(nn.Module):
    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        self.conv = nn.Conv1d(channels, channels, kernel_size, padding=kernel_size // 2)
        self.norm = nn.GroupNorm(1, channels)
        self.act = nn.PReLU()

    def forward(self, x):
        return x + self.act(self.norm(self.conv(x)))


class SpeakerEncoder(nn.Module):
    """Linear frame encoder, residual convolution stack, mean pooling, linear, L2 norm.

    Input ``[B, T_enroll]``; output ``[B, embed_dim]`` with unit L2 norm.
    Trained jointly with the extractor; there is no classification head.
    """

    def __init__(self, geometry: FrameGeometry | None = None, feature_dim: int = 64,
                 embed_dim: int = 64, num_blocks: int = 3, kernel_size: int = 3):
        super().__init__()
        self.geometry = geometry or FrameGeometry()
        self.encoder = SpectralEncoder(self.geometry.frame_len, feature_dim)
        self.blocks = nn.Sequential(*(ResBlock1d(feature_dim, kernel_size) for _ in range(num_blocks)))
        self.out = nn.Linear(feature_dim, embed_dim)
        self.embed_dim = embed_dim

    def forward(self, enrollment: torch.Tensor) -> torch.Tensor:
        if enrollment.dim() == 1:
            enrollment = enrollment.unsqueeze(0)
        if not torch.isfinite(enrollment).all():
            raise ValueError("enrollment contains NaN or Inf")
        g = self.geometry
        frames = enrollment.unfold(-1, g.frame_len, g.hop)[..., : g.num_frames(enrollment.shape[-1]), :]
        h = self.encoder(frames).transpose(1, 2)  # B, D, frames
        h = self.blocks(h).mean(dim=-1)
        return F.normalize(self.out(h), dim=-1, eps=1e-12)
