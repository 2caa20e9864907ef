"""Framing, learned spectral encoding and binaural interaction features.

Tensors are batched: waveforms ``[B, T]``, frames ``[B, m, N]``, context
segments ``[B, m, K]``. The left ear is the reference channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

EPS = 1e-8


@dataclass(frozen=True)
class FrameGeometry:
    frame_len: int = 64
    hop: int = 32
    segment_len: int = 576

    def __post_init__(self):
        N, K, hop = self.frame_len, self.segment_len, self.hop
        if not (0 < hop <= N < K):
            raise ValueError(f"need 0 < hop <= frame_len < segment_len, got hop={hop} N={N} K={K}")
        if (K - N) % 2:
            raise ValueError("segment_len - frame_len must be even so the frame sits at the segment center")
        if N % hop:
            raise ValueError("hop must divide frame_len")

    @property
    def context(self) -> int:
        """Samples of context on each side of a frame."""
        return (self.segment_len - self.frame_len) // 2

    @property
    def num_taps(self) -> int:
        """Filter/CSim length ``K - N + 1``."""
        return self.segment_len - self.frame_len + 1

    def num_frames(self, num_samples: int) -> int:
        if num_samples < self.frame_len:
            raise ValueError(f"signal of {num_samples} samples is shorter than one frame ({self.frame_len})")
        return (num_samples - self.frame_len) // self.hop + 1


@dataclass
class FrameBatch:
    """Center frames and context segments for each ear."""

    frames: list[torch.Tensor]
    segments: list[torch.Tensor]
    geometry: FrameGeometry
    num_samples: int

    @property
    def num_frames(self) -> int:
        return self.frames[0].shape[-2]

    @property
    def num_ears(self) -> int:
        return len(self.frames)


def _frame_one(x: torch.Tensor, geom: FrameGeometry) -> tuple[torch.Tensor, torch.Tensor]:
    T = x.shape[-1]
    m = geom.num_frames(T)
    frames = x.unfold(-1, geom.frame_len, geom.hop)[..., :m, :]
    # pad so segment i spans [i*hop - context, i*hop + N + context)
    right = max(0, (m - 1) * geom.hop + geom.segment_len - geom.context - T)
    padded = F.pad(x, (geom.context, right))
    segments = padded.unfold(-1, geom.segment_len, geom.hop)[..., :m, :]
    return frames, segments


def frame_signal(x: torch.Tensor, geom: FrameGeometry, *more: torch.Tensor) -> FrameBatch:
    """Frame one or more equal-length waveforms ``[..., T]`` (one per ear)."""
    waves = (x,) + more
    T = x.shape[-1]
    if any(w.shape != x.shape for w in waves):
        raise ValueError("all channels must share one shape")
    pieces = [_frame_one(w, geom) for w in waves]
    return FrameBatch([p[0] for p in pieces], [p[1] for p in pieces], geom, T)


class SpectralEncoder(nn.Module):
    """Bias-free learned linear map from an N-sample frame to D features.

    Equivalent to a one-dimensional convolution whose kernel spans the frame
    and whose stride is the hop.
    """

    def __init__(self, frame_len: int = 64, feature_dim: int = 64):
        super().__init__()
        self.frame_len = frame_len
        self.proj = nn.Linear(frame_len, feature_dim, bias=False)

    def forward(self, frames: torch.Tensor) -> torch.Tensor:
        if frames.shape[-1] != self.frame_len:
            raise ValueError(f"frames have length {frames.shape[-1]}, encoder expects {self.frame_len}")
        return self.proj(frames)


def csim(center: torch.Tensor, segment: torch.Tensor) -> torch.Tensor:
    """Sliding cosine similarity of ``center [..., N]`` against every N-window of ``segment [..., K]``.

    Returns ``[..., K - N + 1]`` with one-sample stride. Norms are floored at
    ``1e-8`` so zero-energy windows give 0, and the result is clamped to
    ``[-1, 1]``.
    """
    N, K = center.shape[-1], segment.shape[-1]
    if K < N:
        raise ValueError(f"segment ({K}) shorter than center frame ({N})")
    if center.shape[:-1] != segment.shape[:-1]:
        raise ValueError("center and segment batch shapes differ")
    lead = center.shape[:-1]
    c = center.reshape(-1, N)
    s = segment.reshape(-1, K)
    groups = c.shape[0]
    if groups == 0:
        return segment.new_zeros(*lead, K - N + 1)
    dots = F.conv1d(s.unsqueeze(0), c.unsqueeze(1), groups=groups).squeeze(0)
    win_energy = F.conv1d((s * s).unsqueeze(1), s.new_ones(1, 1, N)).squeeze(1)
    win_norm = win_energy.clamp_min(EPS * EPS).sqrt()
    c_norm = (c * c).sum(-1, keepdim=True).clamp_min(EPS * EPS).sqrt()
    out = dots / (c_norm * win_norm)
    return out.clamp(-1.0, 1.0).reshape(*lead, K - N + 1)


def binaural_csim_features(batch: FrameBatch) -> tuple[torch.Tensor, torch.Tensor]:
    """Left: self-similarity of the left frame in its own context. Right: left frame vs right context."""
    ref = batch.frames[0]
    return csim(ref, batch.segments[0]), csim(ref, batch.segments[1])


def iac_attention(c1: torch.Tensor, c2: torch.Tensor) -> torch.Tensor:
    """Row-wise softmax of the per-frame outer product ``c1 c2^T``: ``[..., D] -> [..., D, D]``."""
    if c1.shape != c2.shape:
        raise ValueError(f"feature shapes differ: {tuple(c1.shape)} vs {tuple(c2.shape)}")
    return torch.softmax(c1.unsqueeze(-1) * c2.unsqueeze(-2), dim=-1)


class IAC(nn.Module):
    """Inter-channel attention correlation projected back to D features."""

    def __init__(self, feature_dim: int = 64):
        super().__init__()
        self.feature_dim = feature_dim
        self.proj = nn.Linear(feature_dim * feature_dim, feature_dim)

    def forward(self, c1: torch.Tensor, c2: torch.Tensor) -> torch.Tensor:
        if c1.shape[-1] != self.feature_dim:
            raise ValueError(f"expected {self.feature_dim} features, got {c1.shape[-1]}")
        a = iac_attention(c1, c2)
        return self.proj(a.flatten(-2))


class Bottleneck(nn.Module):
    """Concatenate spectral and binaural features and project to the separator width."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.proj = nn.Linear(in_dim, out_dim)

    def forward(self, spectral: torch.Tensor, binaural: torch.Tensor | None = None) -> torch.Tensor:
        if binaural is not None:
            if spectral.shape[:-1] != binaural.shape[:-1]:
                raise ValueError(
                    f"frame counts differ: {tuple(spectral.shape[:-1])} vs {tuple(binaural.shape[:-1])}"
                )
            spectral = torch.cat([spectral, binaural], dim=-1)
        if spectral.shape[-1] != self.in_dim:
            raise ValueError(f"bottleneck expects width {self.in_dim}, got {spectral.shape[-1]}")
        return self.proj(spectral)


VARIANTS = ("bi_csim", "bi_iac", "monaural")


class Frontend(nn.Module):
    """Waveforms to per-ear separator inputs ``[B, m, H]``.

    ``bi_csim`` and ``bi_iac`` take two ears and return two inputs;
    ``monaural`` takes one channel and uses the spectral feature alone.
    """

    def __init__(self, variant: str = "bi_csim", geometry: FrameGeometry | None = None,
                 feature_dim: int = 64, sep_dim: int = 64):
        super().__init__()
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.variant = variant
        self.geometry = geometry or FrameGeometry()
        self.encoder = SpectralEncoder(self.geometry.frame_len, feature_dim)
        num_ears = 1 if variant == "monaural" else 2
        if variant == "bi_csim":
            in_dim = feature_dim + self.geometry.num_taps
        elif variant == "bi_iac":
            in_dim = 2 * feature_dim
            self.iac = IAC(feature_dim)
        else:
            in_dim = feature_dim
        self.bottlenecks = nn.ModuleList(Bottleneck(in_dim, sep_dim) for _ in range(num_ears))

    @property
    def num_ears(self) -> int:
        return len(self.bottlenecks)

    def forward(self, batch: FrameBatch) -> list[torch.Tensor]:
        if batch.num_ears != self.num_ears:
            raise ValueError(f"{self.variant} frontend needs {self.num_ears} channel(s), got {batch.num_ears}")
        spectral = [self.encoder(f) for f in batch.frames]
        if self.variant == "bi_csim":
            binaural = list(binaural_csim_features(batch))
        elif self.variant == "bi_iac":
            shared = self.iac(spectral[0], spectral[1])
            binaural = [shared, shared]
        else:
            binaural = [None]
        return [bn(c, b) for bn, c, b in zip(self.bottlenecks, spectral, binaural)]
