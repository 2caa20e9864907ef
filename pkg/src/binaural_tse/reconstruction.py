"""Filter-and-sum over context segments and Hann overlap-add resynthesis."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .frontend import FrameBatch, FrameGeometry

EPS = 1e-8


def correlate_valid(h: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
    """Valid-mode cross-correlation ``out[n] = sum_t h[t] d[n + t]`` over leading batch axes.

    ``h [..., F]`` and ``d [..., K]`` give ``[..., K - F + 1]``.
    """
    Fl, K = h.shape[-1], d.shape[-1]
    if h.shape[:-1] != d.shape[:-1]:
        raise ValueError("filter and segment batch shapes differ")
    if Fl > K:
        raise ValueError(f"filter ({Fl}) longer than segment ({K})")
    lead = h.shape[:-1]
    hh = h.reshape(-1, 1, Fl)
    dd = d.reshape(1, -1, K)
    if hh.shape[0] == 0:
        return d.new_zeros(*lead, K - Fl + 1)
    return F.conv1d(dd, hh, groups=hh.shape[0]).reshape(*lead, K - Fl + 1)


def filter_and_sum(h_left: torch.Tensor, h_right: torch.Tensor,
                   d_left: torch.Tensor, d_right: torch.Tensor) -> torch.Tensor:
    """Average of the two ears' filtered context segments: ``[..., F], [..., K] -> [..., K - F + 1]``."""
    if h_left.shape != h_right.shape or d_left.shape != d_right.shape:
        raise ValueError("left/right shapes differ")
    return 0.5 * (correlate_valid(h_left, d_left) + correlate_valid(h_right, d_right))


@dataclass
class ReconstructionPlan:
    geometry: FrameGeometry = field(default_factory=FrameGeometry)

    @property
    def window(self) -> torch.Tensor:
        return torch.hann_window(self.geometry.frame_len, periodic=True, dtype=torch.float64)

    def cola_error(self) -> float:
        """Max deviation from 1 of the steady-state window sum at the configured hop."""
        N, hop = self.geometry.frame_len, self.geometry.hop
        w = self.window
        total = torch.zeros(hop, dtype=torch.float64)
        for k in range(N // hop):
            total += w[k * hop:(k + 1) * hop]
        return float((total - 1.0).abs().max())


def overlap_add(frames: torch.Tensor, plan: ReconstructionPlan, num_samples: int | None = None) -> torch.Tensor:
    """Hann-weighted frames ``[..., m, N]`` summed at hop offsets, normalised by the window sum.

    Samples not covered by any frame (or where the window sum vanishes) are 0.
    """
    geom = plan.geometry
    N, hop = geom.frame_len, geom.hop
    if frames.shape[-1] != N:
        raise ValueError(f"frames have length {frames.shape[-1]}, geometry says {N}")
    lead, m = frames.shape[:-2], frames.shape[-2]
    covered = (m - 1) * hop + N
    T = covered if num_samples is None else num_samples
    if T < covered:
        raise ValueError(f"{m} frames need at least {covered} samples, got {T}")
    w = plan.window.to(frames.dtype)
    cols = (frames * w).reshape(-1, m, N).transpose(1, 2)
    out = F.fold(cols, (1, covered), (1, N), stride=(1, hop)).reshape(*lead, covered)
    wsum = F.fold(w.expand(m, N).T.unsqueeze(0).contiguous(), (1, covered), (1, N),
                  stride=(1, hop)).reshape(covered)
    out = out / wsum.clamp_min(EPS)
    if T > covered:
        out = F.pad(out, (0, T - covered))
    return out


def reconstruct(filters: list[torch.Tensor], batch: FrameBatch, plan: ReconstructionPlan) -> torch.Tensor:
    """Per-frame filter-and-sum then overlap-add to ``[..., T]``.

    Monaural extraction passes one filter set and one ear; the single
    branch is then used without averaging.
    """
    if len(filters) != batch.num_ears:
        raise ValueError(f"{len(filters)} filter sets for {batch.num_ears} ear(s)")
    if any(f.shape[-2] != batch.num_frames for f in filters):
        raise ValueError("filter frame count does not match the frame batch")
    if len(filters) == 2:
        frames = filter_and_sum(filters[0], filters[1], batch.segments[0], batch.segments[1])
    else:
        frames = correlate_valid(filters[0], batch.segments[0])
    return overlap_add(frames, plan, batch.num_samples)
