"""End-to-end target speaker extraction model."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch
from torch import nn

from .extractor import DPRNNConfig, Extractor
from .frontend import VARIANTS, FrameGeometry, Frontend, frame_signal
from .reconstruction import ReconstructionPlan, reconstruct
from .speaker_encoder import SpeakerEncoder

PARAM_GROUPS = ("frontend", "speaker_encoder", "extractor")


@dataclass
class ModelConfig:
    variant: str = "bi_csim"
    frame_len: int = 64
    hop: int = 32
    segment_len: int = 576
    feature_dim: int = 64
    sep_dim: int = 64
    embed_dim: int = 64
    num_heads: int = 6
    head_dim: int = 32
    dprnn_blocks: int = 3
    dprnn_hidden: int = 128
    chunk_len: int = 100
    chunk_hop: int = 50
    spk_blocks: int = 3
    spk_kernel: int = 3
    # which mixture channel the monaural variant listens to
    monaural_channel: str = "left"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.monaural_channel not in ("left", "right"):
            raise ValueError("monaural_channel must be 'left' or 'right'")
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, int) and v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        self.geometry  # validates the framing constants

    @property
    def geometry(self) -> FrameGeometry:
        return FrameGeometry(self.frame_len, self.hop, self.segment_len)

    @property
    def num_ears(self) -> int:
        return 1 if self.variant == "monaural" else 2

    @property
    def separator_input_dim(self) -> int:
        """Width of the concatenated features fed to each bottleneck."""
        if self.variant == "bi_csim":
            return self.feature_dim + self.geometry.num_taps
        if self.variant == "bi_iac":
            return 2 * self.feature_dim
        return self.feature_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys {sorted(unknown)}")
        return cls(**d)


class TSEModel(nn.Module):
    """Mixture ``[B, ears, T]`` plus enrollment ``[B, T_e]`` to extracted waveform ``[B, T]``."""

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config = config or ModelConfig()
        geom = config.geometry
        self.frontend = Frontend(config.variant, geom, config.feature_dim, config.sep_dim)
        self.speaker_encoder = SpeakerEncoder(geom, config.feature_dim, config.embed_dim,
                                              config.spk_blocks, config.spk_kernel)
        self.extractor = Extractor(
            num_ears=config.num_ears,
            width=config.sep_dim,
            num_taps=geom.num_taps,
            dprnn=DPRNNConfig(config.dprnn_blocks, config.dprnn_hidden, config.chunk_len, config.chunk_hop),
            num_heads=config.num_heads,
            head_dim=config.head_dim,
            embed_dim=config.embed_dim,
        )
        self.plan = ReconstructionPlan(geom)

    def select_channels(self, mixture: torch.Tensor) -> list[torch.Tensor]:
        """Per-ear waveforms the variant consumes, from a ``[B, 2, T]`` or ``[B, 1, T]`` mixture."""
        if mixture.dim() != 3:
            raise ValueError(f"mixture must be [B, ears, T], got {tuple(mixture.shape)}")
        if self.config.num_ears == 2:
            if mixture.shape[1] != 2:
                raise ValueError("binaural variants need a two-channel mixture")
            return [mixture[:, 0], mixture[:, 1]]
        if mixture.shape[1] == 1:
            return [mixture[:, 0]]
        return [mixture[:, 0 if self.config.monaural_channel == "left" else 1]]

    def filters(self, mixture: torch.Tensor, embedding: torch.Tensor):
        ears = self.select_channels(mixture)
        batch = frame_signal(ears[0], self.config.geometry, *ears[1:])
        inputs = self.frontend(batch)
        return self.extractor(inputs, embedding), batch

    def forward(self, mixture: torch.Tensor, enrollment: torch.Tensor,
                embedding: torch.Tensor | None = None) -> torch.Tensor:
        if embedding is None:
            embedding = self.speaker_encoder(enrollment)
        filters, batch = self.filters(mixture, embedding)
        return reconstruct(filters, batch, self.plan)
