"""Twin DPRNN separators with TAC fusion and speaker-conditioned selective attention.

Per ear: DPRNN block 1 -> TAC across ears -> selective attention -> DPRNN
blocks 2..n -> linear + tanh filter head. Sequences are ``[B, m, H]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass(frozen=True)
class DPRNNConfig:
    num_blocks: int = 3
    hidden_units: int = 128
    chunk_len: int = 100
    chunk_hop: int = 50

    def __post_init__(self):
        if self.num_blocks < 2:
            raise ValueError("need at least two DPRNN blocks (attention sits after the first)")
        if not 0 < self.chunk_hop <= self.chunk_len:
            raise ValueError("need 0 < chunk_hop <= chunk_len")


def split_chunks(x: torch.Tensor, chunk_len: int, chunk_hop: int) -> tuple[torch.Tensor, int]:
    """``[B, m, H] -> [B, S, chunk_len, H]`` overlapping chunks; returns the left padding."""
    B, m, H = x.shape
    pad_left = chunk_len - chunk_hop
    n_chunks = max(1, math.ceil((m + pad_left) / chunk_hop))
    total = (n_chunks - 1) * chunk_hop + chunk_len
    padded = F.pad(x, (0, 0, pad_left, total - m - pad_left))
    return padded.unfold(1, chunk_len, chunk_hop).transpose(2, 3), pad_left


def merge_chunks(chunks: torch.Tensor, m: int, chunk_hop: int, pad_left: int) -> torch.Tensor:
    """Average overlapping chunks back to ``[B, m, H]``."""
    B, S, L, H = chunks.shape
    total = (S - 1) * chunk_hop + L
    cols = chunks.permute(0, 3, 2, 1).reshape(B, H * L, S)
    summed = F.fold(cols, (1, total), (1, L), stride=(1, chunk_hop)).reshape(B, H, total)
    ones = chunks.new_ones(1, L, S)
    count = F.fold(ones, (1, total), (1, L), stride=(1, chunk_hop)).reshape(1, 1, total)
    out = summed / count
    return out[:, :, pad_left:pad_left + m].transpose(1, 2)


class _PathRNN(nn.Module):
    def __init__(self, width: int, hidden: int):
        super().__init__()
        self.rnn = nn.LSTM(width, hidden, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden, width)
        self.norm = nn.LayerNorm(width)

    def forward(self, x):  # x: [batch, time, width]
        y, _ = self.rnn(x)
        return x + self.norm(self.proj(y))


class DPRNNBlock(nn.Module):
    """Intra-chunk then inter-chunk BLSTM, each with projection, layer norm and residual."""

    def __init__(self, width: int = 64, hidden: int = 128, chunk_len: int = 100, chunk_hop: int = 50):
        super().__init__()
        self.chunk_len = chunk_len
        self.chunk_hop = chunk_hop
        self.intra = _PathRNN(width, hidden)
        self.inter = _PathRNN(width, hidden)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        B, m, H = x.shape
        chunks, pad_left = split_chunks(x, self.chunk_len, self.chunk_hop)
        S, L = chunks.shape[1], chunks.shape[2]
        y = self.intra(chunks.reshape(B * S, L, H)).reshape(B, S, L, H)
        y = y.transpose(1, 2).reshape(B * L, S, H)
        y = self.inter(y).reshape(B, L, S, H).transpose(1, 2)
        return merge_chunks(y, m, self.chunk_hop, pad_left)


class TAC(nn.Module):
    """Transform-average-concatenate across ears with shared weights.

    ``t_k = PReLU(W_t h_k)``; ``a = PReLU(W_a mean_k t_k)``;
    ``g_k = h_k + LayerNorm(PReLU(W_c [t_k, a]))``.
    """

    def __init__(self, width: int = 64, expansion: int = 3):
        super().__init__()
        inner = width * expansion
        self.transform = nn.Sequential(nn.Linear(width, inner), nn.PReLU())
        self.average = nn.Sequential(nn.Linear(inner, inner), nn.PReLU())
        self.concat = nn.Sequential(nn.Linear(2 * inner, width), nn.PReLU())
        self.norm = nn.LayerNorm(width)

    def forward(self, *channels: torch.Tensor) -> list[torch.Tensor]:
        if any(c.shape != channels[0].shape for c in channels):
            raise ValueError("TAC inputs must share one shape")
        t = [self.transform(c) for c in channels]
        a = self.average(torch.stack(t).mean(dim=0))
        return [c + self.norm(self.concat(torch.cat([tk, a], dim=-1))) for c, tk in zip(channels, t)]


class SelectiveAttention(nn.Module):
    """Multi-head attention with DPRNN output as query, speaker embedding as key, TAC output as value.

    The embedding is tiled over frames and multiplied into each value frame
    before the key projection, so key position ``j`` is ``W_k (y * G_j)``.
    A plain tiled key would give every key position the same logit and a
    uniform, speaker-independent attention map. The block output is
    ``LayerNorm(G + W_o MHA)``.
    """

    def __init__(self, width: int = 64, num_heads: int = 6, head_dim: int = 32, embed_dim: int = 64):
        super().__init__()
        self.num_heads = num_heads
        self.head_dim = head_dim
        inner = num_heads * head_dim
        self.embed_in = nn.Linear(embed_dim, width) if embed_dim != width else nn.Identity()
        self.q = nn.Linear(width, inner)
        self.k = nn.Linear(width, inner)
        self.v = nn.Linear(width, inner)
        self.o = nn.Linear(inner, width)
        self.norm = nn.LayerNorm(width)

    def keys(self, embedding: torch.Tensor, value: torch.Tensor) -> torch.Tensor:
        """Key sequence before projection: the tiled embedding gated by the value frames."""
        return self.embed_in(embedding).unsqueeze(1) * value

    def attention_weights(self, query, embedding, value) -> torch.Tensor:
        """``[B, heads, m_query, m_key]``; rows sum to one."""
        B, m, _ = query.shape
        q = self.q(query).view(B, m, self.num_heads, self.head_dim).transpose(1, 2)
        k = self.k(self.keys(embedding, value)).view(B, -1, self.num_heads, self.head_dim).transpose(1, 2)
        logits = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if torch.isnan(logits).any():
            raise FloatingPointError("NaN attention logits")
        return torch.softmax(logits, dim=-1)

    def attend(self, query: torch.Tensor, embedding: torch.Tensor, value: torch.Tensor) -> torch.Tensor:
        """Multi-head attention output after the output projection, before residual and norm."""
        if query.shape[:2] != value.shape[:2]:
            raise ValueError("query and value must share batch and frame axes")
        B, m, _ = value.shape
        w = self.attention_weights(query, embedding, value)
        v = self.v(value).view(B, m, self.num_heads, self.head_dim).transpose(1, 2)
        o = (w @ v).transpose(1, 2).reshape(B, m, self.num_heads * self.head_dim)
        return self.o(o)

    def forward(self, query: torch.Tensor, embedding: torch.Tensor, value: torch.Tensor) -> torch.Tensor:
        return self.norm(value + self.attend(query, embedding, value))


class Separator(nn.Module):
    def __init__(self, width: int, num_taps: int, dprnn: DPRNNConfig, num_heads: int,
                 head_dim: int, embed_dim: int):
        super().__init__()
        self.blocks = nn.ModuleList(
            DPRNNBlock(width, dprnn.hidden_units, dprnn.chunk_len, dprnn.chunk_hop)
            for _ in range(dprnn.num_blocks)
        )
        self.attention = SelectiveAttention(width, num_heads, head_dim, embed_dim)
        self.head = nn.Linear(width, num_taps)

    def rest(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks[1:]:
            x = block(x)
        return torch.tanh(self.head(x))


class Extractor(nn.Module):
    """Separator inputs and speaker embedding to per-frame beamforming filters ``[B, m, taps]``.

    With ``num_ears=1`` (monaural) there is one separator, no TAC, and the
    attention value is the query.
    """

    def __init__(self, num_ears: int = 2, width: int = 64, num_taps: int = 513,
                 dprnn: DPRNNConfig | None = None, num_heads: int = 6, head_dim: int = 32,
                 embed_dim: int = 64):
        super().__init__()
        if num_ears not in (1, 2):
            raise ValueError("num_ears must be 1 or 2")
        dprnn = dprnn or DPRNNConfig()
        self.num_ears = num_ears
        self.separators = nn.ModuleList(
            Separator(width, num_taps, dprnn, num_heads, head_dim, embed_dim) for _ in range(num_ears)
        )
        self.tac = TAC(width) if num_ears == 2 else None

    def forward(self, inputs: list[torch.Tensor], embedding: torch.Tensor) -> list[torch.Tensor]:
        if len(inputs) != self.num_ears:
            raise ValueError(f"expected {self.num_ears} separator input(s), got {len(inputs)}")
        h = [sep.blocks[0](x) for sep, x in zip(self.separators, inputs)]
        g = self.tac(*h) if self.tac is not None else h
        o = [sep.attention(hk, embedding, gk) for sep, hk, gk in zip(self.separators, h, g)]
        return [sep.rest(ok) for sep, ok in zip(self.separators, o)]
