"""Mono 16 kHz audio clips and WAV I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

SAMPLE_RATE = 16000


class AudioFormatError(ValueError):
    """Raised for audio that cannot be used as a 16 kHz mono clip."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioFormatError(f"expected mono samples, got shape {samples.shape}")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"sample rate must be {SAMPLE_RATE}, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError("samples contain NaN or Inf")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)

    def __eq__(self, other):
        if not isinstance(other, AudioClip):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)


def fit_length(x: np.ndarray, length: int) -> np.ndarray:
    """Keep the head when too long, zero-pad the tail when too short."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) >= length:
        return x[:length].copy()
    return np.concatenate([x, np.zeros(length - len(x))])


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    return data.astype(np.float64)


def read_wav(path, resample: bool = False) -> tuple[np.ndarray, int]:
    """Read a mono WAV file as float64 samples.

    With ``resample=True`` any rate is converted to 16 kHz; otherwise a rate
    mismatch raises :class:`AudioFormatError`.
    """
    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        if data.shape[1] != 1:
            raise AudioFormatError(f"{path}: expected mono audio, got {data.shape[1]} channels")
        data = data[:, 0]
    x = _to_float(data)
    if rate != SAMPLE_RATE:
        if not resample:
            raise AudioFormatError(f"{path}: sample rate {rate} != {SAMPLE_RATE}")
        g = np.gcd(rate, SAMPLE_RATE)
        x = resample_poly(x, SAMPLE_RATE // g, rate // g)
        rate = SAMPLE_RATE
    return x, rate


def load_clip(path) -> AudioClip:
    x, rate = read_wav(path)
    return AudioClip(x, rate)


def write_wav(path, samples, sample_rate: int = SAMPLE_RATE, subtype: str = "float32") -> Path:
    """Write mono audio as 32-bit float (default) or 16-bit PCM."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    x = np.asarray(samples, dtype=np.float64)
    if subtype == "float32":
        data = x.astype(np.float32)
    elif subtype == "pcm16":
        data = np.clip(np.round(x * 32767.0), -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    wavfile.write(str(path), sample_rate, data)
    return path
