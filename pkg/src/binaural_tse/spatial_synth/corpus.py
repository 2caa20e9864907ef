"""Speech corpora: a directory reader and a synthetic speech-like generator.

A corpus exposes ``speakers``, ``utterances(speaker)`` and ``load(utterance_id)``.
Utterance ids are globally unique strings.
"""

from __future__ import annotations

import functools
import hashlib
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .audio import SAMPLE_RATE, read_wav

SPLITS = ("train", "valid", "test")
# Matches the 20000 / 5000 / 3000 sample proportions.
SPLIT_FRACTIONS = (20000 / 28000, 5000 / 28000, 3000 / 28000)


class SpeechCorpus(Protocol):
    @property
    def speakers(self) -> list[str]: ...

    def utterances(self, speaker: str) -> list[str]: ...

    def load(self, utterance_id: str) -> np.ndarray: ...


class DirectoryCorpus:
    """``root/<speaker>/**/*.wav`` layout, as in a LibriSpeech tree converted to WAV."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"corpus directory {self.root} does not exist")
        self._index: dict[str, list[str]] = {}
        for spk_dir in sorted(p for p in self.root.iterdir() if p.is_dir()):
            utts = sorted(str(p.relative_to(self.root)) for p in spk_dir.rglob("*.wav"))
            if utts:
                self._index[spk_dir.name] = utts

    @property
    def speakers(self) -> list[str]:
        return list(self._index)

    def utterances(self, speaker: str) -> list[str]:
        return list(self._index[speaker])

    def load(self, utterance_id: str) -> np.ndarray:
        x, _ = read_wav(self.root / utterance_id, resample=True)
        return x


# Rough vowel formant targets (Hz) for an adult male vocal tract.
_VOWELS = np.array([
    [730, 1090, 2440],
    [270, 2290, 3010],
    [530, 1840, 2480],
    [570, 840, 2410],
    [300, 870, 2240],
    [660, 1720, 2410],
])


def _stable_int(*parts) -> int:
    h = hashlib.sha1("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


class SyntheticCorpus:
    """Deterministic speech-like utterances for desk-scale runs and tests.

    Each speaker has its own pitch range, vocal-tract scaling and
    speaking rate. Utterances are syllable sequences of glottal-pulse-like
    harmonic tones shaped by three formants, with short pauses in between.
    """

    def __init__(self, num_speakers: int = 12, utterances_per_speaker: int = 4,
                 min_duration_s: float = 3.0, max_duration_s: float = 9.0, seed: int = 0):
        if num_speakers < 2:
            raise ValueError("need at least two speakers")
        self.num_speakers = num_speakers
        self.utterances_per_speaker = utterances_per_speaker
        self.min_duration_s = min_duration_s
        self.max_duration_s = max_duration_s
        self.seed = seed
        self._speakers = [f"syn{seed}-spk{i:03d}" for i in range(num_speakers)]
        rng = np.random.default_rng(_stable_int("corpus", seed))
        f0s = np.linspace(85.0, 260.0, num_speakers)
        rng.shuffle(f0s)
        self._voice = {
            spk: {
                "f0": float(f0s[i]),
                "tract": float(rng.uniform(0.85, 1.25)) * (1.0 + 0.25 * (f0s[i] - 85.0) / 175.0),
                "rate": float(rng.uniform(0.8, 1.25)),
                "tilt": float(rng.uniform(0.6, 1.4)),
                "jitter": float(rng.uniform(0.02, 0.08)),
            }
            for i, spk in enumerate(self._speakers)
        }

    @property
    def speakers(self) -> list[str]:
        return list(self._speakers)

    def utterances(self, speaker: str) -> list[str]:
        if speaker not in self._voice:
            raise KeyError(speaker)
        return [f"{speaker}/utt{j:02d}" for j in range(self.utterances_per_speaker)]

    @functools.lru_cache(maxsize=256)
    def load(self, utterance_id: str) -> np.ndarray:
        speaker, _ = utterance_id.split("/")
        voice = self._voice[speaker]
        rng = np.random.default_rng(_stable_int("utt", self.seed, utterance_id))
        total = int(rng.uniform(self.min_duration_s, self.max_duration_s) * SAMPLE_RATE)
        out = np.zeros(total)
        pos = int(rng.uniform(0.05, 0.3) * SAMPLE_RATE)
        while pos < total:
            dur = int(rng.uniform(0.12, 0.32) / voice["rate"] * SAMPLE_RATE)
            seg = _syllable(rng, voice, min(dur, total - pos))
            out[pos:pos + len(seg)] += seg
            pos += len(seg) + int(rng.exponential(0.08) / voice["rate"] * SAMPLE_RATE) + 160
        peak = np.max(np.abs(out))
        return out / peak * 0.5 if peak > 0 else out


def _syllable(rng: np.random.Generator, voice: dict, n: int) -> np.ndarray:
    t = np.arange(n) / SAMPLE_RATE
    f0_start = voice["f0"] * rng.uniform(0.85, 1.15)
    f0_end = f0_start * rng.uniform(0.8, 1.2)
    vibrato = voice["jitter"] * np.sin(2 * np.pi * rng.uniform(4.0, 7.0) * t + rng.uniform(0, 2 * np.pi))
    f0 = np.linspace(f0_start, f0_end, n) * (1.0 + vibrato)
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    formants = _VOWELS[rng.integers(len(_VOWELS))] * voice["tract"]
    bandwidths = np.array([80.0, 110.0, 160.0])
    sig = np.zeros(n)
    max_h = int(5000 // f0.max())
    for h in range(1, max_h + 1):
        fh = h * f0
        amp = np.zeros(n)
        for f, bw in zip(formants, bandwidths):
            amp += 1.0 / (1.0 + ((fh - f) / bw) ** 2)
        amp *= h ** (-voice["tilt"])
        sig += amp * np.sin(h * phase)
    # attack/decay envelope
    env = np.sin(np.pi * np.clip(t / t[-1] if n > 1 else t, 0, 1)) ** 0.6
    if rng.random() < 0.4:
        burst = min(n, int(0.03 * SAMPLE_RATE))
        noise = rng.standard_normal(burst) * 0.15 * np.hanning(burst)
        sig[:burst] += noise
    return sig * env


def split_speakers(speakers: Sequence[str], fractions=SPLIT_FRACTIONS) -> dict[str, list[str]]:
    """Partition speakers into disjoint train/valid/test sets.

    Assignment depends only on the speaker ids (hash order), so the split is
    stable across generation seeds and invocations. Each split gets at least
    two speakers whenever there are six or more in total.
    """
    ordered = sorted(speakers, key=lambda s: (_stable_int("split", s), s))
    n = len(ordered)
    counts = [int(round(f * n)) for f in fractions]
    if n >= 6:
        counts = [max(2, c) for c in counts]
    while sum(counts) > n:
        counts[int(np.argmax(counts))] -= 1
    counts[0] += n - sum(counts)
    out, start = {}, 0
    for name, c in zip(SPLITS, counts):
        out[name] = ordered[start:start + c]
        start += c
    return out
