"""Two-speaker binaural mixture rendering."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio import SAMPLE_RATE, AudioClip, fit_length
from .corpus import SpeechCorpus
from .hrir import HRIRDatabase

TARGET_RMS = 0.05
PEAK_LIMIT = 0.99
SILENCE_RMS = 1e-6
_MIN_POWER = 1e-12


class DataError(RuntimeError):
    """The corpus cannot supply the utterances a mixture needs."""


@dataclass(frozen=True)
class MixtureSpec:
    azimuths: tuple[int, ...]
    overlap_ratio: float
    relative_snr_db: float
    rng_seed: int
    num_sources: int = 2
    duration_s: float = 4.0
    enrollment_duration_s: float = 8.0

    def __post_init__(self):
        object.__setattr__(self, "azimuths", tuple(int(a) for a in self.azimuths))
        if self.num_sources != 2:
            raise ValueError("only two-source mixtures are supported")
        if len(self.azimuths) != self.num_sources:
            raise ValueError(f"need {self.num_sources} azimuths, got {len(self.azimuths)}")
        if not 0.0 <= self.overlap_ratio <= 1.0:
            raise ValueError(f"overlap_ratio {self.overlap_ratio} outside [0, 1]")
        if self.duration_s <= 0 or self.enrollment_duration_s <= 0:
            raise ValueError("durations must be positive")

    @property
    def num_samples(self) -> int:
        return int(round(self.duration_s * SAMPLE_RATE))

    @property
    def enrollment_samples(self) -> int:
        return int(round(self.enrollment_duration_s * SAMPLE_RATE))

    def to_dict(self) -> dict:
        return {
            "azimuths": list(self.azimuths),
            "overlap_ratio": self.overlap_ratio,
            "relative_snr_db": self.relative_snr_db,
            "rng_seed": self.rng_seed,
            "num_sources": self.num_sources,
            "duration_s": self.duration_s,
            "enrollment_duration_s": self.enrollment_duration_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixtureSpec":
        return cls(**{**d, "azimuths": tuple(d["azimuths"])})


@dataclass(frozen=True, eq=False)
class MixtureExample:
    """One rendered item. Source index 0 is the target, 1 the interferer."""

    mix_left: AudioClip
    mix_right: AudioClip
    target_reference: AudioClip
    target_rendered_left: AudioClip
    interferer_reference: AudioClip
    enrollment: AudioClip
    spec: MixtureSpec
    target_speaker_id: str
    interferer_speaker_ids: tuple[str, ...]
    utterance_ids: dict = field(default_factory=dict)
    source_intervals: tuple[tuple[int, int], ...] = ()
    gains: tuple[float, ...] = ()

    @property
    def realized_overlap(self) -> float:
        (s0, e0), (s1, e1) = self.source_intervals
        inter = max(0, min(e0, e1) - max(s0, s1))
        shorter = min(e0 - s0, e1 - s1)
        return inter / shorter if shorter else 0.0


def sample_mixture_spec(rng: np.random.Generator, db: HRIRDatabase, rng_seed: int,
                        duration_s: float = 4.0, enrollment_duration_s: float = 8.0) -> MixtureSpec:
    """Draw overlap ~ U(0, 1), relative SNR ~ U(0, 5) dB and two distinct grid azimuths."""
    azimuths = rng.choice(db.azimuths, size=2, replace=False)
    return MixtureSpec(
        azimuths=tuple(int(a) for a in azimuths),
        overlap_ratio=float(rng.uniform(0.0, 1.0)),
        relative_snr_db=float(rng.uniform(0.0, 5.0)),
        rng_seed=rng_seed,
        duration_s=duration_s,
        enrollment_duration_s=enrollment_duration_s,
    )


def spatialize(clip: AudioClip, azimuth_deg, db: HRIRDatabase) -> tuple[AudioClip, AudioClip]:
    """Convolve with the left/right HRIRs of ``azimuth_deg``; keep the first T samples."""
    pair = db[azimuth_deg]
    n = len(clip.samples)
    left = np.convolve(clip.samples, pair.left)[:n]
    right = np.convolve(clip.samples, pair.right)[:n]
    return AudioClip(left, clip.sample_rate), AudioClip(right, clip.sample_rate)


def _trim(x: np.ndarray) -> np.ndarray:
    """Drop leading and trailing samples below 1e-3 of the peak."""
    loud = np.flatnonzero(np.abs(x) > 1e-3 * np.max(np.abs(x), initial=0.0))
    return x[loud[0]:loud[-1] + 1] if loud.size else x[:0]


def _pick_nonsilent(rng, corpus, candidates: list[str], length: int, what: str):
    # The third return value is the raw utterance with its silent edges trimmed.
    order = list(rng.permutation(len(candidates)))
    for idx in order:
        utt = candidates[idx]
        raw = np.asarray(corpus.load(utt), dtype=np.float64)
        x = fit_length(raw, length)
        if np.sqrt(np.mean(x ** 2)) > SILENCE_RMS:
            return utt, x, _trim(raw)
    raise DataError(f"no non-silent utterance available for {what}")


def _place(rng, lengths: list[int], total: int, ratio: float) -> tuple[list[int], list[int]]:
    """Choose activity lengths and start offsets for two sources.

    The shorter activity overlaps the longer one by ``ratio`` of its own
    length. If the union cannot fit in ``total`` samples the activities are
    shortened (tails dropped).
    """
    short = 1 if lengths[1] <= lengths[0] else 0
    long_ = 1 - short
    s = lengths[short]
    if lengths[long_] + s - ratio * s > total:
        s = min(s, int(np.floor(total / (2.0 - ratio))))
    overlap = int(round(ratio * s))
    l = min(lengths[long_], total - s + overlap)
    span = l + s - overlap
    offset = int(rng.integers(0, total - span + 1))
    if overlap >= s:
        long_start = offset
        short_start = offset + int(rng.integers(0, l - s + 1))
    elif rng.random() < 0.5:
        short_start, long_start = offset, offset + s - overlap
    else:
        long_start, short_start = offset, offset + l - overlap
    starts, acts = [0, 0], [0, 0]
    starts[short], acts[short] = short_start, s
    starts[long_], acts[long_] = long_start, l
    return starts, acts


def _power(x: np.ndarray) -> float:
    return float(np.mean(x ** 2)) if len(x) else 0.0


def make_mixture(spec: MixtureSpec, corpus: SpeechCorpus, db: HRIRDatabase,
                 speakers=None) -> MixtureExample:
    """Render one two-speaker binaural mixture, deterministic in ``spec.rng_seed``.

    ``speakers`` restricts the speaker pool (for split-disjoint datasets); by
    default the whole corpus is used.
    """
    for az in spec.azimuths:
        db[az]
    rng = np.random.default_rng(spec.rng_seed)
    pool = list(corpus.speakers if speakers is None else speakers)
    targets = [s for s in pool if len(corpus.utterances(s)) >= 2]
    if len(pool) < 2 or not targets:
        raise DataError("need two speakers, one of them with at least two utterances")
    target_spk = targets[int(rng.integers(len(targets)))]
    others = [s for s in pool if s != target_spk]
    interferer_spk = others[int(rng.integers(len(others)))]

    T = spec.num_samples
    target_utt, _, target_raw = _pick_nonsilent(rng, corpus, corpus.utterances(target_spk), T, "target")
    interf_utt, _, interf_raw = _pick_nonsilent(rng, corpus, corpus.utterances(interferer_spk), T, "interferer")
    enroll_pool = [u for u in corpus.utterances(target_spk) if u != target_utt]
    if not enroll_pool:
        raise DataError(f"speaker {target_spk} has no utterance left for enrollment")
    enroll_utt, enroll, _ = _pick_nonsilent(rng, corpus, enroll_pool, spec.enrollment_samples, "enrollment")

    raws = [target_raw, interf_raw]
    starts, acts = _place(rng, [min(len(r), T) for r in raws], T, spec.overlap_ratio)
    placed = []
    for raw, start, act in zip(raws, starts, acts):
        x = np.zeros(T)
        x[start:start + act] = raw[:act]
        placed.append(x)

    lo, hi = max(starts), min(s + a for s, a in zip(starts, acts))
    p_t, p_i = _power(placed[0][lo:hi]), _power(placed[1][lo:hi])
    if hi <= lo or p_t < _MIN_POWER or p_i < _MIN_POWER:
        p_t = _power(placed[0][starts[0]:starts[0] + acts[0]])
        p_i = _power(placed[1][starts[1]:starts[1] + acts[1]])
    if p_t < _MIN_POWER or p_i < _MIN_POWER:
        raise DataError("placed source has no energy")
    g_t = TARGET_RMS / np.sqrt(_power(placed[0][starts[0]:starts[0] + acts[0]]))
    g_i = g_t * np.sqrt(p_t / (p_i * 10.0 ** (spec.relative_snr_db / 10.0)))
    gains = np.array([g_t, g_i])

    rendered = [spatialize(AudioClip(x), az, db) for x, az in zip(placed, spec.azimuths)]
    left = sum(g * r[0].samples for g, r in zip(gains, rendered))
    right = sum(g * r[1].samples for g, r in zip(gains, rendered))
    peak = max(np.max(np.abs(left)), np.max(np.abs(right)))
    if peak > PEAK_LIMIT:
        scale = PEAK_LIMIT / peak
        gains = gains * scale
        left = sum(g * r[0].samples for g, r in zip(gains, rendered))
        right = sum(g * r[1].samples for g, r in zip(gains, rendered))

    enroll_rms = np.sqrt(np.mean(enroll ** 2))
    return MixtureExample(
        mix_left=AudioClip(left),
        mix_right=AudioClip(right),
        target_reference=AudioClip(gains[0] * placed[0]),
        target_rendered_left=AudioClip(gains[0] * rendered[0][0].samples),
        interferer_reference=AudioClip(gains[1] * placed[1]),
        enrollment=AudioClip(enroll * (TARGET_RMS / enroll_rms)),
        spec=spec,
        target_speaker_id=target_spk,
        interferer_speaker_ids=(interferer_spk,),
        utterance_ids={"target": target_utt, "interferers": [interf_utt], "enrollment": enroll_utt},
        source_intervals=tuple((s, s + a) for s, a in zip(starts, acts)),
        gains=tuple(float(g) for g in gains),
    )


def swap_target(example: MixtureExample, corpus, db: HRIRDatabase) -> MixtureExample:
    """The same mixture with the interferer as target and a fresh enrollment of that speaker.

    Pairs of swapped examples make the enrollment the only cue for which
    source to extract. The swapped spec lists azimuths target-first and
    negates the relative SNR.
    """
    spec = example.spec
    (interferer_spk,) = example.interferer_speaker_ids
    (interf_utt,) = example.utterance_ids["interferers"]
    pool = [u for u in corpus.utterances(interferer_spk) if u != interf_utt]
    if not pool:
        raise DataError(f"speaker {interferer_spk} has no utterance left for enrollment")
    rng = np.random.default_rng([spec.rng_seed, 1])
    enroll_utt, enroll, _ = _pick_nonsilent(rng, corpus, pool, spec.enrollment_samples, "enrollment")
    swapped = MixtureSpec(**{**spec.to_dict(), "azimuths": tuple(reversed(spec.azimuths)),
                             "relative_snr_db": -spec.relative_snr_db})
    new_target = example.interferer_reference
    rendered_left, _ = spatialize(new_target, swapped.azimuths[0], db)
    return MixtureExample(
        mix_left=example.mix_left,
        mix_right=example.mix_right,
        target_reference=new_target,
        target_rendered_left=rendered_left,
        interferer_reference=example.target_reference,
        enrollment=AudioClip(enroll * (TARGET_RMS / np.sqrt(np.mean(enroll ** 2)))),
        spec=swapped,
        target_speaker_id=interferer_spk,
        interferer_speaker_ids=(example.target_speaker_id,),
        utterance_ids={"target": interf_utt, "interferers": [example.utterance_ids["target"]],
                       "enrollment": enroll_utt},
        source_intervals=tuple(reversed(example.source_intervals)),
        gains=tuple(reversed(example.gains)),
    )
