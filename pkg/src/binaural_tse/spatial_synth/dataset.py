"""Dataset generation: many mixtures on disk plus a manifest."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .audio import write_wav
from .corpus import SPLITS, SpeechCorpus, split_speakers
from .hrir import HRIRDatabase
from .manifest import ManifestEntry, write_manifest
from .mixture import MixtureExample, make_mixture, sample_mixture_spec, swap_target

log = logging.getLogger(__name__)


def example_seed(global_seed: int, index: int) -> int:
    """Independent per-example seed derived from (global_seed, index)."""
    return int(np.random.SeedSequence([global_seed, index]).generate_state(1, dtype=np.uint64)[0])


def generate_example(corpus: SpeechCorpus, db: HRIRDatabase, global_seed: int, index: int,
                     speakers=None, duration_s: float = 4.0,
                     enrollment_duration_s: float = 8.0) -> MixtureExample:
    seed = example_seed(global_seed, index)
    spec = sample_mixture_spec(np.random.default_rng(seed), db, rng_seed=seed,
                               duration_s=duration_s, enrollment_duration_s=enrollment_duration_s)
    return make_mixture(spec, corpus, db, speakers=speakers)


def save_example(ex: MixtureExample, out_dir, example_id: str, subtype: str = "float32") -> ManifestEntry:
    out_dir = Path(out_dir)
    audio = {
        "mix_left": ex.mix_left,
        "mix_right": ex.mix_right,
        "target": ex.target_reference,
        "target_left": ex.target_rendered_left,
        "interferer": ex.interferer_reference,
        "enrollment": ex.enrollment,
    }
    paths = {}
    for role, clip in audio.items():
        rel = Path("audio") / f"{example_id}_{role}.wav"
        write_wav(out_dir / rel, clip.samples, subtype=subtype)
        paths[role] = str(rel)
    return ManifestEntry(
        example_id=example_id,
        paths=paths,
        spec=ex.spec,
        target_speaker_id=ex.target_speaker_id,
        interferer_speaker_ids=ex.interferer_speaker_ids,
        utterance_ids=ex.utterance_ids,
        source_intervals=ex.source_intervals,
        gains=ex.gains,
    )


def generate_dataset(corpus: SpeechCorpus, db: HRIRDatabase, out_dir, count: int, split: str = "train",
                     seed: int = 0, duration_s: float = 4.0, enrollment_duration_s: float = 8.0,
                     subtype: str = "float32", paired: bool = False) -> Path:
    """Render ``count`` examples from the speakers of ``split``; return the manifest path.

    The manifest is written to ``out_dir/<split>.jsonl`` with audio under
    ``out_dir/audio``. With ``paired``, examples ``2k`` and ``2k + 1`` share
    one mixture and take each of its two speakers as target.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    speakers = split_speakers(corpus.speakers)[split]
    if len(speakers) < 2:
        raise ValueError(f"split {split!r} has {len(speakers)} speakers; need at least 2")
    out_dir = Path(out_dir)
    entries = []
    base = None
    for i in range(count):
        if not paired or i % 2 == 0:
            base = generate_example(corpus, db, seed, i // 2 if paired else i, speakers=speakers,
                                    duration_s=duration_s, enrollment_duration_s=enrollment_duration_s)
        ex = swap_target(base, corpus, db) if paired and i % 2 else base
        entries.append(save_example(ex, out_dir, f"{split}-{seed}-{i:06d}", subtype=subtype))
        if (i + 1) % 100 == 0:
            log.info("rendered %d/%d %s examples", i + 1, count, split)
    return write_manifest(entries, out_dir / f"{split}.jsonl")
