"""Line-delimited JSON dataset manifests.

One object per line with the fields::

    example_id              str
    paths                   {role: path}; roles mix_left, mix_right, target,
                            target_left, interferer, enrollment. Relative
                            paths resolve against the manifest's directory.
    spec                    MixtureSpec fields (azimuths, overlap_ratio,
                            relative_snr_db, rng_seed, num_sources,
                            duration_s, enrollment_duration_s)
    target_speaker_id       str
    interferer_speaker_ids  [str]
    utterance_ids           {"target": str, "interferers": [str], "enrollment": str}
    source_intervals        [[start, end], ...] activity in samples
    gains                   [float, ...] applied source gains
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .mixture import MixtureSpec

AUDIO_ROLES = ("mix_left", "mix_right", "target", "target_left", "interferer", "enrollment")
REQUIRED_ROLES = ("mix_left", "mix_right", "target", "enrollment")


class ManifestError(ValueError):
    def __init__(self, message, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ManifestEntry:
    example_id: str
    paths: dict
    spec: MixtureSpec
    target_speaker_id: str
    interferer_speaker_ids: tuple[str, ...]
    utterance_ids: dict = field(default_factory=dict)
    source_intervals: tuple[tuple[int, int], ...] = ()
    gains: tuple[float, ...] = ()

    def resolve(self, role: str, base_dir) -> Path:
        p = Path(self.paths[role])
        return p if p.is_absolute() else Path(base_dir) / p

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "paths": dict(self.paths),
            "spec": self.spec.to_dict(),
            "target_speaker_id": self.target_speaker_id,
            "interferer_speaker_ids": list(self.interferer_speaker_ids),
            "utterance_ids": self.utterance_ids,
            "source_intervals": [list(iv) for iv in self.source_intervals],
            "gains": list(self.gains),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        missing = [r for r in REQUIRED_ROLES if r not in d["paths"]]
        if missing:
            raise KeyError(f"paths missing roles {missing}")
        return cls(
            example_id=str(d["example_id"]),
            paths=dict(d["paths"]),
            spec=MixtureSpec.from_dict(d["spec"]),
            target_speaker_id=str(d["target_speaker_id"]),
            interferer_speaker_ids=tuple(d["interferer_speaker_ids"]),
            utterance_ids=d.get("utterance_ids", {}),
            source_intervals=tuple(tuple(iv) for iv in d.get("source_intervals", ())),
            gains=tuple(d.get("gains", ())),
        )


def write_manifest(entries, path, check_paths: bool = True) -> Path:
    path = Path(path)
    base = path.parent
    if check_paths:
        for e in entries:
            for role in e.paths:
                if not e.resolve(role, base).exists():
                    raise FileNotFoundError(f"{e.example_id}: {role} file {e.paths[role]} does not exist")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        for e in entries:
            f.write(json.dumps(e.to_dict(), sort_keys=True) + "\n")
    return path


def read_manifest(path, check_paths: bool = True) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                entry = ManifestEntry.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ManifestError(f"malformed record: {exc}", line=lineno) from exc
            if check_paths:
                for role in entry.paths:
                    if not entry.resolve(role, path.parent).exists():
                        raise ManifestError(f"{role} file {entry.paths[role]} not found", line=lineno)
            entries.append(entry)
    return entries
