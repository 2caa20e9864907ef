"""Azimuth-indexed HRIR databases: directory loader and a spherical-head generator."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .audio import SAMPLE_RATE, AudioFormatError, read_wav, write_wav

MAX_IR_TAPS = 512
FADE_TAPS = 32
SPEED_OF_SOUND = 343.0
DEFAULT_HEAD_RADIUS = 0.0875

FILENAME_RE = re.compile(r"^azi_([+-]?\d+)([LR])\.wav$")


class HRIRCoverageError(ValueError):
    """The database does not cover every azimuth of its grid."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"missing HRIRs for {len(self.missing)} azimuths: {self.missing}")


class AzimuthLookupError(KeyError):
    pass


def azimuth_grid(resolution_deg: int) -> list[int]:
    if resolution_deg <= 0 or 180 % resolution_deg:
        raise ValueError(f"resolution {resolution_deg} must be a positive divisor of 180")
    return list(range(-90, 91, resolution_deg))


@dataclass(frozen=True)
class HRIRPair:
    azimuth_deg: int
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        if len(self.left) != len(self.right):
            raise ValueError(f"azimuth {self.azimuth_deg}: left/right lengths differ")

    @property
    def length(self) -> int:
        return len(self.left)


@dataclass(frozen=True)
class HRIRDatabase:
    """Immutable map from grid azimuth to HRIR pair."""

    resolution_deg: int
    pairs: Mapping[int, HRIRPair]
    source_tag: str = "surrey-kemar"
    sample_rate: int = field(default=SAMPLE_RATE)

    def __post_init__(self):
        grid = azimuth_grid(self.resolution_deg)
        missing = set(grid) - set(self.pairs)
        if missing:
            raise HRIRCoverageError(missing)
        extra = set(self.pairs) - set(grid)
        if extra:
            raise ValueError(f"azimuths off the {self.resolution_deg} degree grid: {sorted(extra)}")
        lengths = {p.length for p in self.pairs.values()}
        if len(lengths) != 1:
            raise ValueError(f"impulse responses have differing lengths {sorted(lengths)}")
        for p in self.pairs.values():
            p.left.setflags(write=False)
            p.right.setflags(write=False)
        object.__setattr__(self, "pairs", MappingProxyType(dict(sorted(self.pairs.items()))))

    @property
    def azimuths(self) -> list[int]:
        return list(self.pairs)

    @property
    def ir_length(self) -> int:
        return next(iter(self.pairs.values())).length

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, azimuth_deg) -> HRIRPair:
        try:
            if not float(azimuth_deg).is_integer():
                raise KeyError(azimuth_deg)
            return self.pairs[int(azimuth_deg)]
        except KeyError:
            raise AzimuthLookupError(
                f"azimuth {azimuth_deg} not on the {self.resolution_deg} degree grid"
            ) from None


def _limit_length(ir: np.ndarray) -> np.ndarray:
    if len(ir) <= MAX_IR_TAPS:
        return ir
    ir = ir[:MAX_IR_TAPS].copy()
    ir[-FADE_TAPS:] *= np.linspace(1.0, 0.0, FADE_TAPS)
    return ir


def _scan_directory(root: Path) -> dict[int, dict[str, Path]]:
    found: dict[int, dict[str, Path]] = {}
    for p in root.iterdir():
        m = FILENAME_RE.match(p.name)
        if m:
            found.setdefault(int(m.group(1)), {})[m.group(2)] = p
    return found


def _read_mapping(mapping_file: Path, root: Path) -> dict[int, dict[str, Path]]:
    raw = json.loads(Path(mapping_file).read_text())
    out = {}
    for az, ears in raw.items():
        out[int(az)] = {ear: (root / path) for ear, path in ears.items()}
    return out


def load_hrir_db(root_path, expected_resolution_deg: int = 5, mapping_file=None,
                 source_tag: str = "surrey-kemar") -> HRIRDatabase:
    """Load a directory of per-ear HRIR WAV files.

    Files follow ``azi_{deg}{L|R}.wav`` (``azi_-35L.wav``, ``azi_40R.wav``).
    Other layouts can be described by a JSON mapping file of the form
    ``{"-90": {"L": "a.wav", "R": "b.wav"}, ...}`` with paths relative to
    ``root_path``. Responses at other rates are resampled to 16 kHz, longer
    ones are cut to 512 taps with a linear fade-out, and all pairs are
    zero-padded to a common length. Azimuths off the requested grid are
    ignored.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise FileNotFoundError(f"HRIR directory {root} does not exist")
    files = _read_mapping(mapping_file, root) if mapping_file else _scan_directory(root)
    grid = azimuth_grid(expected_resolution_deg)
    missing = [az for az in grid if set(files.get(az, {})) != {"L", "R"}]
    if missing:
        raise HRIRCoverageError(missing)

    raw = {}
    for az in grid:
        ears = []
        for ear in "LR":
            try:
                x, _ = read_wav(files[az][ear], resample=True)
            except AudioFormatError:
                raise
            except (OSError, ValueError) as exc:  # unreadable or corrupt WAV
                raise AudioFormatError(f"cannot read {files[az][ear]}: {exc}") from exc
            ears.append(_limit_length(x))
        raw[az] = ears
    length = max(max(len(l), len(r)) for l, r in raw.values())
    pairs = {
        az: HRIRPair(az, np.pad(l, (0, length - len(l))), np.pad(r, (0, length - len(r))))
        for az, (l, r) in raw.items()
    }
    return HRIRDatabase(expected_resolution_deg, pairs, source_tag=source_tag)


def save_hrir_db(db: HRIRDatabase, root_path) -> Path:
    """Write ``db`` using the ``azi_{deg}{L|R}.wav`` convention."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    for az, pair in db.pairs.items():
        write_wav(root / f"azi_{az}L.wav", pair.left)
        write_wav(root / f"azi_{az}R.wav", pair.right)
    return root


def woodworth_itd(azimuth_deg: float, head_radius_m: float = DEFAULT_HEAD_RADIUS,
                  speed_of_sound: float = SPEED_OF_SOUND) -> float:
    """Interaural time difference in seconds, ``r/c * (theta + sin theta)``."""
    theta = math.radians(abs(azimuth_deg))
    return head_radius_m / speed_of_sound * (theta + math.sin(theta))


def synth_spherical_hrir(resolution_deg: int = 5, head_radius_m: float = DEFAULT_HEAD_RADIUS,
                         ir_length: int = 32, onset: int = 2, max_ild_db: float = 6.0) -> HRIRDatabase:
    """Pure delay and level difference HRIRs from a rigid spherical head.

    Positive azimuths are on the right. The near ear receives a unit impulse at
    ``onset``; the far ear is delayed by the rounded Woodworth ITD and
    attenuated by ``max_ild_db * sin|theta|``.
    """
    grid = azimuth_grid(resolution_deg)
    max_delay = round(woodworth_itd(90, head_radius_m) * SAMPLE_RATE)
    if ir_length <= onset + max_delay:
        raise ValueError(
            f"ir_length {ir_length} cannot hold onset {onset} + max interaural delay {max_delay}"
        )
    pairs = {}
    for az in grid:
        delay = round(woodworth_itd(az, head_radius_m) * SAMPLE_RATE)
        far_gain = 10.0 ** (-max_ild_db * abs(math.sin(math.radians(az))) / 20.0)
        near = np.zeros(ir_length)
        far = np.zeros(ir_length)
        near[onset] = 1.0
        far[onset + delay] = far_gain
        if az > 0:
            left, right = far, near
        elif az < 0:
            left, right = near, far
        else:
            left, right = near, near.copy()
        pairs[az] = HRIRPair(az, left, right)
    return HRIRDatabase(resolution_deg, pairs, source_tag="synthetic-spherical")
