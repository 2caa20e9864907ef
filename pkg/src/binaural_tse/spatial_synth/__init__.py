"""Binaural mixture synthesis from monaural speech and HRIRs."""

from .audio import SAMPLE_RATE, AudioClip, AudioFormatError, fit_length, load_clip, read_wav, write_wav
from .corpus import DirectoryCorpus, SpeechCorpus, SyntheticCorpus, split_speakers
from .dataset import example_seed, generate_dataset, generate_example, save_example
from .hrir import (
    AzimuthLookupError,
    HRIRCoverageError,
    HRIRDatabase,
    HRIRPair,
    azimuth_grid,
    load_hrir_db,
    save_hrir_db,
    synth_spherical_hrir,
    woodworth_itd,
)
from .manifest import ManifestEntry, ManifestError, read_manifest, write_manifest
from .mixture import (
    DataError,
    MixtureExample,
    MixtureSpec,
    make_mixture,
    sample_mixture_spec,
    spatialize,
    swap_target,
)

__all__ = [
    "SAMPLE_RATE", "AudioClip", "AudioFormatError", "fit_length", "load_clip", "read_wav", "write_wav",
    "DirectoryCorpus", "SpeechCorpus", "SyntheticCorpus", "split_speakers",
    "example_seed", "generate_dataset", "generate_example", "save_example",
    "AzimuthLookupError", "HRIRCoverageError", "HRIRDatabase", "HRIRPair", "azimuth_grid",
    "load_hrir_db", "save_hrir_db", "synth_spherical_hrir", "woodworth_itd",
    "ManifestEntry", "ManifestError", "read_manifest", "write_manifest",
    "DataError", "MixtureExample", "MixtureSpec", "make_mixture", "sample_mixture_spec", "spatialize", "swap_target",
]
