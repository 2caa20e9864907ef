import numpy as np
import pytest
import torch

from binaural_tse.model import ModelConfig
from binaural_tse.spatial_synth import SyntheticCorpus, generate_dataset, synth_spherical_hrir

torch.set_num_threads(1)


class ArrayCorpus:
    """In-memory corpus built from explicit arrays: {speaker: {utt_id: samples}}."""

    def __init__(self, data):
        self.data = data

    @property
    def speakers(self):
        return list(self.data)

    def utterances(self, speaker):
        return list(self.data[speaker])

    def load(self, utterance_id):
        for utts in self.data.values():
            if utterance_id in utts:
                return np.asarray(utts[utterance_id], dtype=np.float64)
        raise KeyError(utterance_id)


def square_wave(period, n, amplitude=1.0):
    return amplitude * np.where((np.arange(n) // (period // 2)) % 2 == 0, 1.0, -1.0)


@pytest.fixture(scope="session")
def corpus():
    return SyntheticCorpus(num_speakers=12, utterances_per_speaker=4, seed=0)


@pytest.fixture(scope="session")
def db():
    return synth_spherical_hrir(5)


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(feature_dim=16, sep_dim=16, embed_dim=16, dprnn_hidden=16, num_heads=2,
                       head_dim=8, chunk_len=16, chunk_hop=8)


@pytest.fixture(scope="session")
def tiny_data(tmp_path_factory, corpus, db):
    out = tmp_path_factory.mktemp("tiny_data")
    train = generate_dataset(corpus, db, out, 6, "train", seed=3, duration_s=0.25, enrollment_duration_s=0.5)
    valid = generate_dataset(corpus, db, out, 2, "valid", seed=3, duration_s=0.25, enrollment_duration_s=0.5)
    return {"dir": out, "train": train, "valid": valid}
