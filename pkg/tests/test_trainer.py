import json

import numpy as np
import pytest
import torch

from binaural_tse.model import ModelConfig
from binaural_tse.trainer import (
    Checkpoint,
    ManifestDataset,
    TrainConfig,
    Trainer,
    TrainingDiverged,
    VariantMismatchError,
    epoch_order,
    extract,
    train,
)


def _config(tiny_config, tiny_data, out_dir="", **kw):
    base = dict(model=tiny_config, train_manifest=str(tiny_data["train"]), valid_manifest=str(tiny_data["valid"]),
                out_dir=str(out_dir), batch_size=2, max_epochs=1, log_every=0)
    base.update(kw)
    return TrainConfig(**base)


def test_config_yaml_roundtrip(tmp_path, tiny_config, tiny_data):
    cfg = _config(tiny_config, tiny_data, lr=3e-4, optimizer="adamw")
    path = cfg.to_yaml(tmp_path / "c.yaml")
    assert TrainConfig.from_yaml(path) == cfg


def test_config_rejects_bad_values(tiny_config, tiny_data):
    with pytest.raises(ValueError):
        _config(tiny_config, tiny_data, reference="wet")
    with pytest.raises(ValueError):
        _config(tiny_config, tiny_data, optimizer="sgd")


def test_dataset_batch(tiny_data):
    ds = ManifestDataset(tiny_data["train"])
    b = ds.batch([0, 3])
    assert b["mixture"].shape == (2, 2, 4000)
    assert b["enrollment"].shape == (2, 8000)
    assert b["reference"].shape == (2, 4000)


def test_epoch_order_is_a_seeded_permutation():
    assert sorted(epoch_order(10, 1, 0)) == list(range(10))
    assert epoch_order(10, 1, 0) == epoch_order(10, 1, 0)
    assert epoch_order(10, 1, 0) != epoch_order(10, 1, 1)


def test_train_writes_checkpoints(tmp_path, tiny_config, tiny_data):
    ckpt = train(_config(tiny_config, tiny_data, tmp_path, max_epochs=2))
    assert (tmp_path / "last.pt").exists() and (tmp_path / "best.pt").exists()
    assert ckpt.state["step"] == 6 and ckpt.state["epoch"] == 2
    assert len(ckpt.state["valid_history"]) == 2
    loaded = Checkpoint.load(tmp_path / "last.pt")
    assert set(loaded.state) >= {"format_version", "config", "model", "optimizer", "scheduler", "epoch",
                                 "batch_in_epoch", "step", "best_valid_si_sdr", "loss_history", "torch_rng"}
    prefixes = {k.split(".")[0] for k in loaded.state["model"]}
    assert prefixes == {"frontend", "speaker_encoder", "extractor"}


def test_load_rejects_foreign_file(tmp_path):
    torch.save({"hello": 1}, tmp_path / "x.pt")
    with pytest.raises(ValueError):
        Checkpoint.load(tmp_path / "x.pt")


def test_resume_rejects_other_model(tmp_path, tiny_config, tiny_data):
    ckpt = Trainer(_config(tiny_config, tiny_data)).checkpoint()
    other = ModelConfig.from_dict({**tiny_config.to_dict(), "sep_dim": 8})
    with pytest.raises(ValueError, match="different model"):
        Trainer(_config(other, tiny_data), resume=ckpt)


def test_early_stopping(tiny_config, tiny_data, monkeypatch):
    import binaural_tse.trainer as trainer_mod

    monkeypatch.setattr(trainer_mod, "validate", lambda *a: 1.0)
    tr = Trainer(_config(tiny_config, tiny_data, max_epochs=50, early_stop_patience=2))
    tr.run()
    # a flat validation score never improves after the first epoch
    assert tr.epoch == 3
    assert tr.stale_epochs == 2


def test_max_steps_stops_mid_epoch(tiny_config, tiny_data):
    tr = Trainer(_config(tiny_config, tiny_data, max_epochs=5, max_steps=4))
    ckpt = tr.run()
    assert ckpt.state["step"] == 4 and ckpt.state["epoch"] == 1 and ckpt.state["batch_in_epoch"] == 1


def test_divergence_writes_diagnostics(tmp_path, tiny_config, tiny_data):
    tr = Trainer(_config(tiny_config, tiny_data, tmp_path))
    with torch.no_grad():
        for p in tr.model.extractor.parameters():
            p.fill_(float("nan"))
    with pytest.raises(TrainingDiverged):
        tr.train_step([0, 1])
    snap = json.loads((tmp_path / "divergence.json").read_text())
    assert snap["step"] == 0 and len(snap["batch_examples"]) == 2


def test_gradient_clipping_bounds_update(tiny_config, tiny_data):
    tr = Trainer(_config(tiny_config, tiny_data, clip_norm=1e-3))
    tr.train_step([0, 1])
    total = torch.sqrt(sum((p.grad ** 2).sum() for p in tr.model.parameters() if p.grad is not None))
    assert float(total) <= 1e-3 * (1 + 1e-4)


def test_extract_shapes_and_variant_checks(tiny_config, tiny_data):
    ckpt = Trainer(_config(tiny_config, tiny_data)).checkpoint()
    left, right, enroll = np.random.randn(1000), np.random.randn(1000), np.random.randn(2000)
    y = extract(ckpt, left, right, enroll)
    assert y.shape == (1000,) and y.dtype == np.float64
    with pytest.raises(VariantMismatchError):
        extract(ckpt, left, None, enroll)
    mono = ModelConfig.from_dict({**tiny_config.to_dict(), "variant": "monaural"})
    mckpt = Trainer(_config(mono, tiny_data)).checkpoint()
    assert extract(mckpt, left, None, enroll).shape == (1000,)
    with pytest.raises(VariantMismatchError):
        extract(mckpt, left, right, enroll)
    with pytest.raises(ValueError):
        extract(ckpt, left, right[:999], enroll)


@pytest.mark.parametrize("variant", ["bi_csim", "bi_iac", "monaural"])
def test_no_dead_parameters(tiny_config, tiny_data, variant):
    cfg = ModelConfig.from_dict({**tiny_config.to_dict(), "variant": variant})
    tr = Trainer(_config(cfg, tiny_data))
    touched = set()
    for batch in tr._batches(0):
        tr.train_step(batch)
        touched |= {n for n, p in tr.model.named_parameters() if p.grad is not None and p.grad.abs().sum() > 0}
    dead = [n for n, _ in tr.model.named_parameters() if n not in touched]
    assert dead == []


def test_checkpoint_roundtrip_is_bitwise(tmp_path, tiny_config, tiny_data):
    tr = Trainer(_config(tiny_config, tiny_data))
    tr.train_step([0, 1])
    path = tr.checkpoint().save(tmp_path / "c.pt")
    batch = tr.train_data.batch([2, 3])
    tr.model.eval()
    with torch.no_grad():
        before = tr.model(batch["mixture"], batch["enrollment"])
        after = Checkpoint.load(path).build_model()(batch["mixture"], batch["enrollment"])
    assert torch.equal(before, after)


def test_extract_is_deterministic(tiny_config, tiny_data):
    ckpt = Trainer(_config(tiny_config, tiny_data)).checkpoint()
    rng = np.random.default_rng(0)
    left, right, enroll = rng.standard_normal(1000), rng.standard_normal(1000), rng.standard_normal(2000)
    np.testing.assert_array_equal(extract(ckpt, left, right, enroll), extract(ckpt, left, right, enroll))
