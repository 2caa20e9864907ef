"""Joint training of speaker encoder and extractor on the SI-SDR loss; checkpoints; inference."""

from __future__ import annotations

import json
import logging
import math
import pickle
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch
import yaml

from .model import ModelConfig, TSEModel
from .objectives.metrics import si_sdr, si_sdr_loss
from .spatial_synth.audio import read_wav
from .spatial_synth.manifest import read_manifest

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
REFERENCE_MODES = ("dry", "rendered_left")
_REFERENCE_ROLE = {"dry": "target", "rendered_left": "target_left"}


class TrainingDiverged(RuntimeError):
    pass


class VariantMismatchError(ValueError):
    """Inputs do not match the checkpoint's model variant."""


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train_manifest: str = ""
    valid_manifest: str | None = None
    out_dir: str = "runs/default"
    reference: str = "dry"
    batch_size: int = 4
    max_epochs: int = 100
    max_steps: int | None = None
    seed: int = 0
    optimizer: str = "adam"
    lr: float = 1e-3
    clip_norm: float = 5.0
    plateau_factor: float = 0.5
    plateau_patience: int = 3
    early_stop_patience: int = 10
    checkpoint_every: int | None = None
    log_every: int = 10

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.reference not in REFERENCE_MODES:
            raise ValueError(f"reference must be one of {REFERENCE_MODES}, got {self.reference!r}")
        if self.optimizer not in ("adam", "adamw"):
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        for name in ("batch_size", "max_epochs", "lr", "clip_norm", "plateau_patience", "early_stop_patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_yaml(cls, path) -> "TrainConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        return cls.from_dict(data)

    def to_yaml(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
        return path


class ManifestDataset:
    """Loads every example of a manifest into memory as float32 tensors."""

    def __init__(self, manifest_path, reference: str = "dry"):
        self.manifest_path = Path(manifest_path)
        self.entries = read_manifest(self.manifest_path)
        base = self.manifest_path.parent
        role = _REFERENCE_ROLE[reference]
        self.items = []
        for e in self.entries:
            if role not in e.paths:
                raise ValueError(f"{e.example_id}: manifest has no {role!r} audio for reference={reference!r}")
            load = lambda r: torch.from_numpy(read_wav(e.resolve(r, base))[0]).float()
            item = {
                "mixture": torch.stack([load("mix_left"), load("mix_right")]),
                "enrollment": load("enrollment"),
                "reference": load(role),
            }
            if "interferer" in e.paths:
                item["interferer"] = load("interferer")
            self.items.append(item)

    def __len__(self):
        return len(self.items)

    def batch(self, indices) -> dict:
        items = [self.items[i] for i in indices]
        return {k: torch.stack([it[k] for it in items]) for k in ("mixture", "enrollment", "reference")}


@dataclass
class Checkpoint:
    """Everything needed to rebuild the model and resume training.

    Keys of ``state``: ``format_version``, ``config`` (TrainConfig dict),
    ``model`` (state dict, keys prefixed ``frontend.``, ``speaker_encoder.``,
    ``extractor.``), ``optimizer``, ``scheduler``, ``epoch``,
    ``batch_in_epoch``, ``step``, ``best_valid_si_sdr``, ``loss_history``,
    ``valid_history``, ``stale_epochs``, ``torch_rng``.
    """

    state: dict

    @property
    def config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.state["config"])

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig.from_dict(self.state["config"]["model"])

    def build_model(self) -> TSEModel:
        model = TSEModel(self.model_config)
        model.load_state_dict(self.state["model"])
        model.eval()
        return model

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        torch.save(self.state, tmp)
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            state = torch.load(Path(path), map_location="cpu", weights_only=False)
        except (pickle.UnpicklingError, RuntimeError, EOFError) as exc:
            raise ValueError(f"{path}: unreadable checkpoint ({exc})") from exc
        if not isinstance(state, dict) or state.get("format_version") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a format-{CHECKPOINT_FORMAT} checkpoint")
        return cls(state)


def epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    g = torch.Generator().manual_seed(seed * 100003 + epoch)
    return torch.randperm(n, generator=g).tolist()


def _make_optimizer(config: TrainConfig, params):
    cls = torch.optim.Adam if config.optimizer == "adam" else torch.optim.AdamW
    return cls(params, lr=config.lr)


@torch.no_grad()
def validate(model: TSEModel, data: ManifestDataset, batch_size: int) -> float:
    was_training = model.training
    model.eval()
    scores = []
    for i in range(0, len(data), batch_size):
        b = data.batch(range(i, min(i + batch_size, len(data))))
        scores.append(si_sdr(model(b["mixture"], b["enrollment"]), b["reference"]))
    model.train(was_training)
    return float(torch.cat(scores).mean()) if scores else float("nan")


class Trainer:
    """Stateful training loop; :func:`train` is the functional entry point."""

    def __init__(self, config: TrainConfig, resume: Checkpoint | None = None,
                 train_data: ManifestDataset | None = None, valid_data: ManifestDataset | None = None):
        self.config = config
        torch.manual_seed(config.seed)
        self.model = TSEModel(config.model)
        self.optimizer = _make_optimizer(config, self.model.parameters())
        self.scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
            self.optimizer, mode="max", factor=config.plateau_factor, patience=config.plateau_patience
        )
        self.train_data = train_data or ManifestDataset(config.train_manifest, config.reference)
        if valid_data is None and config.valid_manifest:
            valid_data = ManifestDataset(config.valid_manifest, config.reference)
        self.valid_data = valid_data
        if len(self.train_data) == 0:
            raise ValueError("training manifest is empty")
        self.epoch = 0
        self.batch_in_epoch = 0
        self.step = 0
        self.best = -math.inf
        self.stale_epochs = 0
        self.loss_history: list[float] = []
        self.valid_history: list[float] = []
        self.last_grad_norm = float("nan")
        if resume is not None:
            self._restore(resume)

    @property
    def out_dir(self) -> Path:
        return Path(self.config.out_dir)

    def _restore(self, ckpt: Checkpoint):
        s = ckpt.state
        if s["config"]["model"] != self.config.model.to_dict():
            raise ValueError("resume checkpoint was trained with a different model config")
        self.model.load_state_dict(s["model"])
        self.optimizer.load_state_dict(s["optimizer"])
        self.scheduler.load_state_dict(s["scheduler"])
        self.epoch = s["epoch"]
        self.batch_in_epoch = s["batch_in_epoch"]
        self.step = s["step"]
        self.best = s["best_valid_si_sdr"]
        self.stale_epochs = s["stale_epochs"]
        self.loss_history = list(s["loss_history"])
        self.valid_history = list(s["valid_history"])
        torch.set_rng_state(s["torch_rng"])

    def checkpoint(self) -> Checkpoint:
        return Checkpoint({
            "format_version": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "model": {k: v.detach().clone() for k, v in self.model.state_dict().items()},
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict(),
            "epoch": self.epoch,
            "batch_in_epoch": self.batch_in_epoch,
            "step": self.step,
            "best_valid_si_sdr": self.best,
            "stale_epochs": self.stale_epochs,
            "loss_history": list(self.loss_history),
            "valid_history": list(self.valid_history),
            "torch_rng": torch.get_rng_state(),
        })

    def _diverged(self, loss, indices):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        snap = self.out_dir / "divergence.json"
        snap.write_text(json.dumps({
            "step": self.step, "epoch": self.epoch, "loss": repr(loss),
            "batch_examples": [self.train_data.entries[i].example_id for i in indices],
            "recent_losses": self.loss_history[-20:],
        }, indent=2))
        raise TrainingDiverged(f"loss became {loss} at step {self.step}; diagnostics in {snap}")

    def train_step(self, indices) -> float:
        self.model.train()
        b = self.train_data.batch(indices)
        try:
            est = self.model(b["mixture"], b["enrollment"])
        except FloatingPointError:
            self._diverged(float("nan"), indices)
        loss = si_sdr_loss(est, b["reference"])
        if not torch.isfinite(loss):
            self._diverged(float(loss), indices)
        self.optimizer.zero_grad(set_to_none=True)
        loss.backward()
        self.last_grad_norm = float(torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.config.clip_norm))
        if not math.isfinite(self.last_grad_norm):
            self._diverged(self.last_grad_norm, indices)
        self.optimizer.step()
        value = float(loss.detach())
        self.loss_history.append(value)
        self.step += 1
        return value

    def _batches(self, epoch: int) -> list[list[int]]:
        order = epoch_order(len(self.train_data), self.config.seed, epoch)
        bs = self.config.batch_size
        return [order[i:i + bs] for i in range(0, len(order), bs)]

    def _save_last(self):
        if self.config.out_dir:
            self.checkpoint().save(self.out_dir / "last.pt")

    def run(self) -> Checkpoint:
        cfg = self.config
        while self.epoch < cfg.max_epochs:
            batches = self._batches(self.epoch)
            while self.batch_in_epoch < len(batches):
                loss = self.train_step(batches[self.batch_in_epoch])
                self.batch_in_epoch += 1
                if cfg.log_every and self.step % cfg.log_every == 0:
                    log.info("epoch %d step %d loss %.3f grad %.3f", self.epoch, self.step, loss, self.last_grad_norm)
                if cfg.checkpoint_every and self.step % cfg.checkpoint_every == 0:
                    self._save_last()
                if cfg.max_steps is not None and self.step >= cfg.max_steps:
                    self._save_last()
                    return self.checkpoint()
            stop = self._end_epoch()
            self.epoch += 1
            self.batch_in_epoch = 0
            self._save_last()
            if stop:
                log.info("early stop after %d stagnant epochs", self.stale_epochs)
                break
        return self.checkpoint()

    def _end_epoch(self) -> bool:
        n = len(self._batches(self.epoch))
        if self.valid_data is not None and len(self.valid_data):
            score = validate(self.model, self.valid_data, self.config.batch_size)
        else:
            score = -float(np.mean(self.loss_history[-n:]))
        self.valid_history.append(score)
        self.scheduler.step(score)
        log.info("epoch %d validation si-sdr %.3f dB", self.epoch, score)
        if score > self.best:
            self.best = score
            self.stale_epochs = 0
            if self.config.out_dir:
                best = self.checkpoint()
                best.state.update(epoch=self.epoch + 1, batch_in_epoch=0)
                best.save(self.out_dir / "best.pt")
        else:
            self.stale_epochs += 1
        return self.stale_epochs >= self.config.early_stop_patience


def train(config: TrainConfig, resume=None) -> Checkpoint:
    """Train from scratch, or continue from ``resume`` (a Checkpoint or a path)."""
    if resume is not None and not isinstance(resume, Checkpoint):
        resume = Checkpoint.load(resume)
    if config.out_dir:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    return Trainer(config, resume=resume).run()


def _as_wave(x) -> torch.Tensor:
    t = torch.as_tensor(np.asarray(x) if not isinstance(x, torch.Tensor) else x, dtype=torch.float32)
    if t.dim() != 1:
        raise ValueError(f"expected a 1-D waveform, got shape {tuple(t.shape)}")
    return t


@torch.no_grad()
def extract(checkpoint, mixture_left, mixture_right=None, enrollment=None, model: TSEModel | None = None) -> np.ndarray:
    """Extract the enrolled speaker from a mixture; returns a waveform of the mixture's length.

    Binaural variants need both channels. The monaural variant takes only
    ``mixture_left`` (the channel it was trained on) and rejects a second one.
    """
    if enrollment is None:
        raise ValueError("enrollment is required")
    if model is None:
        ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint.load(checkpoint)
        model = ckpt.build_model()
    model.eval()
    variant = model.config.variant
    left = _as_wave(mixture_left)
    if variant == "monaural":
        if mixture_right is not None:
            raise VariantMismatchError("monaural checkpoint takes a single mixture channel")
        mixture = left[None, None]
    else:
        if mixture_right is None:
            raise VariantMismatchError(f"{variant} checkpoint needs both mixture channels")
        right = _as_wave(mixture_right)
        if right.shape != left.shape:
            raise ValueError("left and right mixture channels differ in length")
        mixture = torch.stack([left, right])[None]
    enroll = _as_wave(enrollment)[None]
    return model(mixture, enroll)[0].double().numpy()
