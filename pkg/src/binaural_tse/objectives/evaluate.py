"""Manifest-level evaluation: extracted output and unprocessed-mixture rows."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..spatial_synth.audio import SAMPLE_RATE, read_wav
from ..spatial_synth.manifest import read_manifest
from .report import MetricReport, METRIC_FIELDS, get_metric

log = logging.getLogger(__name__)

ORACLE = "oracle"
Extractor = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
_REFERENCE_ROLE = {"dry": "target", "rendered_left": "target_left"}


def _resolve_extractor(checkpoint):
    """Return ``(extract_fn or ORACLE, reference_mode_from_checkpoint)``."""
    if checkpoint == ORACLE:
        return ORACLE, None
    if callable(checkpoint):
        return checkpoint, None
    from ..trainer import Checkpoint, extract

    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else Checkpoint.load(checkpoint)
    model = ckpt.build_model()
    monaural = model.config.variant == "monaural"
    channel = model.config.monaural_channel

    def run(left, right, enrollment):
        if monaural:
            return extract(None, left if channel == "left" else right, None, enrollment, model=model)
        return extract(None, left, right, enrollment, model=model)

    return run, ckpt.config.reference


def evaluate(checkpoint, manifest, metrics: Sequence[str] = ("si_sdr", "sdr"),
             reference: str | None = None, include_mixture: bool = True) -> MetricReport:
    """Score every manifest example.

    ``checkpoint`` is a checkpoint path/object, a callable
    ``(left, right, enrollment) -> estimate``, or ``"oracle"`` to score the
    clean reference against itself. ``reference`` defaults to the mode the
    checkpoint was trained with, else ``"dry"``. Unavailable external metrics
    (PESQ, STOI without their packages) are listed in the summary and left
    out of the rows.
    """
    manifest = Path(manifest)
    extractor, ckpt_ref = _resolve_extractor(checkpoint)
    reference = reference or ckpt_ref or "dry"
    if reference not in _REFERENCE_ROLE:
        raise ValueError(f"reference must be one of {sorted(_REFERENCE_ROLE)}")
    role = _REFERENCE_ROLE[reference]

    scorers, report = {}, MetricReport()
    for name in metrics:
        fn = get_metric(name)
        if fn is None:
            report.unavailable.append(name)
        else:
            scorers[name] = fn

    def score(est, ref):
        return {METRIC_FIELDS[n]: fn(est, ref, SAMPLE_RATE) for n, fn in scorers.items()}

    for entry in read_manifest(manifest, check_paths=False):
        try:
            load = lambda r: read_wav(entry.resolve(r, manifest.parent))[0]
            if role not in entry.paths:
                raise KeyError(f"no {role!r} audio in manifest entry")
            ref = load(role)
            left, right = load("mix_left"), load("mix_right")
            if extractor == ORACLE:
                est = ref
            else:
                est = extractor(left, right, load("enrollment"))
            extracted = score(est, ref)
            mixture = score(left, ref) if include_mixture else None
        except Exception as exc:  # recorded per example; the aggregate covers successes
            log.warning("example %s failed: %s", entry.example_id, exc)
            report.fail(entry.example_id, f"{type(exc).__name__}: {exc}")
            continue
        report.add(entry.example_id, "extracted", **extracted)
        if mixture is not None:
            report.add(entry.example_id, "mixture_left", **mixture)
    return report
