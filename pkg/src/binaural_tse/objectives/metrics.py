"""SI-SDR / SDR in dB, and the SI-SDR training loss."""

from __future__ import annotations

import numpy as np
import torch

EPS = 1e-8
FLOOR_DB = -80.0
CEILING_DB = 140.0


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _check(estimate: torch.Tensor, reference: torch.Tensor):
    if estimate.shape != reference.shape:
        raise ValueError(f"shape mismatch: estimate {tuple(estimate.shape)} vs reference {tuple(reference.shape)}")
    if (reference == 0).all(dim=-1).any():
        raise ValueError("reference signal is all zeros")


def _ratio_db(num: torch.Tensor, den: torch.Tensor) -> torch.Tensor:
    db = 20.0 * torch.log10(num / den.clamp_min(EPS))
    # log10(0) = -inf for an all-zero projection; clamp maps it to the floor.
    return db.clamp(FLOOR_DB, CEILING_DB)


def si_sdr(estimate, reference, zero_mean: bool = True) -> torch.Tensor:
    """Scale-invariant SDR in dB over the last axis.

    The target component is the projection of the estimate on the reference;
    the error is what remains. Results are clamped to [-80, 140] dB.
    """
    est, ref = _as_tensor(estimate), _as_tensor(reference)
    _check(est, ref)
    if zero_mean:
        est = est - est.mean(dim=-1, keepdim=True)
        ref = ref - ref.mean(dim=-1, keepdim=True)
        if (ref == 0).all(dim=-1).any():
            raise ValueError("reference is constant; zero after mean removal")
    scale = (est * ref).sum(-1, keepdim=True) / (ref * ref).sum(-1, keepdim=True)
    target = scale * ref
    return _ratio_db(target.norm(dim=-1), (target - est).norm(dim=-1))


def sdr(estimate, reference) -> torch.Tensor:
    """Plain energy-ratio SDR ``20 log10(|x| / |x - x_hat|)`` in dB, same clamping as :func:`si_sdr`."""
    est, ref = _as_tensor(estimate), _as_tensor(reference)
    _check(est, ref)
    return _ratio_db(ref.norm(dim=-1), (ref - est).norm(dim=-1))


def si_sdr_loss(estimate: torch.Tensor, reference: torch.Tensor) -> torch.Tensor:
    """Negative SI-SDR averaged over the batch."""
    return -si_sdr(estimate, reference).mean()
