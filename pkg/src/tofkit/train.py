"""Deterministic training loop.

Each epoch shuffles with a seed keyed by (run seed, epoch) and draws a sparse
input mode per sample (sensor-only, sensor+visual, or an augmented variant of
either), so resuming from a checkpoint replays the exact remaining schedule.
The learning rate halves at the configured milestone epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError
from .loss import multiscale_loss
from .model import CompletionModel
from .optim import AdamW
from .rng import derive_seed, substream
from .sensorsim import FrameTriplet, augment

__all__ = ["TrainConfig", "train_model", "prepare_batch", "SPARSE_MODES"]

SPARSE_MODES = ("tof", "tofvis", "aug")


@dataclass
class TrainConfig:
    lr: float = 1.5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    epochs: int = 12
    milestones: tuple[int, ...] = (6, 9)
    lr_decay: float = 0.5
    seed: int = 0
    batch_size: int = 4
    aug_noise_sigma: float = 0.01
    aug_mask_count: int = 2
    aug_mask_size: int = 8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if list(self.milestones) != sorted(self.milestones):
            raise ValueError("milestones must be sorted")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for key in ("betas", "milestones"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** sum(1 for m in self.milestones if epoch >= m)


def _sparse_for_mode(trip: FrameTriplet, mode: str, aug_seed: int,
                     cfg: TrainConfig) -> np.ndarray:
    if mode == "tof":
        return trip.sparse_tof.data
    if mode == "tofvis":
        return trip.sparse_tof_visual.data
    base = trip.sparse_tof if aug_seed % 2 == 0 else trip.sparse_tof_visual
    return augment(base, aug_seed, cfg.aug_noise_sigma,
                   cfg.aug_mask_count, cfg.aug_mask_size).data


def prepare_batch(triplets: list[FrameTriplet], modes: list[str],
                  aug_seeds: list[int], cfg: TrainConfig, dtype=np.float32):
    """(rgb, sparse, gt) arrays of shape (N, C, H, W) for the model."""
    rgb = np.stack([t.rgb.transpose(2, 0, 1) for t in triplets]).astype(dtype) / 255.0
    sparse = np.stack([
        _sparse_for_mode(t, m, s, cfg)[None]
        for t, m, s in zip(triplets, modes, aug_seeds)
    ]).astype(dtype)
    gt = np.stack([t.gt.data[None] for t in triplets]).astype(dtype)
    return rgb, sparse, gt


def train_model(model: CompletionModel, dataset: list[FrameTriplet], cfg: TrainConfig,
                start_epoch: int = 0, optimizer: AdamW | None = None,
                on_epoch=None, log=None) -> tuple[list[dict], AdamW]:
    """Train in place; returns (per-epoch history, optimizer).

    start_epoch/optimizer support checkpoint resume: given identical seeds,
    a resumed run replays the same batches and reproduces an uninterrupted
    run exactly.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    mcfg = model.config
    opt = optimizer or AdamW(model.named_params(), lr=cfg.lr, betas=cfg.betas,
                             weight_decay=cfg.weight_decay)
    history: list[dict] = []
    n = len(dataset)
    for epoch in range(start_epoch, cfg.epochs):
        opt.lr = cfg.lr_at(epoch)
        order = substream(cfg.seed, "shuffle", epoch).permutation(n)
        mode_rng = substream(cfg.seed, "mix", epoch)
        losses = []
        for b0 in range(0, n, cfg.batch_size):
            idx = order[b0:b0 + cfg.batch_size]
            batch = [dataset[i] for i in idx]
            modes = [SPARSE_MODES[mode_rng.integers(len(SPARSE_MODES))] for _ in idx]
            aug_seeds = [derive_seed(cfg.seed, "augment", epoch, int(i)) for i in idx]
            rgb, sparse, gt = prepare_batch(batch, modes, aug_seeds, cfg, model.dtype)
            out = model.forward(rgb, sparse)
            preds = [out.get("refined", out["full"]), out["half"], out["quarter"]]
            loss = multiscale_loss(preds, gt, mcfg.loss_gammas, mcfg.loss_terms)
            val = loss.item()
            if not np.isfinite(val):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            ad.backward(loss)
            opt.step()
            losses.append(val)
        row = {"epoch": epoch, "loss": float(np.mean(losses)), "lr": opt.lr}
        history.append(row)
        if log:
            log(f"epoch {epoch:3d}  loss {row['loss']:.5f}  lr {row['lr']:.2e}")
        if on_epoch:
            on_epoch(epoch, model, opt, history)
    return history, opt
