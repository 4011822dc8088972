"""Training loop: PVS samples in, PVW weights out.

Binary cross-entropy over both classes, AdamW with default betas/eps; standard
defaults for batch size (128) and learning rate (1e-4).  After optimization
the normalization layers run one cumulative-statistics pass over the training
set so the exported running statistics describe the data the codec will see
(coding is batch-size-1, so batch statistics are useless at inference).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import formats
from .network import HybridEntropyNet


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-4
    steps: int = 200
    k: int = 32
    seed: int = 0
    mode: str = "hybrid"
    level_sampling: str = "uniform"  # "uniform" over symbols, or "per-level"
    pos_weight: float | None = None  # optional occupied-class weighting

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 1 or self.learning_rate <= 0 or self.k < 1:
            raise ValueError("batch size, steps, learning rate and K must be positive")
        if self.level_sampling not in ("uniform", "per-level"):
            raise ValueError(f"unknown sampling strategy {self.level_sampling!r}")


class SampleBank:
    """In-memory PVS samples as training tensors."""

    def __init__(self, samples: np.ndarray, k: int):
        if len(samples) == 0:
            raise ValueError("sample set is empty")
        self.k = k
        self.vox = torch.from_numpy(samples["vox"].astype(np.float32)).reshape(-1, 1, 4, 4, 4)
        self.pc = torch.from_numpy(samples["pc"].astype(np.float32))
        self.coord = torch.from_numpy(samples["coord"].astype(np.float32))
        self.label = torch.from_numpy(samples["label"].astype(np.float32))
        # level id recovers the coding level from the coordinate's last entry
        self.level_frac = samples["coord"][:, 3].copy()

    def __len__(self):
        return len(self.label)

    def batch_indices(self, rng: np.random.Generator, config: TrainConfig) -> np.ndarray:
        if config.level_sampling == "uniform":
            return rng.integers(0, len(self), size=config.batch_size)
        fracs = np.unique(self.level_frac)
        chosen = rng.choice(fracs, size=config.batch_size)
        out = np.empty(config.batch_size, dtype=np.int64)
        for i, frac in enumerate(chosen):
            pool = np.flatnonzero(self.level_frac == frac)
            out[i] = pool[rng.integers(0, len(pool))]
        return out


@dataclass
class TrainResult:
    net: HybridEntropyNet
    losses: list
    initial_bce: float
    final_bce: float


def bce_on(net: HybridEntropyNet, bank: SampleBank, batch: int = 1024) -> float:
    """Mean two-term BCE (nats are converted: returned in bits per symbol)."""
    net.eval()
    total = 0.0
    loss_fn = nn.BCEWithLogitsLoss(reduction="sum")
    with torch.no_grad():
        for lo in range(0, len(bank), batch):
            hi = min(lo + batch, len(bank))
            logits = net(bank.vox[lo:hi], bank.pc[lo:hi], bank.coord[lo:hi])
            total += float(loss_fn(logits, bank.label[lo:hi]))
    return total / len(bank) / float(np.log(2.0))


def train(bank: SampleBank, config: TrainConfig, log_every: int = 50) -> TrainResult:
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    net = HybridEntropyNet(mode=config.mode)
    if bank.k != config.k:
        raise ValueError(f"sample K={bank.k} does not match config K={config.k}")
    pos_weight = None
    if config.pos_weight is not None:
        pos_weight = torch.tensor([config.pos_weight])
    loss_fn = nn.BCEWithLogitsLoss(pos_weight=pos_weight)
    opt = torch.optim.AdamW(net.parameters(), lr=config.learning_rate)

    initial = bce_on(net, bank)
    losses = []
    net.train()
    for step in range(config.steps):
        idx = bank.batch_indices(rng, config)
        logits = net(bank.vox[idx], bank.pc[idx], bank.coord[idx])
        loss = loss_fn(logits, bank.label[idx])
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"non-finite loss at step {step}: lr={config.learning_rate}, "
                f"batch={config.batch_size}, last losses={losses[-3:]}"
            )
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()) / float(np.log(2.0)))
        if log_every and (step + 1) % log_every == 0:
            print(f"step {step + 1}/{config.steps}: bce {losses[-1]:.4f} bits")
    calibrate_normalization(net, bank)
    final = bce_on(net, bank)
    return TrainResult(net=net, losses=losses, initial_bce=initial, final_bce=final)


def calibrate_normalization(net: HybridEntropyNet, bank: SampleBank, batch: int = 512) -> None:
    """Recompute running statistics as plain dataset averages.

    Coding-time inference normalizes single samples with the stored running
    stats; cumulative averaging over the training set is the most faithful
    estimate and is deterministic.
    """
    for module in net.modules():
        if isinstance(module, (nn.BatchNorm1d, nn.BatchNorm3d)):
            module.reset_running_stats()
            module.momentum = None  # cumulative moving average
    net.train()
    with torch.no_grad():
        for lo in range(0, len(bank), batch):
            hi = min(lo + batch, len(bank))
            net(bank.vox[lo:hi], bank.pc[lo:hi], bank.coord[lo:hi])
    net.eval()


def export_pvw(net: HybridEntropyNet, path, k: int) -> int:
    """Write the network as a PVW file; returns the 64-bit file hash."""
    from .network import state_to_arrays

    return formats.write_pvw(path, state_to_arrays(net), k=k)
