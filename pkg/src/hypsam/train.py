"""Training loop and split-level inference for DFNet."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch
from torch.utils.data import DataLoader

from .config import RunConfig
from .data import RgbtDataset, write_gray_png
from .dfnet import DFNet, build_model, save_checkpoint
from .errors import ConfigInvalid, ResourceError
from .losses import format_log_line, total_loss
from .metrics import weighted_f

log = logging.getLogger(__name__)


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def model_kwargs(cfg: RunConfig) -> dict:
    m = cfg.model
    return dict(backbone=m.backbone, channels=m.channels, kernels=m.kernels, kernel_size=m.kernel_size,
                reduction=m.reduction, resolution=cfg.data.resolution)


def build_optimizer(model: DFNet, cfg: RunConfig) -> torch.optim.SGD:
    t = cfg.train
    groups = [
        {"params": model.backbone_parameters(), "lr": t.lr_backbone, "name": "backbone"},
        {"params": model.other_parameters(), "lr": t.lr_head, "name": "head"},
    ]
    return torch.optim.SGD(groups, lr=t.lr_head, momentum=t.momentum, weight_decay=t.weight_decay)


def cosine_factor(step: int, total: int) -> float:
    return 0.5 * (1.0 + math.cos(math.pi * min(step, total) / max(total, 1)))


def build_scheduler(opt, total_steps: int, schedule: str):
    if schedule == "cosine":
        return torch.optim.lr_scheduler.LambdaLR(opt, lambda s: cosine_factor(s, total_steps))
    return torch.optim.lr_scheduler.LambdaLR(opt, lambda s: 1.0)


def _is_oom(exc: BaseException) -> bool:
    return isinstance(exc, torch.OutOfMemoryError) or "out of memory" in str(exc).lower()


def make_loader(cfg: RunConfig, split: str, train: bool) -> DataLoader:
    d = cfg.data
    ds = RgbtDataset(d.root, split, size=d.resolution, train=train, seed=cfg.train.seed, flip_p=d.flip_p,
                     max_rotate_deg=d.max_rotate_deg, crop_ratio=d.crop_ratio, boundary_radius=d.boundary_radius)
    gen = torch.Generator().manual_seed(cfg.train.seed)
    return DataLoader(ds, batch_size=cfg.train.batch, shuffle=train, drop_last=train and len(ds) >= cfg.train.batch,
                      num_workers=cfg.train.workers, generator=gen)


@dataclass
class TrainResult:
    checkpoint: Path
    history: list = field(default_factory=list)
    best: Path | None = None


def train(cfg: RunConfig, out_dir, model: DFNet | None = None) -> TrainResult:
    """Train from ``cfg`` and write checkpoints plus ``train_log.txt`` under ``out_dir``."""
    cfg.validate()
    if not cfg.data.root:
        raise ConfigInvalid("data.root is required for training")
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    seed_everything(cfg.train.seed)
    loader = make_loader(cfg, cfg.train.split, train=True)
    if model is None:
        model = DFNet(pretrained=cfg.train.pretrained and cfg.model.backbone != "tiny",
                      backbone_weights=cfg.model.backbone_weights or None, **model_kwargs(cfg))
    opt = build_optimizer(model, cfg)
    steps_per_epoch = len(loader)
    total = steps_per_epoch * cfg.train.epochs
    if cfg.train.max_steps:
        total = min(total, cfg.train.max_steps)
    sched = build_scheduler(opt, total, cfg.train.schedule)

    result = TrainResult(checkpoint=out / "checkpoints" / "last.pt")
    best_fw = -1.0
    step = 0
    with (out / "train_log.txt").open("w") as logf:
        for epoch in range(cfg.train.epochs):
            loader.dataset.set_epoch(epoch)
            model.train()
            for batch in loader:
                if step >= total:
                    break
                try:
                    preds = model(batch["rgb"], batch["thermal"])
                    losses = total_loss(preds, batch["gt"], batch["boundary"])
                    opt.zero_grad(set_to_none=True)
                    losses.total.backward()
                    opt.step()
                except (RuntimeError, torch.OutOfMemoryError) as exc:
                    if _is_oom(exc):
                        raise ResourceError(
                            f"out of memory at step {step} (batch={cfg.train.batch}, "
                            f"resolution={cfg.data.resolution}); reduce train.batch or data.resolution"
                        ) from exc
                    raise
                lr = opt.param_groups[1]["lr"]
                sched.step()
                step += 1
                record = {"step": step, **losses.items(), "lr": lr}
                result.history.append(record)
                if step % cfg.train.log_every == 0 or step == total:
                    line = format_log_line(step, losses, lr)
                    logf.write(line + "\n")
                    logf.flush()
                    log.info(line)
            extra = {"epoch": epoch, "step": step, "seed": cfg.train.seed, "config": cfg.to_ini()}
            save_checkpoint(out / "checkpoints" / f"epoch_{epoch + 1:03d}.pt", model, extra)
            save_checkpoint(result.checkpoint, model, extra)
            if cfg.train.val_split:
                fw = validate(model, cfg)
                log.info("epoch %d val F_w %.4f", epoch + 1, fw)
                if fw > best_fw:
                    best_fw = fw
                    result.best = out / "checkpoints" / "best.pt"
                    save_checkpoint(result.best, model, {**extra, "val_f_w": fw})
            if step >= total:
                break
    return result


@torch.no_grad()
def validate(model: DFNet, cfg: RunConfig) -> float:
    loader = make_loader(cfg, cfg.train.val_split, train=False)
    model.eval()
    scores = []
    for batch in loader:
        fused = model(batch["rgb"], batch["thermal"]).sal_fused[:, 0].numpy()
        for sal, gt in zip(fused, batch["gt"][:, 0].numpy()):
            scores.append(weighted_f(sal, gt > 0.5))
    model.train()
    return float(np.mean(scores)) if scores else 0.0


@torch.no_grad()
def predict_split(model: DFNet, root, split: str, out_dir, size: int, batch: int = 1) -> list:
    """Write fused maps as 8-bit PNGs at each sample's original resolution."""
    ds = RgbtDataset(root, split, size=size, train=False)
    loader = DataLoader(ds, batch_size=batch, shuffle=False)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.eval()
    written = []
    for b in loader:
        fused = model(b["rgb"], b["thermal"]).sal_fused[:, 0].numpy()
        for name, sal, hw in zip(b["name"], fused, b["hw"].tolist()):
            h, w = hw
            sal = cv2.resize(sal.astype(np.float32), (w, h), interpolation=cv2.INTER_LINEAR)
            path = out / f"{name}.png"
            write_gray_png(path, np.clip(sal, 0, 1))
            written.append(path)
    return written


__all__ = ["train", "predict_split", "build_optimizer", "build_scheduler", "cosine_factor", "TrainResult",
           "model_kwargs", "build_model"]
