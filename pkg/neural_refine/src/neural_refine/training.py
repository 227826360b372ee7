"""Training loop, evaluation and checkpoint handling."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from . import data, gfbio, losses
from .model import RefineNet, infer


@dataclass
class TrainSettings:
    epochs: int = 60
    batch_size: int = 4
    lr: float = 1e-4
    lr_halve_every: int = 10
    lr_floor: float = 1e-6
    seed: int = 0
    blocks_per_level: int = 2

    def learning_rate(self, epoch: int) -> float:
        return max(self.lr * 0.5 ** (epoch // self.lr_halve_every),
                   self.lr_floor)


def save_checkpoint(path, model: RefineNet) -> None:
    torch.save({"blocks_per_level": model.blocks_per_level,
                "state": model.state_dict()}, path)


def load_checkpoint(path) -> RefineNet:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = RefineNet(payload["blocks_per_level"])
    model.load_state_dict(payload["state"])
    model.eval()
    return model


def masked_depth_rmse_m(model: RefineNet,
                        samples: list[data.RefineSample]) -> float:
    """Root mean square metric depth error over true hit pixels, pooled
    across samples. Each sample is denormalized with its own frame scale."""
    sq_sum = 0.0
    count = 0
    for s in samples:
        pred_n, _, _ = infer(model, s.coarse)
        hit = s.mask >= 0.5
        err = (gfbio.denormalize_depth(pred_n, s.frame)
               - gfbio.denormalize_depth(s.depth.astype(np.float64), s.frame))
        sq_sum += float(np.sum(err[hit] ** 2))
        count += int(hit.sum())
    if count == 0:
        return float("nan")
    return float(np.sqrt(sq_sum / count))


def train(train_samples: list[data.RefineSample],
          settings: TrainSettings,
          val_samples: list[data.RefineSample] | None = None,
          checkpoint_path=None, curve_path=None, log=None):
    """Fit the network; returns (model, history).

    History rows carry the epoch mean of each loss term plus the validation
    masked depth RMSE in meters (against train_samples when no validation
    split is given). Fixed seed makes the whole trajectory reproducible.
    """
    if not train_samples:
        raise ValueError("training set is empty")
    torch.manual_seed(settings.seed)
    model = RefineNet(settings.blocks_per_level)
    opt = torch.optim.AdamW(model.parameters(), lr=settings.lr)
    rng = np.random.default_rng(settings.seed)
    history = []
    for epoch in range(settings.epochs):
        lr = settings.learning_rate(epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        sums = {"total": 0.0, "depth": 0.0, "normal": 0.0, "mask": 0.0,
                "gradient": 0.0}
        n_batches = 0
        tic = time.perf_counter()
        for coarse, depth, normal, mask in data.batches(
                train_samples, settings.batch_size, rng):
            opt.zero_grad()
            pd_, pn, pm = model(coarse)
            loss, terms = losses.total_loss(pd_, pn, pm, depth, normal, mask)
            loss.backward()
            opt.step()
            sums["total"] += float(loss.detach())
            for k, v in terms.items():
                sums[k] += float(v.detach())
            n_batches += 1
        row = {k: v / n_batches for k, v in sums.items()}
        row["epoch"] = epoch
        row["lr"] = lr
        row["val_depth_rmse_m"] = masked_depth_rmse_m(
            model, val_samples if val_samples else train_samples)
        history.append(row)
        if log:
            log(f"epoch {epoch:3d}  lr {lr:.2e}  loss {row['total']:.6f}  "
                f"val rmse {row['val_depth_rmse_m']:.4f} m  "
                f"({time.perf_counter() - tic:.1f} s)")
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model)
    if curve_path:
        write_curve(curve_path, history)
    return model, history


_CURVE_COLUMNS = ("epoch", "lr", "total", "depth", "normal", "mask",
                  "gradient", "val_depth_rmse_m")


def write_curve(path, history) -> None:
    lines = [",".join(_CURVE_COLUMNS)]
    for row in history:
        lines.append(",".join(
            str(row["epoch"]) if c == "epoch" else f"{row[c]:.6e}"
            for c in _CURVE_COLUMNS))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
