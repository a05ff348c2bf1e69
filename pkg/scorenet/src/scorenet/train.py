"""Training loop: summed Huber loss on both heads, Adam with AMSGrad."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader

from .data import (
    ImageCache,
    ScoreTupleDataset,
    TupleRecord,
    collate_tuples,
    load_records,
    split_records,
)
from .model import ScorePredictor


@dataclass(frozen=True)
class TrainSpec:
    """Optimizer and schedule settings.

    The reference configuration trained 12 epochs at batch size 8; the toy
    defaults run 30 epochs at batch size 16. The scheduler halves the rate
    once, 60% of the way through.
    """

    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 3e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    amsgrad: bool = True
    scheduler_gamma: float = 0.5
    scheduler_step_fraction: float = 0.6
    val_fraction: float = 0.2
    augment_channels: bool = True
    seed: int = 0

    def scheduler_step_epochs(self) -> int:
        return max(1, round(self.scheduler_step_fraction * self.epochs))


def summed_huber(pred_n, pred_n1, label_n, label_n1) -> torch.Tensor:
    return (F.huber_loss(pred_n, label_n, reduction="mean")
            + F.huber_loss(pred_n1, label_n1, reduction="mean"))


def run_epoch(model, loader, optimizer=None, device="cpu") -> float:
    training = optimizer is not None
    model.train(training)
    total, count = 0.0, 0
    with torch.set_grad_enabled(training):
        for batch in loader:
            pred_n, pred_n1 = model(batch["images"].to(device),
                                    batch["visited_poses"].to(device),
                                    batch["mask"].to(device),
                                    batch["candidate_pose"].to(device))
            loss = summed_huber(pred_n, pred_n1,
                                batch["label_n"].to(device),
                                batch["label_n1"].to(device))
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            b = batch["label_n"].shape[0]
            total += float(loss.detach()) * b
            count += b
    return total / max(count, 1)


def mean_predictor_loss(train_records: list[TupleRecord],
                        eval_records: list[TupleRecord]) -> float:
    """Summed Huber loss of the constant predictor at the train-label means."""
    mean_n = torch.tensor(np.mean([r.label_n for r in train_records], axis=0))
    mean_n1 = torch.tensor(np.mean([r.label_n1 for r in train_records], axis=0))
    lab_n = torch.tensor(np.stack([r.label_n for r in eval_records]))
    lab_n1 = torch.tensor(np.stack([r.label_n1 for r in eval_records]))
    return float(summed_huber(mean_n.expand_as(lab_n), mean_n1.expand_as(lab_n1),
                              lab_n, lab_n1))


def train(dataset_root: str | Path, out_dir: str | Path,
          scenes: list[str] | None = None, spec: TrainSpec = TrainSpec(),
          model: ScorePredictor | None = None,
          records: list[TupleRecord] | None = None) -> dict:
    """Train on the given scenes; save the best-validation checkpoint.

    Returns a summary dict (also written to out_dir/training_manifest.json).
    Deterministic per seed up to torch kernel nondeterminism.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(spec.seed)

    if records is None:
        records = load_records(dataset_root, scenes)
    if len(records) < 2:
        raise ValueError("need at least 2 tuples to split train/val")
    train_records, val_records = split_records(records, spec.val_fraction, spec.seed)

    cache = ImageCache()
    loader = DataLoader(ScoreTupleDataset(train_records, cache,
                                          augment_channels=spec.augment_channels),
                        batch_size=spec.batch_size, shuffle=True,
                        collate_fn=collate_tuples,
                        generator=torch.Generator().manual_seed(spec.seed))
    val_loader = DataLoader(ScoreTupleDataset(val_records, cache),
                            batch_size=spec.batch_size, shuffle=False,
                            collate_fn=collate_tuples)

    if model is None:
        model = ScorePredictor()
    optimizer = torch.optim.Adam(model.parameters(), lr=spec.learning_rate,
                                 betas=(spec.beta1, spec.beta2), eps=spec.eps,
                                 amsgrad=spec.amsgrad)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=spec.scheduler_step_epochs(),
        gamma=spec.scheduler_gamma)

    baseline = mean_predictor_loss(train_records, val_records)
    best_val = float("inf")
    checkpoint_path = out_dir / "checkpoint.pt"
    metrics_path = out_dir / "metrics.csv"
    history = []
    start = time.monotonic()

    with open(metrics_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for epoch in range(1, spec.epochs + 1):
            train_loss = run_epoch(model, loader, optimizer)
            val_loss = run_epoch(model, val_loader)
            lr = optimizer.param_groups[0]["lr"]
            writer.writerow([epoch, f"{train_loss:.6f}", f"{val_loss:.6f}", f"{lr:.2e}"])
            fh.flush()
            history.append({"epoch": epoch, "train_loss": train_loss,
                            "val_loss": val_loss})
            if val_loss < best_val:
                best_val = val_loss
                torch.save({"model": model.state_dict(),
                            "spec": asdict(spec),
                            "epoch": epoch,
                            "val_loss": val_loss}, checkpoint_path)
            scheduler.step()

    summary = {
        "tuples": len(records),
        "train_tuples": len(train_records),
        "val_tuples": len(val_records),
        "best_val_loss": best_val,
        "mean_predictor_val_loss": baseline,
        "epochs": spec.epochs,
        "seconds": time.monotonic() - start,
        "spec": asdict(spec),
        "checkpoint": str(checkpoint_path),
        "metrics": str(metrics_path),
    }
    (out_dir / "training_manifest.json").write_text(json.dumps(summary, indent=2))
    return summary


def load_checkpoint(path: str | Path) -> ScorePredictor:
    state = torch.load(path, map_location="cpu", weights_only=True)
    model = ScorePredictor()
    model.load_state_dict(state["model"])
    model.eval()
    return model
