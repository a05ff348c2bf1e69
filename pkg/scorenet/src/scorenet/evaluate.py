"""Held-out evaluation: per-objective mean absolute error for both heads."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import SCORE_KEYS, ScoreTupleDataset, TupleRecord, collate_tuples
from .model import ScorePredictor


@torch.no_grad()
def predict(model: ScorePredictor, records: list[TupleRecord],
            batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Predictions of both heads over the records, shapes (N, 4) each."""
    model.eval()
    loader = DataLoader(ScoreTupleDataset(records), batch_size=batch_size,
                        shuffle=False, collate_fn=collate_tuples)
    outs_n, outs_n1 = [], []
    for batch in loader:
        pred_n, pred_n1 = model(batch["images"], batch["visited_poses"],
                                batch["mask"], batch["candidate_pose"])
        outs_n.append(pred_n.numpy())
        outs_n1.append(pred_n1.numpy())
    return np.concatenate(outs_n), np.concatenate(outs_n1)


def evaluate(model: ScorePredictor, records: list[TupleRecord],
             out_csv: str | Path | None = None) -> dict:
    """Per-objective MAE for the current-state and candidate heads."""
    pred_n, pred_n1 = predict(model, records)
    lab_n = np.stack([r.label_n for r in records])
    lab_n1 = np.stack([r.label_n1 for r in records])
    mae_n = np.abs(pred_n - lab_n).mean(axis=0)
    mae_n1 = np.abs(pred_n1 - lab_n1).mean(axis=0)

    report = {
        "count": len(records),
        "mae_current": {k: float(v) for k, v in zip(SCORE_KEYS, mae_n)},
        "mae_candidate": {k: float(v) for k, v in zip(SCORE_KEYS, mae_n1)},
    }
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["head"] + list(SCORE_KEYS))
            writer.writerow(["current"] + [f"{v:.6f}" for v in mae_n])
            writer.writerow(["candidate"] + [f"{v:.6f}" for v in mae_n1])
    return report


def mean_predictor_mae(train_records: list[TupleRecord],
                       eval_records: list[TupleRecord]) -> dict:
    """MAE of the constant predictor at the train-label means (control)."""
    mean_n = np.mean([r.label_n for r in train_records], axis=0)
    mean_n1 = np.mean([r.label_n1 for r in train_records], axis=0)
    lab_n = np.stack([r.label_n for r in eval_records])
    lab_n1 = np.stack([r.label_n1 for r in eval_records])
    return {
        "mae_current": {k: float(v) for k, v in
                        zip(SCORE_KEYS, np.abs(lab_n - mean_n).mean(axis=0))},
        "mae_candidate": {k: float(v) for k, v in
                          zip(SCORE_KEYS, np.abs(lab_n1 - mean_n1).mean(axis=0))},
    }
