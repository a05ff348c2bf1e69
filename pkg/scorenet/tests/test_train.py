import csv
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from scorenet.data import TupleRecord, load_records
from scorenet.evaluate import evaluate, mean_predictor_mae
from scorenet.model import ScorePredictor
from scorenet.train import TrainSpec, load_checkpoint, mean_predictor_loss, train

torch.set_num_threads(2)


def test_scheduler_step_epochs():
    assert TrainSpec(epochs=30).scheduler_step_epochs() == 18
    assert TrainSpec(epochs=1).scheduler_step_epochs() == 1


def test_overfit_small_subset(tiny_dataset, tmp_path):
    """Standard sanity oracle: a tiny subset must be memorizable."""
    records = load_records(tiny_dataset)[:32]
    spec = TrainSpec(epochs=200, batch_size=8, learning_rate=3e-3,
                     val_fraction=0.1, augment_channels=False, seed=0)
    summary = train(tiny_dataset, tmp_path, records=records, spec=spec)
    with open(summary["metrics"]) as fh:
        rows = list(csv.DictReader(fh))
    final_train = float(rows[-1]["train_loss"])
    best_train = min(float(r["train_loss"]) for r in rows)
    assert best_train < 0.01, f"failed to overfit 32 tuples: best {best_train}"
    assert final_train < 0.05


def test_training_artifacts_and_monotone_lr(tiny_dataset, tmp_path):
    spec = TrainSpec(epochs=4, batch_size=8, learning_rate=1e-3, seed=1)
    summary = train(tiny_dataset, tmp_path, spec=spec)
    assert Path(summary["checkpoint"]).is_file()
    with open(summary["metrics"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    lrs = [float(r["lr"]) for r in rows]
    assert lrs == sorted(lrs, reverse=True)
    manifest = json.loads((tmp_path / "training_manifest.json").read_text())
    assert manifest["spec"]["learning_rate"] == 1e-3
    assert manifest["best_val_loss"] <= float(rows[0]["val_loss"]) + 1e-12

    model = load_checkpoint(summary["checkpoint"])
    assert isinstance(model, ScorePredictor)


def test_checkpoint_is_best_val(tiny_dataset, tmp_path):
    spec = TrainSpec(epochs=3, batch_size=8, learning_rate=1e-3, seed=2)
    summary = train(tiny_dataset, tmp_path, spec=spec)
    with open(summary["metrics"]) as fh:
        rows = list(csv.DictReader(fh))
    # CSV rounds to six decimals
    assert summary["best_val_loss"] == pytest.approx(
        min(float(r["val_loss"]) for r in rows), abs=1e-6)


def test_shuffled_label_control(tiny_dataset, tmp_path):
    """Training on shuffled labels converges to the mean predictor's error."""
    records = load_records(tiny_dataset)
    rng = np.random.default_rng(7)
    perm = rng.permutation(len(records))
    shuffled = [TupleRecord(r.scene, r.tuple_id, r.visited_images,
                            r.visited_extrinsics, r.candidate_extrinsics,
                            records[p].label_n, records[p].label_n1)
                for r, p in zip(records, perm)]
    spec = TrainSpec(epochs=60, batch_size=16, learning_rate=3e-3,
                     val_fraction=0.2, augment_channels=False, seed=0)
    summary = train(tiny_dataset, tmp_path, records=shuffled, spec=spec)
    model = load_checkpoint(summary["checkpoint"])

    report = evaluate(model, shuffled)
    baseline = mean_predictor_mae(shuffled, shuffled)
    got = sum(report["mae_current"].values()) + sum(report["mae_candidate"].values())
    expected = (sum(baseline["mae_current"].values())
                + sum(baseline["mae_candidate"].values()))
    assert got == pytest.approx(expected, rel=0.2)


def test_mean_predictor_loss_positive(tiny_dataset):
    records = load_records(tiny_dataset)
    assert mean_predictor_loss(records, records) > 0.0
