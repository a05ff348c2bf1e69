"""Dataset loading for score-prediction tuples.

Consumes the directory layout written by the planning engine's data export:
a root manifest listing scenes, and per scene a manifest whose tuples each
reference the visited images, the visited/candidate extrinsics, and the two
4-component label vectors (scores of the prefix, scores after folding the
candidate). Candidate poses deliberately have no image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

SCORE_KEYS = ("f_C", "f_Q", "f_D", "f_T")


class DatasetError(RuntimeError):
    """Missing or inconsistent dataset files; message lists the paths."""


@dataclass(frozen=True)
class TupleRecord:
    scene: str
    tuple_id: str
    visited_images: tuple[Path, ...]
    visited_extrinsics: np.ndarray   # (n, 12)
    candidate_extrinsics: np.ndarray  # (12,)
    label_n: np.ndarray              # (4,)
    label_n1: np.ndarray             # (4,)


def _labels(doc: dict, key: str) -> np.ndarray:
    return np.array([doc[key][k] for k in SCORE_KEYS], dtype=np.float32)


def load_records(dataset_root: str | Path,
                 scenes: list[str] | None = None) -> list[TupleRecord]:
    """Read every tuple of the selected scenes (all scenes by default)."""
    root = Path(dataset_root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetError(f"missing dataset manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())

    records: list[TupleRecord] = []
    for entry in manifest["scenes"]:
        if scenes is not None and entry["name"] not in scenes:
            continue
        scene_dir = root / entry["path"]
        scene_manifest = json.loads((scene_dir / "manifest.json").read_text())
        for rel in scene_manifest["tuples"]:
            doc = json.loads((scene_dir / rel).read_text())
            images = tuple(scene_dir / p for p in doc["visited_images"])
            records.append(TupleRecord(
                scene=entry["name"],
                tuple_id=doc["id"],
                visited_images=images,
                visited_extrinsics=np.array(
                    [p["extrinsics"] for p in doc["visited_poses"]],
                    dtype=np.float32),
                candidate_extrinsics=np.array(doc["candidate_pose"]["extrinsics"],
                                              dtype=np.float32),
                label_n=_labels(doc, "label_F_n"),
                label_n1=_labels(doc, "label_F_n1"),
            ))
    if scenes is not None:
        found = {r.scene for r in records}
        missing = set(scenes) - found
        if missing:
            raise DatasetError(f"scenes not present in dataset: {sorted(missing)}")
    return records


class ImageCache:
    """Loads each PNG once and keeps it as a float tensor in [0, 1]."""

    def __init__(self):
        self._cache: dict[Path, torch.Tensor] = {}

    def get(self, path: Path) -> torch.Tensor:
        tensor = self._cache.get(path)
        if tensor is None:
            if not path.is_file():
                raise DatasetError(f"missing image: {path}")
            arr = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
            tensor = torch.from_numpy(arr).permute(2, 0, 1).contiguous()
            self._cache[path] = tensor
        return tensor


class ScoreTupleDataset(torch.utils.data.Dataset):
    """Torch dataset over TupleRecords; images come from a shared cache.

    With augment_channels, every access applies one random RGB channel
    permutation to all images of the tuple. That is a global hue rotation or
    reflection: the labels barely move (texture histograms are computed on
    hue/saturation patterns, the geometric objectives ignore color), while
    the palette — a scene fingerprint that does not transfer — is scrambled.
    """

    def __init__(self, records: list[TupleRecord], cache: ImageCache | None = None,
                 augment_channels: bool = False):
        if not records:
            raise DatasetError("empty record list")
        self.records = records
        self.cache = cache or ImageCache()
        self.augment_channels = augment_channels

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, idx: int) -> dict:
        rec = self.records[idx]
        images = torch.stack([self.cache.get(p) for p in rec.visited_images])
        if self.augment_channels:
            perm = torch.randperm(3)
            images = images[:, perm]
        return {
            "images": images,                                   # (n, 3, H, W)
            "visited_poses": torch.from_numpy(rec.visited_extrinsics),
            "candidate_pose": torch.from_numpy(rec.candidate_extrinsics),
            "label_n": torch.from_numpy(rec.label_n),
            "label_n1": torch.from_numpy(rec.label_n1),
        }


def collate_tuples(batch: list[dict]) -> dict:
    """Pad variable-length visited sets; mask marks real entries."""
    counts = [item["images"].shape[0] for item in batch]
    n_max = max(counts)
    b = len(batch)
    _, c, h, w = batch[0]["images"].shape
    images = torch.zeros(b, n_max, c, h, w)
    poses = torch.zeros(b, n_max, 12)
    mask = torch.zeros(b, n_max, dtype=torch.bool)
    for i, item in enumerate(batch):
        n = counts[i]
        images[i, :n] = item["images"]
        poses[i, :n] = item["visited_poses"]
        mask[i, :n] = True
    return {
        "images": images,
        "visited_poses": poses,
        "mask": mask,
        "candidate_pose": torch.stack([item["candidate_pose"] for item in batch]),
        "label_n": torch.stack([item["label_n"] for item in batch]),
        "label_n1": torch.stack([item["label_n1"] for item in batch]),
    }


def split_records(records: list[TupleRecord], val_fraction: float,
                  seed: int) -> tuple[list[TupleRecord], list[TupleRecord]]:
    """Deterministic train/val split (val is for checkpoint selection; use
    disjoint scenes, not this, for held-out evaluation)."""
    order = np.random.default_rng(seed).permutation(len(records))
    n_val = max(1, int(round(len(records) * val_fraction)))
    val_idx = set(order[:n_val].tolist())
    train = [r for i, r in enumerate(records) if i not in val_idx]
    val = [r for i, r in enumerate(records) if i in val_idx]
    return train, val
