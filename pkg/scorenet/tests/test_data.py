import json

import pytest
import torch

from scorenet.data import (
    DatasetError,
    ImageCache,
    ScoreTupleDataset,
    collate_tuples,
    load_records,
    split_records,
)

from dataset_helpers import scene_names


class TestLoadRecords:
    def test_counts_and_fields(self, tiny_dataset):
        records = load_records(tiny_dataset)
        assert len(records) == 48  # 2 scenes x 2 walks x 4 prefixes x 3 candidates
        for rec in records:
            n = len(rec.visited_images)
            assert rec.visited_extrinsics.shape == (n, 12)
            assert rec.candidate_extrinsics.shape == (12,)
            assert rec.label_n.shape == (4,) and rec.label_n1.shape == (4,)
            assert (rec.label_n >= 0).all() and (rec.label_n <= 1).all()

    def test_scene_filter(self, tiny_dataset):
        names = scene_names(tiny_dataset)
        only = load_records(tiny_dataset, [names[0]])
        assert {r.scene for r in only} == {names[0]}
        assert len(only) == 24

    def test_unknown_scene_rejected(self, tiny_dataset):
        with pytest.raises(DatasetError, match="nope"):
            load_records(tiny_dataset, ["nope"])

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="manifest"):
            load_records(tmp_path)

    def test_missing_image_listed(self, tiny_dataset):
        records = load_records(tiny_dataset)
        cache = ImageCache()
        bad = records[0].visited_images[0].with_name("gone.png")
        with pytest.raises(DatasetError, match="gone.png"):
            cache.get(bad)


class TestDatasetAndCollate:
    def test_item_shapes(self, tiny_dataset):
        ds = ScoreTupleDataset(load_records(tiny_dataset))
        item = ds[0]
        n = item["visited_poses"].shape[0]
        assert item["images"].shape == (n, 3, 64, 64)
        assert item["images"].max() <= 1.0

    def test_collate_padding_and_mask(self, tiny_dataset):
        records = load_records(tiny_dataset)
        by_len = sorted(records, key=lambda r: len(r.visited_images))
        ds = ScoreTupleDataset([by_len[0], by_len[-1]])
        batch = collate_tuples([ds[0], ds[1]])
        n_max = batch["images"].shape[1]
        assert batch["mask"].shape == (2, n_max)
        counts = batch["mask"].sum(dim=1).tolist()
        assert counts == [len(by_len[0].visited_images), len(by_len[-1].visited_images)]
        pad = ~batch["mask"][0]
        assert torch.all(batch["images"][0][pad] == 0)

    def test_channel_augmentation_preserves_pixels(self, tiny_dataset):
        records = load_records(tiny_dataset)
        torch.manual_seed(0)
        plain = ScoreTupleDataset(records)[0]["images"]
        torch.manual_seed(0)
        aug = ScoreTupleDataset(records, augment_channels=True)[0]["images"]
        assert sorted(plain.sum(dim=(0, 2, 3)).tolist()) == pytest.approx(
            sorted(aug.sum(dim=(0, 2, 3)).tolist()))

    def test_split_deterministic_and_disjoint(self, tiny_dataset):
        records = load_records(tiny_dataset)
        a_train, a_val = split_records(records, 0.25, seed=3)
        b_train, b_val = split_records(records, 0.25, seed=3)
        assert [r.tuple_id for r in a_val] == [r.tuple_id for r in b_val]
        assert len(a_val) == round(0.25 * len(records))
        ids = {r.tuple_id + r.scene for r in a_train} & {r.tuple_id + r.scene for r in a_val}
        assert not ids


class TestNoCandidateImages:
    def test_candidate_images_absent_from_disk_and_records(self, tiny_dataset):
        records = load_records(tiny_dataset)
        manifest = json.loads((tiny_dataset / "manifest.json").read_text())
        visited_everywhere = set()
        for entry in manifest["scenes"]:
            scene_manifest = json.loads(
                (tiny_dataset / entry["path"] / "manifest.json").read_text())
            for walk in scene_manifest["walks"]:
                visited_everywhere |= {(entry["name"], k) for k in walk}

        never_visited = 0
        for rec in records:
            doc = json.loads((tiny_dataset / "scenes" / rec.scene /
                              "tuples" / f"{rec.tuple_id}.json").read_text())
            cand = doc["candidate_pose_index"]
            if (rec.scene, cand) not in visited_everywhere:
                never_visited += 1
                assert not (tiny_dataset / "scenes" / rec.scene / "images" /
                            f"{cand:04d}.png").exists()
        assert never_visited > 0, "fixture should contain unvisited candidates"
