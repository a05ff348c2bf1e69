import json
import math

import numpy as np
import pytest

from viewplan.geometry import PoseSet, generate_sphere_poses, load_mesh_obj
from viewplan.objectives import (
    ObjectiveParams,
    ScoreState,
    fold_observation,
    score_vector,
)
from viewplan.planner import PlannerConfig, SceneEvaluator, plan_trajectory
from viewplan.scenegen import (
    SceneSpec,
    export_training_tuples,
    export_transforms,
    generate_scene,
    random_walk_trajectories,
    reference_families,
)


class TestGenerateScene:
    def test_cube_face_count(self):
        assert generate_scene(SceneSpec(kind="cube")).face_count == 12

    def test_icosphere_face_counts(self):
        assert generate_scene(SceneSpec(kind="icosphere", subdivisions=1)).face_count == 80
        assert generate_scene(SceneSpec(kind="icosphere", subdivisions=2)).face_count == 320

    def test_blocks_deterministic(self):
        a = generate_scene(SceneSpec(kind="blocks", count=5, seed=1))
        b = generate_scene(SceneSpec(kind="blocks", count=5, seed=1))
        np.testing.assert_array_equal(a.vertices, b.vertices)
        np.testing.assert_array_equal(a.face_colors, b.face_colors)
        c = generate_scene(SceneSpec(kind="blocks", count=5, seed=2))
        assert not np.array_equal(a.vertices, c.vertices)

    def test_all_kinds_normalized_with_unit_normals(self):
        for spec in reference_families().values():
            mesh = generate_scene(spec)
            lo, hi = mesh.bounds()
            assert (lo >= -1.0 - 1e-9).all() and (hi <= 1.0 + 1e-9).all()
            assert np.isclose(max(hi.max(), -lo.min()), 1.0, atol=1e-9)
            np.testing.assert_allclose((lo + hi) / 2, 0.0, atol=1e-6)
            np.testing.assert_allclose(np.linalg.norm(mesh.face_normals, axis=1),
                                       1.0, atol=1e-6)
            assert mesh.face_colors.min() >= 0.0 and mesh.face_colors.max() <= 1.0

    def test_checker_ball_two_tone(self):
        mesh = generate_scene(SceneSpec(kind="checker_ball", subdivisions=2))
        unique = {tuple(np.round(c, 6)) for c in mesh.face_colors}
        assert len(unique) == 2

    def test_dihedral_crease_angle(self):
        mesh = generate_scene(SceneSpec(kind="dihedral", angle_deg=90.0))
        normals = {tuple(np.round(n, 6)) for n in mesh.face_normals}
        assert len(normals) == 2
        a, b = (np.array(n) for n in normals)
        # crease of 90 deg: wing normals meet at 90 deg
        assert abs(float(a @ b)) < 1e-6

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            SceneSpec(kind="pyramid")
        with pytest.raises(ValueError):
            SceneSpec(kind="cube", color_mode="rainbow")
        with pytest.raises(ValueError):
            generate_scene(SceneSpec(kind="blocks", count=0))
        with pytest.raises(ValueError):
            generate_scene(SceneSpec(kind="dihedral", angle_deg=0.0))


@pytest.fixture(scope="module")
def poses():
    return generate_sphere_poses(radius=3.0, count=60, mode="random", seed=5,
                                 width=64, height=64)


class TestRandomWalks:
    def test_length_and_distinct(self, poses):
        walks = random_walk_trajectories(poses, length=30, count=3, seed=1)
        assert len(walks) == 3
        for walk in walks:
            assert len(walk) == 30
            assert len(set(walk)) == 30

    def test_length_one(self, poses):
        walks = random_walk_trajectories(poses, length=1, count=2, seed=2)
        assert all(len(w) == 1 for w in walks)

    def test_deterministic(self, poses):
        a = random_walk_trajectories(poses, length=10, count=2, seed=3)
        b = random_walk_trajectories(poses, length=10, count=2, seed=3)
        assert a == b

    def test_steps_within_neighbor_radius(self, poses):
        # each hop stays within the 8th-nearest unvisited distance at that time
        centers = poses.centers()
        unit = centers / np.linalg.norm(centers, axis=1, keepdims=True)
        ang = np.degrees(np.arccos(np.clip(unit @ unit.T, -1, 1)))
        walks = random_walk_trajectories(poses, length=12, count=2, seed=4)
        for walk in walks:
            visited = {walk[0]}
            for prev, nxt in zip(walk, walk[1:]):
                open_d = sorted(ang[prev][k] for k in range(len(poses))
                                if k not in visited)
                kth = open_d[min(8, len(open_d)) - 1]
                assert ang[prev][nxt] <= kth + 1e-9
                visited.add(nxt)

    def test_length_exceeding_candidates(self, poses):
        with pytest.raises(ValueError):
            random_walk_trajectories(poses, length=61, count=1, seed=0)


class TestExportTransforms:
    def test_frames_and_roundtrip(self, cube_mesh, tmp_path):
        poses = generate_sphere_poses(radius=3.0, count=12, mode="random", seed=9,
                                      width=96, height=96)
        params = ObjectiveParams()
        config = PlannerConfig(budget=5, params=params, resolution=96,
                               texture_resolution=96)
        trajectory = plan_trajectory(cube_mesh, poses, config)
        out = export_transforms(poses, trajectory, tmp_path / "transforms.json")
        doc = json.loads(out.read_text())
        assert len(doc["frames"]) == 5
        expected_fovx = 2.0 * math.atan((96 / 2) / poses[0].focal_px)
        assert doc["camera_angle_x"] == pytest.approx(expected_fovx, abs=1e-12)
        for frame, k in zip(doc["frames"], trajectory.pose_indices()):
            m = np.array(frame["transform_matrix"])
            assert m.shape == (4, 4)
            np.testing.assert_allclose(m[:3, :], poses[k].extrinsics, atol=1e-9)
            np.testing.assert_array_equal(m[3], [0, 0, 0, 1])

    def test_pose_indices_selection(self, tmp_path):
        poses = generate_sphere_poses(radius=3.0, count=4, mode="ring", seed=0)
        out = export_transforms(poses, [0, 2], tmp_path / "t.json")
        assert len(json.loads(out.read_text())["frames"]) == 2

    def test_empty_selection_rejected(self, tmp_path):
        poses = generate_sphere_poses(radius=3.0, count=4, mode="ring", seed=0)
        with pytest.raises(ValueError):
            export_transforms(poses, [], tmp_path / "t.json")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, cube_mesh):
    out = tmp_path_factory.mktemp("dataset")
    poses = generate_sphere_poses(radius=3.0, count=12, mode="random", seed=3,
                                  width=64, height=64)
    walks = random_walk_trajectories(poses, length=3, count=1, seed=1)
    params = ObjectiveParams()
    scene_dir = export_training_tuples(
        cube_mesh, poses, walks, params, out, scene_name="cube_test",
        candidates_per_prefix=2, seed=11, resolution=64)
    return cube_mesh, poses, walks, params, scene_dir


class TestExportTrainingTuples:
    def test_tuple_count(self, dataset):
        _mesh, _poses, walks, _params, scene_dir = dataset
        manifest = json.loads((scene_dir / "manifest.json").read_text())
        assert len(manifest["tuples"]) == len(walks[0]) * 2  # 3 prefixes x 2 candidates

    def test_layout(self, dataset):
        _mesh, _poses, walks, _params, scene_dir = dataset
        assert (scene_dir / "mesh.obj").is_file()
        assert (scene_dir / "poses.json").is_file()
        assert (scene_dir / "manifest.json").is_file()
        for k in walks[0]:
            assert (scene_dir / f"images/{k:04d}.png").is_file()

    def test_tuple_contents(self, dataset):
        _mesh, poses, walks, _params, scene_dir = dataset
        manifest = json.loads((scene_dir / "manifest.json").read_text())
        for rel in manifest["tuples"]:
            doc = json.loads((scene_dir / rel).read_text())
            n = len(doc["visited_pose_indices"])
            assert doc["visited_pose_indices"] == walks[0][:n]
            assert len(doc["visited_images"]) == n
            assert doc["candidate_pose_index"] not in doc["visited_pose_indices"]
            # labels in [0,1]^4, coverage monotone under the candidate fold
            for key in ("label_F_n", "label_F_n1"):
                for v in doc[key].values():
                    assert 0.0 <= v <= 1.0
            assert doc["label_F_n1"]["f_C"] >= doc["label_F_n"]["f_C"] - 1e-12
            # candidate image is deliberately absent from the references
            assert all(f"{doc['candidate_pose_index']:04d}" not in p
                       for p in doc["visited_images"])

    def test_labels_match_recomputation(self, dataset):
        # reload everything from disk and recompute a sample of labels
        _mesh, _poses, _walks, params, scene_dir = dataset
        mesh = load_mesh_obj(scene_dir / "mesh.obj")
        poses = PoseSet.load(scene_dir / "poses.json")
        manifest = json.loads((scene_dir / "manifest.json").read_text())
        evaluator = SceneEvaluator(mesh, poses, params, manifest["resolution"],
                                   manifest["texture_resolution"])
        for rel in manifest["tuples"][:10]:
            doc = json.loads((scene_dir / rel).read_text())
            state = ScoreState.empty(mesh.face_count)
            for k in doc["visited_pose_indices"]:
                state = fold_observation(state, evaluator.stats(k), params)
            f_n = score_vector(state, params).as_dict()
            f_n1 = score_vector(
                fold_observation(state, evaluator.stats(doc["candidate_pose_index"]),
                                 params), params).as_dict()
            for key, val in doc["label_F_n"].items():
                assert abs(val - f_n[key]) < 1e-9
            for key, val in doc["label_F_n1"].items():
                assert abs(val - f_n1[key]) < 1e-9
