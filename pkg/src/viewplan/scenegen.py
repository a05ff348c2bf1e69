"""Procedural desk-scale scenes, random-walk trajectories, and dataset export."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import (
    PoseSet,
    TriangleMesh,
    make_mesh,
    normalize_scale,
    save_mesh_obj,
)

SCENE_KINDS = ("cube", "icosphere", "dihedral", "blocks", "checker_ball")
COLOR_MODES = ("flat", "checker", "per_face_random")

_FLAT_GRAY = (0.5, 0.5, 0.5)
_CHECKER_A = (0.85, 0.2, 0.15)
_CHECKER_B = (0.1, 0.35, 0.85)


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one procedural scene.

    kind-specific knobs: `subdivisions` (icosphere, checker_ball),
    `angle_deg` (dihedral crease), `count` (blocks), `pitch_deg`
    (checker_ball color pitch).
    """

    kind: str = "cube"
    color_mode: str = "flat"
    seed: int = 0
    subdivisions: int = 2
    angle_deg: float = 90.0
    count: int = 5
    pitch_deg: float = 30.0

    def __post_init__(self):
        if self.kind not in SCENE_KINDS:
            raise ValueError(f"unknown scene kind {self.kind!r}")
        if self.color_mode not in COLOR_MODES:
            raise ValueError(f"unknown color mode {self.color_mode!r}")

    def name(self) -> str:
        parts = [self.kind]
        if self.kind in ("icosphere", "checker_ball"):
            parts.append(str(self.subdivisions))
        if self.kind == "dihedral":
            parts.append(str(int(self.angle_deg)))
        if self.kind == "blocks":
            parts.append(str(self.count))
        parts.append(self.color_mode)
        parts.append(f"s{self.seed}")
        return "_".join(parts)


def _cube_mesh() -> tuple[np.ndarray, np.ndarray]:
    v = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)],
                 dtype=np.float64)
    # two triangles per side, outward winding
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return v, np.asarray(faces, dtype=np.int64)


def _icosahedron() -> tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v, f


def _icosphere_mesh(subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    v, f = _icosahedron()
    verts = [tuple(p) for p in v]
    index = {p: i for i, p in enumerate(verts)}

    def midpoint(i, j):
        m = (np.array(verts[i]) + np.array(verts[j])) / 2.0
        m /= np.linalg.norm(m)
        key = tuple(np.round(m, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    faces = [tuple(t) for t in f]
    for _ in range(subdivisions):
        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


def _dihedral_mesh(angle_deg: float) -> tuple[np.ndarray, np.ndarray]:
    """Two rectangular wings joined along the y axis at the given crease angle."""
    half = math.radians(angle_deg) / 2.0
    dx, dz = math.sin(half), math.cos(half)
    v = np.array([
        [0, -1, 0], [0, 1, 0],                    # crease
        [-dx, -1, dz], [-dx, 1, dz],              # left wing tip
        [dx, -1, dz], [dx, 1, dz],                # right wing tip
    ], dtype=np.float64)
    f = np.array([
        [0, 1, 3], [0, 3, 2],
        [0, 5, 1], [0, 4, 5],
    ], dtype=np.int64)
    return v, f


def _blocks_mesh(count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    cube_v, cube_f = _cube_mesh()
    verts, faces = [], []
    for _ in range(count):
        center = rng.uniform(-0.7, 0.7, size=3)
        size = rng.uniform(0.15, 0.45, size=3)
        base = sum(len(b) for b in verts)
        verts.append(cube_v * size + center)
        faces.append(cube_f + base)
    return np.concatenate(verts), np.concatenate(faces)


def _checker_colors(vertices: np.ndarray, faces: np.ndarray, pitch_deg: float) -> np.ndarray:
    """Two-tone coloring by angular bins of the face centroid direction."""
    centroids = vertices[faces].mean(axis=1)
    r = np.linalg.norm(centroids, axis=1)
    r[r == 0] = 1.0
    az = np.degrees(np.arctan2(centroids[:, 1], centroids[:, 0])) + 180.0
    el = np.degrees(np.arcsin(np.clip(centroids[:, 2] / r, -1, 1))) + 90.0
    parity = (np.floor(az / pitch_deg) + np.floor(el / pitch_deg)).astype(np.int64) % 2
    colors = np.where(parity[:, None] == 0, _CHECKER_A, _CHECKER_B)
    return colors


def generate_scene(spec: SceneSpec) -> TriangleMesh:
    """Build the normalized mesh for a scene spec; deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "cube":
        v, f = _cube_mesh()
    elif spec.kind == "icosphere":
        if spec.subdivisions < 0:
            raise ValueError("subdivisions must be >= 0")
        v, f = _icosphere_mesh(spec.subdivisions)
    elif spec.kind == "dihedral":
        if not 0.0 < spec.angle_deg < 180.0:
            raise ValueError("dihedral angle must be in (0, 180)")
        v, f = _dihedral_mesh(spec.angle_deg)
    elif spec.kind == "blocks":
        if spec.count < 1:
            raise ValueError("blocks count must be >= 1")
        v, f = _blocks_mesh(spec.count, rng)
    else:  # checker_ball
        v, f = _icosphere_mesh(spec.subdivisions)

    if spec.kind == "checker_ball":
        colors = _checker_colors(v, f, spec.pitch_deg)
    elif spec.color_mode == "checker":
        parity = np.arange(len(f)) % 2
        colors = np.where(parity[:, None] == 0, _CHECKER_A, _CHECKER_B)
    elif spec.color_mode == "per_face_random":
        colors = rng.uniform(0.05, 0.95, size=(len(f), 3))
    else:
        colors = np.full((len(f), 3), _FLAT_GRAY)

    return normalize_scale(make_mesh(v, f, colors))


def reference_families(seed: int = 0) -> dict[str, SceneSpec]:
    """The five procedural families exercised by planner-level checks."""
    return {
        "cube": SceneSpec(kind="cube", color_mode="checker", seed=seed),
        "icosphere": SceneSpec(kind="icosphere", subdivisions=2,
                               color_mode="per_face_random", seed=seed),
        "dihedral": SceneSpec(kind="dihedral", angle_deg=90.0,
                              color_mode="checker", seed=seed),
        "blocks": SceneSpec(kind="blocks", count=5, color_mode="per_face_random",
                            seed=seed + 1),
        "checker_ball": SceneSpec(kind="checker_ball", subdivisions=2,
                                  pitch_deg=30.0, seed=seed),
    }


def export_transforms(candidates: PoseSet, selection, out: str | Path) -> Path:
    """Write a transforms-style JSON for the selected poses.

    `selection` is a Trajectory or an iterable of pose indices. Frames embed
    the full 4x4 camera-to-world matrix whose upper 3x4 equals the pose
    extrinsics; floats survive a JSON round trip exactly.
    """
    indices = selection.pose_indices() if hasattr(selection, "pose_indices") else list(selection)
    if not indices:
        raise ValueError("selection is empty")
    first = candidates[indices[0]]
    fov_x = 2.0 * math.atan((first.width / 2.0) / first.focal_px)
    frames = []
    for k in indices:
        pose = candidates[k]
        m = np.vstack([pose.extrinsics, [0.0, 0.0, 0.0, 1.0]])
        frames.append({
            "file_path": f"./images/{k:04d}",
            "transform_matrix": [[float(x) for x in row] for row in m],
        })
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"camera_angle_x": fov_x, "frames": frames}, indent=2))
    return out


def export_training_tuples(mesh: TriangleMesh, candidates: PoseSet,
                           walks: list[list[int]], params, out_dir: str | Path,
                           scene_name: str = "scene",
                           candidates_per_prefix: int = 16, seed: int = 0,
                           resolution: int = 128,
                           texture_resolution: int | None = None,
                           threads: int = 1) -> Path:
    """Render walks and emit supervised (state, candidate) -> score tuples.

    Layout under out_dir/scenes/<scene_name>/:
      mesh.obj, poses.json, images/<k>.png (visited poses only),
      tuples/<id>.json, manifest.json (written last).

    For each walk prefix of length n, up to `candidates_per_prefix` poses
    outside the prefix are sampled; each yields one tuple holding the prefix
    score vector and the score vector after folding the candidate. Candidate
    images are never written for poses no walk visits.
    """
    from .objectives import fold_observation, score_vector
    from .planner import SceneEvaluator
    from .visibility import save_color_png

    out_dir = Path(out_dir)
    scene_dir = out_dir / "scenes" / scene_name
    (scene_dir / "images").mkdir(parents=True, exist_ok=True)
    (scene_dir / "tuples").mkdir(parents=True, exist_ok=True)

    save_mesh_obj(mesh, scene_dir / "mesh.obj")
    candidates.save(scene_dir / "poses.json")

    evaluator = SceneEvaluator(mesh, candidates, params, resolution,
                               texture_resolution or resolution)
    visited_union = sorted({k for walk in walks for k in walk})
    evaluator.precompute(visited_union, threads=threads)

    image_paths: dict[int, str] = {}
    for k in visited_union:
        rel = f"images/{k:04d}.png"
        save_color_png(evaluator.render(k).color, scene_dir / rel)
        image_paths[k] = rel

    rng = np.random.default_rng(seed)
    from .objectives import ScoreState

    tuple_files: list[str] = []
    for wi, walk in enumerate(walks):
        state = ScoreState.empty(mesh.face_count)
        for n, pose_idx in enumerate(walk, start=1):
            state = fold_observation(state, evaluator.stats(pose_idx), params)
            f_n = score_vector(state, params)
            prefix = set(walk[:n])
            unseen = [k for k in range(len(candidates)) if k not in prefix]
            take = min(candidates_per_prefix, len(unseen))
            picks = sorted(rng.choice(len(unseen), size=take, replace=False).tolist())
            for c in (unseen[p] for p in picks):
                f_n1 = score_vector(
                    fold_observation(state, evaluator.stats(c), params), params)
                tuple_id = f"w{wi}_p{n}_c{c}"
                doc = {
                    "id": tuple_id,
                    "scene": scene_name,
                    "visited_pose_indices": walk[:n],
                    "visited_poses": [candidates[k].to_dict() for k in walk[:n]],
                    "visited_images": [image_paths[k] for k in walk[:n]],
                    "candidate_pose_index": c,
                    "candidate_pose": candidates[c].to_dict(),
                    "label_F_n": f_n.as_dict(),
                    "label_F_n1": f_n1.as_dict(),
                }
                rel = f"tuples/{tuple_id}.json"
                try:
                    (scene_dir / rel).write_text(json.dumps(doc, indent=2))
                except OSError as exc:
                    raise OSError(f"failed writing {scene_dir / rel}: {exc}") from exc
                tuple_files.append(rel)

    manifest = {
        "scene": scene_name,
        "mesh": "mesh.obj",
        "poses": "poses.json",
        "resolution": resolution,
        "texture_resolution": texture_resolution or resolution,
        "seed": seed,
        "params": params.__dict__,
        "walks": walks,
        "tuples": tuple_files,
    }
    (scene_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return scene_dir


def random_walk_trajectories(candidates: PoseSet, length: int, count: int,
                             seed: int, neighbors: int = 8) -> list[list[int]]:
    """Random walks over the pose set: start anywhere, hop to one of the
    `neighbors` angularly-nearest unvisited poses each step."""
    n = len(candidates)
    if length > n:
        raise ValueError("walk length exceeds candidate count")
    centers = candidates.centers()
    unit = centers / np.linalg.norm(centers, axis=1, keepdims=True)
    ang = np.arccos(np.clip(unit @ unit.T, -1.0, 1.0))

    rng = np.random.default_rng(seed)
    walks = []
    for _ in range(count):
        current = int(rng.integers(n))
        walk = [current]
        visited = {current}
        while len(walk) < length:
            dist = ang[current].copy()
            dist[list(visited)] = np.inf
            open_idx = np.argsort(dist, kind="stable")
            k = min(neighbors, n - len(visited))
            current = int(open_idx[rng.integers(k)])
            walk.append(current)
            visited.add(current)
        walks.append(walk)
    return walks
