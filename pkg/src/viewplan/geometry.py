"""Triangle meshes, scale normalization, and camera poses on a viewing sphere."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_SPHERE_RADIUS = 3.0
DEFAULT_FOV_Y_DEG = 50.0
DEFAULT_RING_ELEVATION_DEG = 30.0


class MeshLoadError(ValueError):
    """Malformed mesh input; carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyMeshError(ValueError):
    """Mesh has no faces."""


class DegenerateMeshError(ValueError):
    """Mesh has zero extent on every axis; cannot be normalized."""


def _as_float_array(x, shape_tail) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1:] != shape_tail:
        raise ValueError(f"expected array of shape (N, {shape_tail[0]}), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle geometry with per-face unit normals and RGB colors.

    Immutable after construction; all arrays are set writeable=False so the
    mesh can be shared freely across worker threads.
    """

    vertices: np.ndarray   # (V, 3) float64
    faces: np.ndarray      # (J, 3) int64 vertex indices
    face_normals: np.ndarray  # (J, 3) float64 unit vectors
    face_colors: np.ndarray   # (J, 3) float64 RGB in [0, 1]

    def __post_init__(self):
        for name in ("vertices", "faces", "face_normals", "face_colors"):
            getattr(self, name).setflags(write=False)
        if self.faces.shape[0] < 1:
            raise EmptyMeshError("mesh must have at least one face")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")

    @property
    def face_count(self) -> int:
        return int(self.faces.shape[0])

    def triangles(self) -> np.ndarray:
        """Per-face vertex positions, shape (J, 3, 3)."""
        return self.vertices[self.faces]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def compute_face_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Unit normals from right-hand winding; degenerate faces get a zero-safe +z."""
    tri = vertices[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norms = np.linalg.norm(n, axis=1)
    out = np.zeros_like(n)
    ok = norms > 1e-20
    out[ok] = n[ok] / norms[ok, None]
    out[~ok] = (0.0, 0.0, 1.0)
    return out


def make_mesh(vertices, faces, face_colors=None) -> TriangleMesh:
    """Build a TriangleMesh, computing normals and defaulting colors to mid-gray."""
    v = _as_float_array(vertices, (3,))
    f = np.asarray(faces, dtype=np.int64)
    if f.ndim != 2 or f.shape[1] != 3:
        raise ValueError(f"faces must have shape (J, 3), got {f.shape}")
    if face_colors is None:
        colors = np.full((len(f), 3), 0.5, dtype=np.float64)
    else:
        colors = _as_float_array(face_colors, (3,))
        if len(colors) != len(f):
            raise ValueError("face_colors length must match face count")
    return TriangleMesh(v, f, compute_face_normals(v, f), colors)


def _parse_floats(parts: list[str], count: int, line_no: int) -> list[float]:
    if len(parts) < count:
        raise MeshLoadError(f"expected {count} numeric fields, got {len(parts)}", line_no)
    try:
        return [float(p) for p in parts[:count]]
    except ValueError as exc:
        raise MeshLoadError(f"bad numeric field: {exc}", line_no) from None


def _parse_mtl(path: Path) -> dict[str, tuple[float, float, float]]:
    """Material name -> diffuse color. Missing file is tolerated silently."""
    colors: dict[str, tuple[float, float, float]] = {}
    if not path.is_file():
        return colors
    current = None
    for raw in path.read_text().splitlines():
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "newmtl" and len(parts) > 1:
            current = parts[1]
        elif parts[0] == "Kd" and current is not None and len(parts) >= 4:
            colors[current] = (float(parts[1]), float(parts[2]), float(parts[3]))
    return colors


def load_mesh_obj(path: str | Path) -> TriangleMesh:
    """Load Wavefront OBJ triangle geometry.

    Polygons with more than 3 vertices are fan-triangulated. Face colors come
    from per-vertex colors (the 6-float `v` extension, averaged per face) or
    the active material's diffuse color; mid-gray when neither is present.

    Raises:
        FileNotFoundError: path does not exist.
        MeshLoadError: unparseable line (message names the line number).
        EmptyMeshError: file contains no faces.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")

    vertices: list[list[float]] = []
    vertex_colors: list[list[float] | None] = []
    faces: list[list[int]] = []
    face_materials: list[str | None] = []
    materials: dict[str, tuple[float, float, float]] = {}
    current_mtl: str | None = None
    any_vertex_color = False

    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            vals = _parse_floats(parts[1:], 3, line_no)
            vertices.append(vals)
            if len(parts) >= 7:
                vertex_colors.append(_parse_floats(parts[4:], 3, line_no))
                any_vertex_color = True
            else:
                vertex_colors.append(None)
        elif tag == "f":
            idx = []
            for field_str in parts[1:]:
                head = field_str.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshLoadError(f"bad face index {field_str!r}", line_no) from None
                # OBJ indices are 1-based; negatives count back from the end.
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            if len(idx) < 3:
                raise MeshLoadError("face needs at least 3 vertices", line_no)
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
                face_materials.append(current_mtl)
        elif tag == "mtllib" and len(parts) > 1:
            materials.update(_parse_mtl(path.parent / parts[1]))
        elif tag == "usemtl" and len(parts) > 1:
            current_mtl = parts[1]
        # vn/vt/o/g/s and unknown tags are ignored

    if not faces:
        raise EmptyMeshError(f"no faces in {path}")

    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if f.min() < 0 or f.max() >= len(v):
        raise MeshLoadError(f"face index out of range in {path}")

    colors = np.full((len(f), 3), 0.5, dtype=np.float64)
    for j, mtl in enumerate(face_materials):
        if mtl is not None and mtl in materials:
            colors[j] = materials[mtl]
    if any_vertex_color:
        vc = np.array([c if c is not None else [0.5, 0.5, 0.5] for c in vertex_colors])
        colors = vc[f].mean(axis=1)
    return make_mesh(v, f, np.clip(colors, 0.0, 1.0))


def save_mesh_obj(mesh: TriangleMesh, path: str | Path) -> None:
    """Write mesh as OBJ + MTL, one material per distinct face color.

    Floats are written with repr so a reload reproduces the geometry and
    colors bit for bit.
    """
    path = Path(path)
    mtl_path = path.with_suffix(".mtl")
    color_keys = [tuple(float(x) for x in c) for c in mesh.face_colors]
    unique = sorted(set(color_keys))
    names = {c: f"mat{i}" for i, c in enumerate(unique)}

    with open(mtl_path, "w") as fh:
        for c in unique:
            fh.write(f"newmtl {names[c]}\nKd {c[0]!r} {c[1]!r} {c[2]!r}\n")
    with open(path, "w") as fh:
        fh.write(f"mtllib {mtl_path.name}\n")
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        last = None
        for j, face in enumerate(mesh.faces):
            name = names[color_keys[j]]
            if name != last:
                fh.write(f"usemtl {name}\n")
                last = name
            fh.write(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}\n")


def normalize_scale(mesh: TriangleMesh) -> TriangleMesh:
    """Center the bounding box at the origin and scale the largest half-extent to 1.

    Idempotent; raises DegenerateMeshError when every axis has zero extent.
    """
    lo, hi = mesh.bounds()
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    scale = half.max()
    if scale <= 0.0:
        raise DegenerateMeshError("mesh has zero extent on all axes")
    v = (mesh.vertices - center) / scale
    return TriangleMesh(v, mesh.faces.copy(), compute_face_normals(v, mesh.faces),
                        mesh.face_colors.copy())


@dataclass(frozen=True)
class CameraPose:
    """Camera-to-world extrinsics with pinhole intrinsics.

    extrinsics is 3x4: columns 0..2 are the right, up, and backward camera
    axes in world coordinates, column 3 is the camera center. The camera
    looks along -z of its own frame; image x runs right, image y runs down.
    """

    extrinsics: np.ndarray  # (3, 4) float64
    fov_y_deg: float = DEFAULT_FOV_Y_DEG
    width: int = 128
    height: int = 128

    def __post_init__(self):
        ex = np.asarray(self.extrinsics, dtype=np.float64)
        if ex.shape != (3, 4):
            raise ValueError(f"extrinsics must be 3x4, got {ex.shape}")
        object.__setattr__(self, "extrinsics", ex)
        ex.setflags(write=False)

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:, :3]

    @property
    def center(self) -> np.ndarray:
        return self.extrinsics[:, 3]

    @property
    def forward(self) -> np.ndarray:
        """World-space view direction (-z column)."""
        return -self.extrinsics[:, 2]

    @property
    def focal_px(self) -> float:
        return 0.5 * self.height / math.tan(math.radians(self.fov_y_deg) / 2.0)

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    def to_dict(self) -> dict:
        return {
            "extrinsics": [float(x) for x in self.extrinsics.reshape(-1)],
            "fov_y_deg": float(self.fov_y_deg),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        ex = np.asarray(d["extrinsics"], dtype=np.float64).reshape(3, 4)
        return cls(ex, float(d["fov_y_deg"]), int(d["width"]), int(d["height"]))


def look_at(center: np.ndarray, target: np.ndarray | None = None,
            fov_y_deg: float = DEFAULT_FOV_Y_DEG, width: int = 128,
            height: int = 128) -> CameraPose:
    """Pose at `center` looking toward `target` (origin by default), +z up-hint.

    Falls back to a +x up-hint when the view direction is within ~0.03 deg of
    the poles.
    """
    center = np.asarray(center, dtype=np.float64)
    target = np.zeros(3) if target is None else np.asarray(target, dtype=np.float64)
    forward = target - center
    dist = np.linalg.norm(forward)
    if dist == 0.0:
        raise ValueError("camera center coincides with look-at target")
    forward = forward / dist
    backward = -forward
    up_hint = np.array([0.0, 0.0, 1.0])
    right = np.cross(up_hint, backward)
    if np.linalg.norm(right) < 1e-8:
        up_hint = np.array([1.0, 0.0, 0.0])
        right = np.cross(up_hint, backward)
    right = right / np.linalg.norm(right)
    up = np.cross(backward, right)
    ex = np.column_stack([right, up, backward, center])
    return CameraPose(ex, fov_y_deg, width, height)


@dataclass(frozen=True)
class PoseSet:
    """Candidate poses on a viewing sphere; the index into `poses` is the pose id."""

    poses: list[CameraPose]
    radius: float
    seed: int = 0

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, k: int) -> CameraPose:
        return self.poses[k]

    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.poses])

    def to_json(self) -> str:
        doc = {
            "radius": float(self.radius),
            "seed": int(self.seed),
            "poses": [p.to_dict() for p in self.poses],
        }
        return json.dumps(doc, indent=2)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "PoseSet":
        doc = json.loads(text)
        poses = [CameraPose.from_dict(d) for d in doc["poses"]]
        return cls(poses, float(doc["radius"]), int(doc["seed"]))

    @classmethod
    def load(cls, path: str | Path) -> "PoseSet":
        return cls.from_json(Path(path).read_text())


def generate_sphere_poses(radius: float = DEFAULT_SPHERE_RADIUS, count: int = 100,
                          mode: str = "random", seed: int = 0,
                          elevation_deg: float = DEFAULT_RING_ELEVATION_DEG,
                          fov_y_deg: float = DEFAULT_FOV_Y_DEG,
                          width: int = 128, height: int = 128) -> PoseSet:
    """Inward-looking poses on a sphere of the given radius.

    `random` samples the sphere uniformly (deterministic per seed); `ring`
    places equally spaced azimuths at a fixed elevation starting from azimuth
    zero.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    if radius <= 0:
        raise ValueError("radius must be positive")
    if mode not in ("random", "ring"):
        raise ValueError(f"unknown mode {mode!r}")

    centers = np.empty((count, 3))
    if mode == "random":
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(count, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        centers = v * radius
    else:
        elev = math.radians(elevation_deg)
        az = 2.0 * math.pi * np.arange(count) / count
        centers[:, 0] = radius * math.cos(elev) * np.cos(az)
        centers[:, 1] = radius * math.cos(elev) * np.sin(az)
        centers[:, 2] = radius * math.sin(elev)

    poses = [look_at(c, fov_y_deg=fov_y_deg, width=width, height=height)
             for c in centers]
    return PoseSet(poses, radius, seed)


def angular_distance_deg(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in degrees between two camera-center directions from the origin."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ah = a / np.linalg.norm(a)
    bh = b / np.linalg.norm(b)
    return math.degrees(math.acos(float(np.clip(np.dot(ah, bh), -1.0, 1.0))))
