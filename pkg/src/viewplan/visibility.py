"""Per-view visibility: ray casting, ID/normal/color buffers, and observations.

A view is rendered by casting one ray through every pixel center and keeping
the nearest triangle hit (watertight intersection over a BVH). Visibility of a
face from a pose is then simply "owns at least one pixel".
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraPose, TriangleMesh

BACKGROUND = -1
MIN_HIT_T = 1e-9
MAX_RAYS_PER_FACE = 64
AMBIENT_FLOOR = 0.1
_LEAF_SIZE = 8


def _watertight_hits(origins: np.ndarray, dirs: np.ndarray,
                     tri: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Watertight ray/triangle intersection, vectorized over rays x triangles.

    origins, dirs: (N, 3); tri: (M, 3, 3). Returns (t, valid) of shape (N, M).
    Rays hitting a shared edge or vertex register on both triangles, so a
    closed mesh never shows cracks. Back faces are hittable.
    """
    n = origins.shape[0]
    # Permute axes per ray so kz is the dominant direction component.
    kz = np.argmax(np.abs(dirs), axis=1)
    kx = (kz + 1) % 3
    ky = (kx + 1) % 3
    dz = dirs[np.arange(n), kz]
    neg = dz < 0.0
    kx[neg], ky[neg] = ky[neg], kx[neg]

    rows = np.arange(n)
    dx = dirs[rows, kx]
    dy = dirs[rows, ky]
    dz = dirs[rows, kz]
    sx = (dx / dz)[:, None]
    sy = (dy / dz)[:, None]
    sz = (1.0 / dz)[:, None]

    # Triangle vertices relative to each ray origin; components gathered in
    # the per-ray permuted order, result shapes (N, M).
    a = tri[None, :, 0, :] - origins[:, None, :]
    b = tri[None, :, 1, :] - origins[:, None, :]
    c = tri[None, :, 2, :] - origins[:, None, :]

    def comp(p, axis_idx):
        return np.take_along_axis(p, axis_idx[:, None, None], axis=2)[:, :, 0]

    ax, ay, az = comp(a, kx), comp(a, ky), comp(a, kz)
    bx, by, bz = comp(b, kx), comp(b, ky), comp(b, kz)
    cx, cy, cz = comp(c, kx), comp(c, ky), comp(c, kz)

    ax = ax - sx * az
    ay = ay - sy * az
    bx = bx - sx * bz
    by = by - sy * bz
    cx = cx - sx * cz
    cy = cy - sy * cz

    u = cx * by - cy * bx
    v = ax * cy - ay * cx
    w = bx * ay - by * ax

    same_sign = ((u >= 0.0) & (v >= 0.0) & (w >= 0.0)) | ((u <= 0.0) & (v <= 0.0) & (w <= 0.0))
    det = u + v + w
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (u * sz * az + v * sz * bz + w * sz * cz) / det
    valid = same_sign & (det != 0.0) & (t > MIN_HIT_T) & np.isfinite(t)
    return t, valid


def _nearest_from_grid(t: np.ndarray, valid: np.ndarray,
                       face_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduce (N, M) candidate hits to nearest per ray; ties take the lowest face id."""
    t = np.where(valid, t, np.inf)
    order = np.argsort(face_ids, kind="stable")
    t_ord = t[:, order]
    col = np.argmin(t_ord, axis=1)   # first minimum -> lowest face id on exact ties
    best_t = t_ord[np.arange(t.shape[0]), col]
    best_face = np.where(np.isfinite(best_t), face_ids[order][col], BACKGROUND)
    best_t = np.where(np.isfinite(best_t), best_t, np.inf)
    return best_face, best_t


class MeshBVH:
    """Median-split bounding volume hierarchy over mesh triangles.

    Traversal is batched: every node filters the subset of rays whose best hit
    so far could still be beaten inside the node's box.
    """

    def __init__(self, mesh: TriangleMesh, leaf_size: int = _LEAF_SIZE):
        self.mesh = mesh
        self.tri = mesh.triangles()
        J = len(self.tri)
        tri_lo = self.tri.min(axis=1)
        tri_hi = self.tri.max(axis=1)
        centroids = self.tri.mean(axis=1)

        self.node_lo: list[np.ndarray] = []
        self.node_hi: list[np.ndarray] = []
        self.node_left: list[int] = []
        self.node_right: list[int] = []
        self.node_start: list[int] = []
        self.node_count: list[int] = []
        self.order = np.arange(J)

        def build(lo_idx: int, hi_idx: int) -> int:
            node = len(self.node_lo)
            idx = self.order[lo_idx:hi_idx]
            self.node_lo.append(tri_lo[idx].min(axis=0))
            self.node_hi.append(tri_hi[idx].max(axis=0))
            self.node_left.append(-1)
            self.node_right.append(-1)
            self.node_start.append(lo_idx)
            self.node_count.append(hi_idx - lo_idx)
            if hi_idx - lo_idx > leaf_size:
                cen = centroids[idx]
                axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
                local = np.argsort(cen[:, axis], kind="stable")
                self.order[lo_idx:hi_idx] = idx[local]
                mid = lo_idx + (hi_idx - lo_idx) // 2
                self.node_left[node] = build(lo_idx, mid)
                self.node_right[node] = build(mid, hi_idx)
            return node

        build(0, J)
        self._lo = np.array(self.node_lo)
        self._hi = np.array(self.node_hi)

    def intersect(self, origins: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest hit for each ray: (face_id or BACKGROUND, t or inf)."""
        origins = np.asarray(origins, dtype=np.float64)
        dirs = np.asarray(dirs, dtype=np.float64)
        n = origins.shape[0]
        best_face = np.full(n, BACKGROUND, dtype=np.int64)
        best_t = np.full(n, np.inf)

        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
        stack = [(0, np.arange(n))]
        while stack:
            node, active = stack.pop()
            o = origins[active]
            iv = inv[active]
            with np.errstate(invalid="ignore"):
                t1 = (self._lo[node] - o) * iv
                t2 = (self._hi[node] - o) * iv
            # NaNs (origin exactly on a slab with zero direction) widen the
            # interval conservatively instead of poisoning the comparison.
            lo_ax = np.nan_to_num(np.minimum(t1, t2), nan=-np.inf)
            hi_ax = np.nan_to_num(np.maximum(t1, t2), nan=np.inf)
            t_near = lo_ax.max(axis=1)
            t_far = hi_ax.min(axis=1)
            hit = (t_near <= t_far) & (t_far > 0.0) & (t_near < best_t[active])
            active = active[hit]
            if active.size == 0:
                continue
            if self.node_left[node] < 0:
                s, c = self.node_start[node], self.node_count[node]
                leaf_faces = self.order[s:s + c]
                t, valid = _watertight_hits(origins[active], dirs[active],
                                            self.tri[leaf_faces])
                face, t_hit = _nearest_from_grid(t, valid, leaf_faces)
                better = (t_hit < best_t[active]) | (
                    (t_hit == best_t[active]) & (face != BACKGROUND) & (face < best_face[active]))
                upd = active[better]
                best_t[upd] = t_hit[better]
                best_face[upd] = face[better]
            else:
                stack.append((self.node_left[node], active))
                stack.append((self.node_right[node], active))
        return best_face, best_t


def cast_ray(mesh: TriangleMesh, origin, direction,
             bvh: MeshBVH | None = None) -> tuple[int, float] | None:
    """Nearest intersection of a single ray with the mesh, or None on a miss."""
    origin = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    direction = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    if bvh is None:
        bvh = MeshBVH(mesh)
    face, t = bvh.intersect(origin, direction)
    if face[0] == BACKGROUND:
        return None
    return int(face[0]), float(t[0])


@dataclass(frozen=True)
class ViewBuffers:
    """Per-pixel render outputs for one pose.

    face_id holds BACKGROUND (-1) for misses; color is the Lambert-shaded
    face color on white background; normal_map is the hit face's world normal
    (zeros on background); ray_dir is the unit pixel ray in world space.
    """

    face_id: np.ndarray    # (H, W) int64
    normal_map: np.ndarray  # (H, W, 3) float64
    color: np.ndarray       # (H, W, 3) float64 in [0, 1]
    ray_dir: np.ndarray     # (H, W, 3) float64 unit vectors

    @property
    def shape(self) -> tuple[int, int]:
        return self.face_id.shape


def pixel_rays(pose: CameraPose) -> tuple[np.ndarray, np.ndarray]:
    """World-space origin and unit direction for every pixel center, row-major."""
    w, h = pose.width, pose.height
    f = pose.focal_px
    cx, cy = pose.principal_point
    px, py = np.meshgrid(np.arange(w) + 0.5, np.arange(h) + 0.5)
    # Image y grows downward while the camera's own y axis points up.
    d_cam = np.stack([(px - cx) / f, -(py - cy) / f, -np.ones_like(px)], axis=-1)
    d_world = d_cam.reshape(-1, 3) @ pose.rotation.T
    d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
    origins = np.broadcast_to(pose.center, d_world.shape)
    return origins, d_world


def render_view(mesh: TriangleMesh, pose: CameraPose,
                bvh: MeshBVH | None = None) -> ViewBuffers:
    """Render the mesh from a pose by casting a ray through each pixel center.

    Resolution comes from the pose intrinsics and must be at least 16x16.
    """
    w, h = pose.width, pose.height
    if w < 16 or h < 16:
        raise ValueError("resolution must be at least 16x16")
    if bvh is None:
        bvh = MeshBVH(mesh)
    origins, dirs = pixel_rays(pose)
    face, _t = bvh.intersect(origins, dirs)

    hit = face != BACKGROUND
    normal = np.zeros((h * w, 3))
    color = np.ones((h * w, 3))
    if hit.any():
        n = mesh.face_normals[face[hit]]
        normal[hit] = n
        lambert = np.maximum(0.0, -np.sum(dirs[hit] * n, axis=1))
        shade = np.clip(lambert, AMBIENT_FLOOR, 1.0)
        color[hit] = mesh.face_colors[face[hit]] * shade[:, None]

    return ViewBuffers(
        face_id=face.reshape(h, w),
        normal_map=normal.reshape(h, w, 3),
        color=color.reshape(h, w, 3),
        ray_dir=dirs.reshape(h, w, 3),
    )


@dataclass(frozen=True)
class ViewObservation:
    """Which faces a pose sees, and with which rays.

    observing_rays keeps one ray per covering pixel in scan order, thinned by
    uniform stride to at most MAX_RAYS_PER_FACE entries per face.
    """

    pose_index: int
    visible_faces: np.ndarray               # sorted unique face ids, (F,)
    observing_rays: dict[int, np.ndarray]   # face id -> (R, 3) unit rays
    pixel_counts: dict[int, int]

    def is_empty(self) -> bool:
        return len(self.visible_faces) == 0


def _stride_sample(rows: np.ndarray, cap: int) -> np.ndarray:
    if len(rows) <= cap:
        return rows
    pick = (np.arange(cap) * len(rows)) // cap
    return rows[pick]


def observe(buffers: ViewBuffers, pose_index: int) -> ViewObservation:
    """Derive the per-face visibility record from rendered buffers."""
    flat_ids = buffers.face_id.reshape(-1)
    flat_rays = buffers.ray_dir.reshape(-1, 3)
    hit = flat_ids != BACKGROUND
    ids = flat_ids[hit]
    rays = flat_rays[hit]
    if ids.size == 0:
        return ViewObservation(pose_index, np.empty(0, dtype=np.int64), {}, {})

    order = np.argsort(ids, kind="stable")  # stable keeps scan order per face
    ids_sorted = ids[order]
    rays_sorted = rays[order]
    unique, starts = np.unique(ids_sorted, return_index=True)
    bounds = np.append(starts, len(ids_sorted))

    observing: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for i, face in enumerate(unique):
        chunk = rays_sorted[bounds[i]:bounds[i + 1]]
        counts[int(face)] = int(len(chunk))
        observing[int(face)] = _stride_sample(chunk, MAX_RAYS_PER_FACE)
    return ViewObservation(pose_index, unique.astype(np.int64), observing, counts)


def _to_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def dump_buffers_png(buffers: ViewBuffers, out_dir: str | Path, stem: str) -> list[Path]:
    """Debug dump: color, normal map remapped to [0,255], face ids as hashed colors."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    color = _to_u8(buffers.color)
    normal = _to_u8((buffers.normal_map + 1.0) / 2.0)
    ids = buffers.face_id.astype(np.int64)
    hashed = np.stack([(ids * 2654435761) % 255,
                       (ids * 40503) % 255,
                       (ids * 69069) % 255], axis=-1).astype(np.uint8)
    hashed[ids == BACKGROUND] = 255

    for name, arr in (("color", color), ("normal", normal), ("faceid", hashed)):
        p = out_dir / f"{stem}_{name}.png"
        Image.fromarray(arr).save(p)
        paths.append(p)
    return paths


def save_color_png(color: np.ndarray, path: str | Path) -> None:
    from PIL import Image

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_to_u8(color)).save(path)
