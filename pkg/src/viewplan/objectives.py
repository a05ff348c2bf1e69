"""The four surrogate view objectives and their cumulative scoring state.

Raw objectives:
  coverage            fraction of mesh faces seen by at least one visited view
  geometric complexity   pooled |LoG| response over rendered normal maps
  textural complexity    1 - flat-pattern fraction of an LBP code histogram
  ray diversity          per-face variance product of observing-ray directions,
                          weighted by a grazing-angle outlier ratio

Each raw value is passed through the smooth/clip transform before it is
reported, so every component of a ScoreVector lies in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import TriangleMesh, angular_distance_deg
from .visibility import BACKGROUND, ViewBuffers, ViewObservation

OBJECTIVE_TAGS = ("C", "Q", "D", "T")

# Views whose camera directions are closer than this are "repeat visits" for
# the texture discount.
REPEAT_VIEW_ANGLE_DEG = 5.0


@dataclass(frozen=True)
class ObjectiveParams:
    """Hyperparameters of the four objectives and the smoothing transform."""

    sigma_q: float = 1.5      # Gaussian std of the LoG kernel, pixels
    beta_q: float = 1.0       # geometric-complexity scaling
    d_q: float = 0.5          # per-revisit discount on overlapping faces
    r_t: int = 3              # LBP radius, pixels
    p_t: int = 3              # LBP circular neighbor count
    d_t: float = 0.5          # texture discount for near-identical poses
    alpha1: float = 1.0       # outlier sigmoid amplitude
    alpha2: float = -10.0     # outlier sigmoid center, degrees
    alpha3: float = 3.0       # smoothing sharpness

    def __post_init__(self):
        if self.sigma_q <= 0:
            raise ValueError("sigma_q must be positive")
        if not 0 < self.d_q <= 1 or not 0 < self.d_t <= 1:
            raise ValueError("discounts must lie in (0, 1]")
        if self.p_t < 2 or self.r_t < 1:
            raise ValueError("LBP needs p_t >= 2 and r_t >= 1")

    @property
    def q_floor(self) -> float:
        """Geometric-complexity value of an all-flat or all-unseen state."""
        return 1.0 / (5.0 * self.sigma_q) ** 2


@dataclass(frozen=True)
class ScoreVector:
    """Smoothed objective scores; all components in [0, 1]."""

    f_c: float
    f_q: float
    f_d: float
    f_t: float

    def as_dict(self) -> dict[str, float]:
        return {"f_C": self.f_c, "f_Q": self.f_q, "f_D": self.f_d, "f_T": self.f_t}

    def as_array(self) -> np.ndarray:
        return np.array([self.f_c, self.f_q, self.f_d, self.f_t])

    def component(self, tag: str) -> float:
        return self.as_dict()[f"f_{tag}"]


def grazing_angle(ray: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Augmented grazing angle in degrees: |angle(ray, normal)| - 90.

    90 means head-on, 0 grazing, negative back-facing. Accepts batched rays.
    """
    ray = np.asarray(ray, dtype=np.float64)
    normal = np.asarray(normal, dtype=np.float64)
    dot = np.clip(np.sum(ray * normal, axis=-1), -1.0, 1.0)
    return np.abs(np.degrees(np.arccos(dot))) - 90.0


def outlier_score(theta_deg, params: ObjectiveParams):
    """Sigmoid soft-threshold on the grazing angle (1 near back-grazing, 0 head-on)."""
    theta_deg = np.asarray(theta_deg, dtype=np.float64)
    out = 1.0 - params.alpha1 / (1.0 + np.exp(-theta_deg + params.alpha2))
    return float(out) if out.ndim == 0 else out


def smooth_clip(x: float, alpha3: float = 3.0) -> float:
    """Smoothing transform onto [0, 1]; fixed point at 0.5."""
    exponent = alpha3 * math.e * (0.5 - x)
    if exponent > 700.0:
        return 0.0
    return min(max(1.0 / (1.0 + math.exp(exponent)), 0.0), 1.0)


def log_kernel(sigma: float) -> np.ndarray:
    """Discrete Laplacian-of-Gaussian kernel, side 2*ceil(2.5*sigma)+1, zero-sum."""
    half = math.ceil(2.5 * sigma)
    r = np.arange(-half, half + 1, dtype=np.float64)
    y, x = np.meshgrid(r, r, indexing="ij")
    g = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    k = (x * x + y * y - 2.0 * sigma * sigma) / sigma ** 4 * g / g.sum()
    return k - k.mean()


def log_response_image(normal_map: np.ndarray, sigma: float) -> np.ndarray:
    """Channel-summed |LoG| of a normal map.

    Background pixels contribute their stored zero normals; silhouette
    creases therefore respond, which is accepted. Image borders replicate so
    a frame-filling constant field responds exactly zero.
    """
    kernel = log_kernel(sigma)
    resp = np.zeros(normal_map.shape[:2])
    for c in range(normal_map.shape[2]):
        resp += np.abs(ndimage.convolve(normal_map[:, :, c], kernel, mode="nearest"))
    return resp


def face_log_responses(buffers: ViewBuffers, params: ObjectiveParams,
                       face_count: int) -> np.ndarray:
    """Mean |LoG| response per face over its covering pixels; zeros when unseen."""
    resp = log_response_image(buffers.normal_map, params.sigma_q)
    ids = buffers.face_id.reshape(-1)
    hit = ids != BACKGROUND
    acc = np.zeros(face_count)
    cnt = np.zeros(face_count)
    np.add.at(acc, ids[hit], resp.reshape(-1)[hit])
    np.add.at(cnt, ids[hit], 1.0)
    out = np.zeros(face_count)
    seen = cnt > 0
    out[seen] = acc[seen] / cnt[seen]
    return out


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    """Hexcone RGB->HSV; hue normalized to [0, 1)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)

    h = np.zeros_like(maxc)
    nz = delta > 0
    dl = np.where(nz, delta, 1.0)
    rc = (maxc - r) / dl
    gc = (maxc - g) / dl
    bc = (maxc - b) / dl
    h = np.where(nz & (maxc == r), bc - gc, h)
    h = np.where(nz & (maxc == g) & (maxc != r), 2.0 + rc - bc, h)
    h = np.where(nz & (maxc == b) & (maxc != r) & (maxc != g), 4.0 + gc - rc, h)
    h = (h / 6.0) % 1.0
    return np.stack([h, s, v], axis=-1)


def lbp_codes(channel: np.ndarray, centers_mask: np.ndarray, radius: int,
              points: int) -> np.ndarray:
    """Plain LBP codes for masked interior pixels.

    Neighbors sit on a circle of the given radius (bilinear interpolation);
    bit k is set when the neighbor is >= the center. Returns the codes of
    pixels that are masked in and at least `radius` away from the border.
    """
    h, w = channel.shape
    interior = np.zeros_like(centers_mask)
    interior[radius:h - radius, radius:w - radius] = True
    ys, xs = np.nonzero(centers_mask & interior)
    if len(ys) == 0:
        return np.empty(0, dtype=np.int64)

    center_vals = channel[ys, xs]
    codes = np.zeros(len(ys), dtype=np.int64)
    for k in range(points):
        ang = 2.0 * math.pi * k / points
        sy = ys + radius * math.sin(ang)
        sx = xs + radius * math.cos(ang)
        y0 = np.floor(sy).astype(np.int64)
        x0 = np.floor(sx).astype(np.int64)
        ty = sy - y0
        tx = sx - x0
        y1 = np.clip(y0 + 1, 0, h - 1)
        x1 = np.clip(x0 + 1, 0, w - 1)
        y0 = np.clip(y0, 0, h - 1)
        x0 = np.clip(x0, 0, w - 1)
        val = (channel[y0, x0] * (1 - ty) * (1 - tx)
               + channel[y0, x1] * (1 - ty) * tx
               + channel[y1, x0] * ty * (1 - tx)
               + channel[y1, x1] * ty * tx)
        codes |= (val >= center_vals).astype(np.int64) << k
    return codes


def view_texture_score(color: np.ndarray, face_id: np.ndarray,
                       params: ObjectiveParams) -> tuple[float, bool]:
    """Per-view textural complexity: mean over Hue and Saturation of
    1 - hist[all-ones code]. Returns (score, all_background_flag)."""
    mask = face_id != BACKGROUND
    if not mask.any():
        return 0.0, True
    hsv = rgb_to_hsv(color)
    bins = 1 << params.p_t
    flat_code = bins - 1
    scores = []
    for c in (0, 1):  # hue, saturation
        codes = lbp_codes(hsv[..., c], mask, params.r_t, params.p_t)
        if len(codes) == 0:
            return 0.0, True
        hist = np.bincount(codes, minlength=bins) / len(codes)
        scores.append(1.0 - hist[flat_code])
    return float(np.mean(scores)), False


@dataclass(frozen=True)
class ViewStats:
    """Everything one observed view contributes to the cumulative state.

    Per-face ray statistics are kept as sufficient moments (count, sum,
    sum-of-squares, min, max per axis, and the outlier-score sum), which fold
    by plain addition and reproduce the per-face variance products exactly.
    """

    pose_index: int
    camera_center: np.ndarray
    visible: np.ndarray      # (J,) bool
    ray_count: np.ndarray    # (J,) float
    ray_sum: np.ndarray      # (J, 3)
    ray_sumsq: np.ndarray    # (J, 3)
    ray_min: np.ndarray      # (J, 3)
    ray_max: np.ndarray      # (J, 3)
    psi_sum: np.ndarray      # (J,)
    log_response: np.ndarray  # (J,) mean |LoG| per face
    texture_score: float
    texture_empty: bool


def compute_view_stats(mesh: TriangleMesh, buffers: ViewBuffers,
                       obs: ViewObservation, params: ObjectiveParams,
                       camera_center: np.ndarray,
                       texture_color: np.ndarray | None = None,
                       texture_face_id: np.ndarray | None = None) -> ViewStats:
    """Preprocess one view into foldable statistics.

    The texture channel may come from a higher-resolution render; by default
    it reuses the view's own color buffer.
    """
    J = mesh.face_count
    visible = np.zeros(J, dtype=bool)
    if len(obs.visible_faces):
        visible[obs.visible_faces] = True

    count = np.zeros(J)
    rsum = np.zeros((J, 3))
    rsumsq = np.zeros((J, 3))
    rmin = np.full((J, 3), np.inf)
    rmax = np.full((J, 3), -np.inf)
    psis = np.zeros(J)

    if obs.observing_rays:
        faces = np.concatenate([np.full(len(r), f, dtype=np.int64)
                                for f, r in obs.observing_rays.items()])
        rays = np.concatenate(list(obs.observing_rays.values()))
        theta = grazing_angle(rays, mesh.face_normals[faces])
        psi = outlier_score(theta, params)
        np.add.at(count, faces, 1.0)
        np.add.at(rsum, faces, rays)
        np.add.at(rsumsq, faces, rays * rays)
        np.minimum.at(rmin, faces, rays)
        np.maximum.at(rmax, faces, rays)
        np.add.at(psis, faces, psi)

    if texture_color is None:
        texture_color, texture_face_id = buffers.color, buffers.face_id
    t_score, t_empty = view_texture_score(texture_color, texture_face_id, params)

    return ViewStats(
        pose_index=obs.pose_index,
        camera_center=np.asarray(camera_center, dtype=np.float64).copy(),
        visible=visible,
        ray_count=count,
        ray_sum=rsum,
        ray_sumsq=rsumsq,
        ray_min=rmin,
        ray_max=rmax,
        psi_sum=psis,
        log_response=face_log_responses(buffers, params, J),
        texture_score=t_score,
        texture_empty=t_empty,
    )


@dataclass
class ScoreState:
    """Cumulative per-face accumulators across the visited views.

    A value type: fold_observation returns a new state, so candidate
    evaluations can fold onto clones concurrently.
    """

    face_count: int
    seen: np.ndarray          # (J,) bool
    q_weight: np.ndarray      # (J,) multiplicative overlap discount
    q_response: np.ndarray    # (J,) max per-view |LoG| response so far
    ray_count: np.ndarray
    ray_sum: np.ndarray
    ray_sumsq: np.ndarray
    ray_min: np.ndarray
    ray_max: np.ndarray
    psi_sum: np.ndarray
    texture_entries: list[tuple[np.ndarray, float, float, bool]]  # center, score, weight, empty
    visited: list[int]

    @classmethod
    def empty(cls, face_count: int) -> "ScoreState":
        J = face_count
        return cls(
            face_count=J,
            seen=np.zeros(J, dtype=bool),
            q_weight=np.ones(J),
            q_response=np.zeros(J),
            ray_count=np.zeros(J),
            ray_sum=np.zeros((J, 3)),
            ray_sumsq=np.zeros((J, 3)),
            ray_min=np.full((J, 3), np.inf),
            ray_max=np.full((J, 3), -np.inf),
            psi_sum=np.zeros(J),
            texture_entries=[],
            visited=[],
        )

    def clone(self) -> "ScoreState":
        return ScoreState(
            face_count=self.face_count,
            seen=self.seen.copy(),
            q_weight=self.q_weight.copy(),
            q_response=self.q_response.copy(),
            ray_count=self.ray_count.copy(),
            ray_sum=self.ray_sum.copy(),
            ray_sumsq=self.ray_sumsq.copy(),
            ray_min=self.ray_min.copy(),
            ray_max=self.ray_max.copy(),
            psi_sum=self.psi_sum.copy(),
            texture_entries=list(self.texture_entries),
            visited=list(self.visited),
        )


def fold_observation(state: ScoreState, stats: ViewStats,
                     params: ObjectiveParams) -> ScoreState:
    """Fold one view into the cumulative state, returning a new state.

    Raises ValueError when the pose index was already folded.
    """
    if stats.pose_index in state.visited:
        raise ValueError(f"pose {stats.pose_index} already folded")
    out = state.clone()
    overlap = out.seen & stats.visible
    out.q_weight[overlap] *= params.d_q
    out.seen |= stats.visible
    out.q_response = np.maximum(out.q_response, stats.log_response)
    out.ray_count += stats.ray_count
    out.ray_sum += stats.ray_sum
    out.ray_sumsq += stats.ray_sumsq
    out.ray_min = np.minimum(out.ray_min, stats.ray_min)
    out.ray_max = np.maximum(out.ray_max, stats.ray_max)
    out.psi_sum += stats.psi_sum

    repeats = sum(1 for center, _s, _w, _e in out.texture_entries
                  if angular_distance_deg(center, stats.camera_center)
                  < REPEAT_VIEW_ANGLE_DEG)
    weight = params.d_t ** repeats
    out.texture_entries.append(
        (stats.camera_center, stats.texture_score, weight, stats.texture_empty))
    out.visited.append(stats.pose_index)
    return out


def coverage_score(state: ScoreState) -> float:
    """Fraction of faces seen at least once (pre-smoothing)."""
    return float(state.seen.sum()) / state.face_count


def geometric_complexity_score(state: ScoreState, params: ObjectiveParams) -> float:
    """Normalized sum of per-face discounted |LoG| responses, plus the unit
    offset per face (pre-smoothing). Floors at 1/(5*sigma)^2."""
    per_face = np.where(state.seen,
                        state.q_response * params.beta_q * state.q_weight + 1.0,
                        1.0)
    return float(per_face.sum()) / (state.face_count * (5.0 * params.sigma_q) ** 2)


def textural_complexity_score(state: ScoreState, params: ObjectiveParams) -> float:
    """Discount-weighted mean of per-view LBP scores (pre-smoothing)."""
    if not state.texture_entries:
        return 0.0
    total_w = sum(w for _c, _s, w, _e in state.texture_entries)
    if total_w == 0.0:
        return 0.0
    return float(sum(s * w for _c, s, w, _e in state.texture_entries) / total_w)


def _face_axis_variances(state: ScoreState) -> np.ndarray:
    """Population variance per axis of all accumulated rays per face, (J, 3).

    Exactly zero whenever an axis has seen a single value (min == max),
    otherwise the moment formula clamped at zero.
    """
    J = state.face_count
    var = np.zeros((J, 3))
    n = state.ray_count
    seen = n > 0
    if not seen.any():
        return var
    ns = n[seen, None]
    mean = state.ray_sum[seen] / ns
    v = state.ray_sumsq[seen] / ns - mean * mean
    v = np.maximum(v, 0.0)
    constant = state.ray_min[seen] == state.ray_max[seen]
    v[constant] = 0.0
    var[seen] = v
    return var


def ray_diversity_score(state: ScoreState) -> float:
    """Mean over faces of (variance product x outlier ratio), pre-smoothing."""
    seen = state.ray_count > 0
    if not seen.any():
        return 0.0
    var = _face_axis_variances(state)[seen]
    delta = var[:, 0] * var[:, 1] * var[:, 2]
    phi = state.psi_sum[seen] / state.ray_count[seen]
    return float(np.sum(delta * phi)) / state.face_count


def raw_objective(state: ScoreState, tag: str, params: ObjectiveParams) -> float:
    if tag == "C":
        return coverage_score(state)
    if tag == "Q":
        return geometric_complexity_score(state, params)
    if tag == "D":
        return ray_diversity_score(state)
    if tag == "T":
        return textural_complexity_score(state, params)
    raise ValueError(f"unknown objective tag {tag!r}")


def objective_value(state: ScoreState, tag: str, params: ObjectiveParams) -> float:
    """Smoothed value of a single objective."""
    return smooth_clip(raw_objective(state, tag, params), params.alpha3)


def score_vector(state: ScoreState, params: ObjectiveParams) -> ScoreVector:
    """The full smoothed score vector for the current state."""
    return ScoreVector(
        f_c=smooth_clip(coverage_score(state), params.alpha3),
        f_q=smooth_clip(geometric_complexity_score(state, params), params.alpha3),
        f_d=smooth_clip(ray_diversity_score(state), params.alpha3),
        f_t=smooth_clip(textural_complexity_score(state, params), params.alpha3),
    )
