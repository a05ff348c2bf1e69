"""Score predictor: residual image encoder, positional pose encoder, two heads.

Head G regresses the cumulative score vector of the visited views; head H
regresses the score vector after folding one unseen candidate pose. H sees the
candidate's encoded extrinsics only, never a candidate image.
"""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn as nn

DEFAULT_BANDS = 6
POSE_DIM = 12


def positional_encode(extrinsics, bands: int = DEFAULT_BANDS):
    """Per scalar: the raw value plus sin/cos at frequencies 2^b * pi.

    Accepts an array-like of 12 values or a batched tensor (..., 12); output
    has 12 * (2 * bands + 1) features.
    """
    if bands < 1:
        raise ValueError("bands must be >= 1")
    x = torch.as_tensor(np.asarray(extrinsics, dtype=np.float32)) \
        if not torch.is_tensor(extrinsics) else extrinsics
    freqs = (2.0 ** torch.arange(bands, device=x.device)) * math.pi
    ang = x.unsqueeze(-1) * freqs                        # (..., 12, bands)
    enc = torch.cat([x.unsqueeze(-1), torch.sin(ang), torch.cos(ang)], dim=-1)
    return enc.reshape(*x.shape[:-1], x.shape[-1] * (2 * bands + 1))


class ResidualBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.GroupNorm(8, c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1, bias=False)
        self.bn2 = nn.GroupNorm(8, c_out)
        self.act = nn.ReLU(inplace=True)
        self.skip = None
        if stride != 1 or c_in != c_out:
            self.skip = nn.Sequential(
                nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False),
                nn.GroupNorm(8, c_out))

    def forward(self, x):
        identity = x if self.skip is None else self.skip(x)
        out = self.act(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act(out + identity)


class ImageEncoder(nn.Module):
    """Four residual stages on 128^2 inputs, well under a million parameters.

    Inputs are standardized per image and channel: absolute palette is a
    scene fingerprint that does not transfer to unseen scenes, while the
    texture and shading structure the scores depend on survives the shift.
    """

    def __init__(self, embed_dim: int = 128):
        super().__init__()
        self.stem = nn.Sequential(
            nn.AvgPool2d(2),                                   # 128 -> 64
            nn.Conv2d(3, 16, 3, stride=2, padding=1, bias=False),  # -> 32
            nn.GroupNorm(8, 16),
            nn.ReLU(inplace=True),
        )
        self.stages = nn.Sequential(
            ResidualBlock(16, 32, stride=2),    # -> 16
            ResidualBlock(32, 64, stride=2),    # -> 8
            ResidualBlock(64, 128, stride=2),   # -> 4
            ResidualBlock(128, 128, stride=1),
        )
        self.head = nn.Linear(128, embed_dim)

    def forward(self, x):
        mean = x.mean(dim=(2, 3), keepdim=True)
        std = x.std(dim=(2, 3), keepdim=True)
        x = (x - mean) / (std + 1e-5)
        feats = self.stages(self.stem(x))
        pooled = feats.mean(dim=(2, 3))
        return self.head(pooled)


class PoseEncoder(nn.Module):
    def __init__(self, bands: int = DEFAULT_BANDS, embed_dim: int = 128):
        super().__init__()
        self.bands = bands
        in_dim = POSE_DIM * (2 * bands + 1)
        self.net = nn.Sequential(
            nn.Linear(in_dim, embed_dim),
            nn.ReLU(inplace=True),
            nn.Linear(embed_dim, embed_dim),
        )

    def forward(self, extrinsics):
        return self.net(positional_encode(extrinsics, self.bands))


def _head(in_dim: int, hidden: int = 128) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden),
        nn.ReLU(inplace=True),
        nn.Linear(hidden, hidden),
        nn.ReLU(inplace=True),
        nn.Linear(hidden, 4),
        nn.Sigmoid(),
    )


def camera_directions(extrinsics, eps: float = 1e-8):
    """Unit direction of the camera center from the origin, (..., 3).

    Extrinsics are 12 row-major floats of the 3x4 camera-to-world matrix, so
    the center sits at flat indices 3, 7, 11.
    """
    centers = torch.stack([extrinsics[..., 3], extrinsics[..., 7],
                           extrinsics[..., 11]], dim=-1)
    return centers / (centers.norm(dim=-1, keepdim=True) + eps)


def _set_dispersion(dirs, mask):
    """Order-invariant spread statistics of the visited view directions.

    Returns (B, 3): resultant length |mean dir| (1 = clustered), mean pairwise
    cosine, min pairwise cosine. Single-view sets count as fully clustered.
    """
    m = mask.unsqueeze(-1).to(dirs.dtype)
    counts = mask.sum(dim=1).clamp(min=1).to(dirs.dtype)
    mean_dir = (dirs * m).sum(dim=1) / counts.unsqueeze(-1)
    resultant = mean_dir.norm(dim=-1)

    cos = torch.einsum("bnd,bmd->bnm", dirs * m, dirs * m)
    pair_mask = (mask.unsqueeze(1) & mask.unsqueeze(2)).to(dirs.dtype)
    eye = torch.eye(mask.shape[1], device=dirs.device).unsqueeze(0)
    off = pair_mask * (1.0 - eye)
    n_pairs = off.sum(dim=(1, 2))
    single = n_pairs == 0
    mean_cos = (cos * off).sum(dim=(1, 2)) / n_pairs.clamp(min=1)
    min_cos = (cos * off + (1.0 - off) * 2.0).flatten(1).min(dim=1).values
    mean_cos = torch.where(single, torch.ones_like(mean_cos), mean_cos)
    min_cos = torch.where(single, torch.ones_like(min_cos), min_cos)
    return torch.stack([resultant, mean_cos, min_cos], dim=-1)


def _candidate_relation(cand_dirs, dirs, mask):
    """How the candidate direction sits relative to the visited set, (B, 2):
    max and mean cosine to the visited directions."""
    cos = torch.einsum("bd,bnd->bn", cand_dirs, dirs)
    m = mask.to(cos.dtype)
    counts = m.sum(dim=1).clamp(min=1)
    mean_cos = (cos * m).sum(dim=1) / counts
    max_cos = (cos * m + (m - 1.0) * 2.0).max(dim=1).values
    return torch.stack([max_cos, mean_cos], dim=-1)


class ScorePredictor(nn.Module):
    """Mean-pooled fusion of per-view (image, pose) embeddings.

    The pooled context carries a log-count feature and explicit set-dispersion
    statistics of the visited view directions: a plain mean hides both how
    many views were folded and how spread they are, and the cumulative
    coverage target depends on exactly those. The candidate head additionally
    sees the candidate's angular relation to the visited set. Everything
    stays order-invariant.
    """

    def __init__(self, embed_dim: int = 128, bands: int = DEFAULT_BANDS):
        super().__init__()
        self.image_encoder = ImageEncoder(embed_dim)
        self.pose_encoder = PoseEncoder(bands, embed_dim)
        self.fuse = nn.Sequential(
            nn.Linear(2 * embed_dim, embed_dim),
            nn.Dropout(0.1))
        ctx = embed_dim + 1 + 3
        self.head_current = _head(ctx)                        # G: scores so far
        self.head_candidate = _head(ctx + embed_dim + 2)      # H: after the fold

    def context(self, images, visited_poses, mask):
        """Order-invariant context vector from the visited set.

        images (B, N, 3, H, W); visited_poses (B, N, 12); mask (B, N) with
        True at real entries.
        """
        b, n = mask.shape
        flat_idx = mask.reshape(-1)
        flat_images = images.reshape(b * n, *images.shape[2:])[flat_idx]
        img_emb = self.image_encoder(flat_images)
        pose_emb = self.pose_encoder(visited_poses.reshape(b * n, POSE_DIM)[flat_idx])
        fused = self.fuse(torch.cat([img_emb, pose_emb], dim=-1))

        context = torch.zeros(b * n, fused.shape[-1], device=fused.device,
                              dtype=fused.dtype)
        context[flat_idx] = fused
        context = context.reshape(b, n, -1)
        counts = mask.sum(dim=1, keepdim=True).clamp(min=1).to(context.dtype)
        pooled = context.sum(dim=1) / counts

        dirs = camera_directions(visited_poses) * mask.unsqueeze(-1).to(context.dtype)
        spread = _set_dispersion(dirs, mask)
        return torch.cat([pooled, counts.log(), spread], dim=-1)

    def forward(self, images, visited_poses, mask, candidate_pose):
        ctx = self.context(images, visited_poses, mask)
        current = self.head_current(ctx)
        cand_emb = self.pose_encoder(candidate_pose)
        dirs = camera_directions(visited_poses) * mask.unsqueeze(-1).to(ctx.dtype)
        relation = _candidate_relation(camera_directions(candidate_pose), dirs, mask)
        after = self.head_candidate(torch.cat([ctx, cand_emb, relation], dim=-1))
        return current, after


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
