"""Greedy budget-constrained trajectory planning over a candidate pose set.

The planner seeds the trajectory with pseudo-coverage poses at the coordinate
extrema, then repeatedly maximizes a single objective per step following an
interleaved schedule. Candidate views are rendered once and cached as foldable
statistics, so each greedy step is an O(candidates x faces) scan.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import CameraPose, PoseSet, TriangleMesh
from .objectives import (
    OBJECTIVE_TAGS,
    ObjectiveParams,
    ScoreState,
    ScoreVector,
    ViewStats,
    compute_view_stats,
    fold_observation,
    objective_value,
    score_vector,
)
from .visibility import MeshBVH, observe, render_view

DEFAULT_SEQUENCE = ("C", "Q", "Q", "D", "D", "T")
DEFAULT_RESOLUTION = 128
DEFAULT_TEXTURE_RESOLUTION = 256

INIT_TAG = "INIT"
RANDOM_TAG = "RANDOM"


@dataclass(frozen=True)
class PlannerConfig:
    """Budget, objective schedule, and scoring knobs for one planning run."""

    budget: int
    sequence: tuple[str, ...] = DEFAULT_SEQUENCE
    n_init: int = 3
    params: ObjectiveParams = field(default_factory=ObjectiveParams)
    seed: int = 0
    sequence_indexing: str = "restart"  # or "absolute" (step % len)
    resolution: int = DEFAULT_RESOLUTION
    texture_resolution: int = DEFAULT_TEXTURE_RESOLUTION
    threads: int = 1
    keep_score_tables: bool = False

    def validate(self, candidate_count: int) -> None:
        if self.budget < 1:
            raise ValueError("budget must be positive")
        if self.n_init < 0:
            raise ValueError("n_init must be non-negative")
        if self.n_init > self.budget:
            raise ValueError("n_init exceeds budget")
        if self.budget > candidate_count:
            raise ValueError("budget exceeds candidate count")
        if not self.sequence:
            raise ValueError("sequence must be non-empty")
        for tag in self.sequence:
            if tag not in OBJECTIVE_TAGS:
                raise ValueError(f"unknown objective tag {tag!r} in sequence")
        if self.sequence_indexing not in ("restart", "absolute"):
            raise ValueError("sequence_indexing must be 'restart' or 'absolute'")

    def objective_at(self, step: int) -> str:
        """Objective tag for a 1-based greedy step (step > n_init)."""
        if self.sequence_indexing == "absolute":
            idx = step % len(self.sequence)
        else:
            idx = (step - self.n_init - 1) % len(self.sequence)
        return self.sequence[idx]


@dataclass(frozen=True)
class TrajectoryStep:
    step: int
    pose: int
    objective: str
    scores: ScoreVector
    candidate_scores: dict[int, float] | None = None


@dataclass(frozen=True)
class Trajectory:
    budget: int
    sequence: tuple[str, ...]
    steps: tuple[TrajectoryStep, ...]

    def pose_indices(self) -> list[int]:
        return [s.pose for s in self.steps]

    def final_scores(self) -> ScoreVector:
        return self.steps[-1].scores

    def to_json(self) -> str:
        doc = {
            "budget": self.budget,
            "sequence": list(self.sequence),
            "steps": [
                {
                    "step": s.step,
                    "pose": s.pose,
                    "objective": s.objective,
                    "scores": s.scores.as_dict(),
                }
                for s in self.steps
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Trajectory":
        doc = json.loads(text)
        steps = tuple(
            TrajectoryStep(
                step=int(s["step"]),
                pose=int(s["pose"]),
                objective=s["objective"],
                scores=ScoreVector(
                    f_c=s["scores"]["f_C"], f_q=s["scores"]["f_Q"],
                    f_d=s["scores"]["f_D"], f_t=s["scores"]["f_T"]),
            )
            for s in doc["steps"]
        )
        return cls(int(doc["budget"]), tuple(doc["sequence"]), steps)

    def to_csv(self) -> str:
        lines = ["step,pose_index,f_C,f_Q,f_D,f_T"]
        for s in self.steps:
            d = s.scores.as_dict()
            lines.append(f"{s.step},{s.pose},{d['f_C']:.6f},{d['f_Q']:.6f},"
                         f"{d['f_D']:.6f},{d['f_T']:.6f}")
        return "\n".join(lines) + "\n"

    def candidate_table_csv(self) -> str:
        lines = ["step,objective,pose_index,score"]
        for s in self.steps:
            if not s.candidate_scores:
                continue
            for k in sorted(s.candidate_scores):
                lines.append(f"{s.step},{s.objective},{k},{s.candidate_scores[k]:.9f}")
        return "\n".join(lines) + "\n"


class SceneEvaluator:
    """Renders candidate views on demand and caches their foldable statistics.

    Safe to share across planning runs on the same (mesh, candidates, params,
    resolution) so repeated budget sweeps pay for each render once.
    """

    def __init__(self, mesh: TriangleMesh, candidates: PoseSet,
                 params: ObjectiveParams | None = None,
                 resolution: int = DEFAULT_RESOLUTION,
                 texture_resolution: int | None = DEFAULT_TEXTURE_RESOLUTION):
        self.mesh = mesh
        self.candidates = candidates
        self.params = params or ObjectiveParams()
        self.resolution = resolution
        self.texture_resolution = texture_resolution or resolution
        self.bvh = MeshBVH(mesh)
        self._stats: dict[int, ViewStats] = {}

    def _sized(self, pose: CameraPose, size: int) -> CameraPose:
        if pose.width == size and pose.height == size:
            return pose
        return replace(pose, width=size, height=size)

    def render(self, pose_index: int, size: int | None = None):
        pose = self._sized(self.candidates[pose_index], size or self.resolution)
        return render_view(self.mesh, pose, self.bvh)

    def stats(self, pose_index: int) -> ViewStats:
        cached = self._stats.get(pose_index)
        if cached is not None:
            return cached
        pose = self.candidates[pose_index]
        buffers = self.render(pose_index)
        obs = observe(buffers, pose_index)
        if self.texture_resolution != self.resolution:
            tex = self.render(pose_index, self.texture_resolution)
            tex_color, tex_ids = tex.color, tex.face_id
        else:
            tex_color, tex_ids = None, None
        vs = compute_view_stats(self.mesh, buffers, obs, self.params, pose.center,
                                texture_color=tex_color, texture_face_id=tex_ids)
        self._stats[pose_index] = vs
        return vs

    def precompute(self, indices=None, threads: int = 1) -> None:
        indices = list(range(len(self.candidates))) if indices is None else list(indices)
        missing = [k for k in indices if k not in self._stats]
        if threads > 1 and len(missing) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(self.stats, missing))
        else:
            for k in missing:
                self.stats(k)


def pseudo_coverage_init(candidates: PoseSet, n_init: int) -> list[int]:
    """Seed poses at the extremum of |coordinate| along x, y, z in turn."""
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    if n_init > len(candidates):
        raise ValueError("n_init exceeds candidate count")
    centers = candidates.centers()
    chosen: list[int] = []
    taken = np.zeros(len(candidates), dtype=bool)
    for i in range(n_init):
        axis = i % 3
        coord = np.abs(centers[:, axis]).copy()
        coord[taken] = -np.inf
        k = int(np.argmax(coord))  # argmax picks the lowest index on ties
        chosen.append(k)
        taken[k] = True
    return chosen


def plan_trajectory(mesh: TriangleMesh, candidates: PoseSet, config: PlannerConfig,
                    evaluator: SceneEvaluator | None = None) -> Trajectory:
    """Greedy interleaved-objective planning (deterministic per config)."""
    config.validate(len(candidates))
    if evaluator is None:
        evaluator = SceneEvaluator(mesh, candidates, config.params,
                                   config.resolution, config.texture_resolution)
    if config.threads > 1:
        evaluator.precompute(threads=config.threads)

    state = ScoreState.empty(mesh.face_count)
    steps: list[TrajectoryStep] = []
    visited: set[int] = set()

    for step, k in enumerate(pseudo_coverage_init(candidates, config.n_init), start=1):
        state = fold_observation(state, evaluator.stats(k), config.params)
        visited.add(k)
        steps.append(TrajectoryStep(step, k, INIT_TAG, score_vector(state, config.params)))

    for step in range(config.n_init + 1, config.budget + 1):
        tag = config.objective_at(step)
        best_k = -1
        best_val = -np.inf
        table: dict[int, float] | None = {} if config.keep_score_tables else None
        for k in range(len(candidates)):
            if k in visited:
                continue
            cand = fold_observation(state, evaluator.stats(k), config.params)
            val = objective_value(cand, tag, config.params)
            if table is not None:
                table[k] = val
            if val > best_val:
                best_val = val
                best_k = k
        state = fold_observation(state, evaluator.stats(best_k), config.params)
        visited.add(best_k)
        steps.append(TrajectoryStep(step, best_k, tag,
                                    score_vector(state, config.params), table))

    return Trajectory(config.budget, tuple(config.sequence), tuple(steps))


def plan_random(mesh: TriangleMesh, candidates: PoseSet, budget: int, seed: int,
                params: ObjectiveParams | None = None,
                evaluator: SceneEvaluator | None = None) -> Trajectory:
    """Uniform sample of `budget` distinct poses, scored along the way."""
    if budget < 1 or budget > len(candidates):
        raise ValueError("budget must be in [1, candidate count]")
    params = params or ObjectiveParams()
    if evaluator is None:
        evaluator = SceneEvaluator(mesh, candidates, params)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(candidates), size=budget, replace=False)

    state = ScoreState.empty(mesh.face_count)
    steps = []
    for step, k in enumerate(picks.tolist(), start=1):
        state = fold_observation(state, evaluator.stats(k), params)
        steps.append(TrajectoryStep(step, int(k), RANDOM_TAG,
                                    score_vector(state, params)))
    return Trajectory(budget, (RANDOM_TAG,), tuple(steps))


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    failures: list[str]


def audit_trajectory(mesh: TriangleMesh, candidates: PoseSet, config: PlannerConfig,
                     trajectory: Trajectory,
                     evaluator: SceneEvaluator | None = None) -> AuditReport:
    """Re-verify greedy dominance at every non-INIT step of a trajectory.

    Rebuilds the cumulative state step by step; at each greedy step every
    then-unseen candidate is rescored and the selected pose must score at
    least as high as all of them.
    """
    if evaluator is None:
        evaluator = SceneEvaluator(mesh, candidates, config.params,
                                   config.resolution, config.texture_resolution)
    failures: list[str] = []
    state = ScoreState.empty(mesh.face_count)
    visited: set[int] = set()

    for s in trajectory.steps:
        if s.objective not in (INIT_TAG, RANDOM_TAG):
            chosen_val = None
            for k in range(len(candidates)):
                if k in visited:
                    continue
                val = objective_value(
                    fold_observation(state, evaluator.stats(k), config.params),
                    s.objective, config.params)
                if k == s.pose:
                    chosen_val = val
            if chosen_val is None:
                failures.append(f"step {s.step}: pose {s.pose} was already visited")
            else:
                for k in range(len(candidates)):
                    if k in visited or k == s.pose:
                        continue
                    val = objective_value(
                        fold_observation(state, evaluator.stats(k), config.params),
                        s.objective, config.params)
                    if val > chosen_val:
                        failures.append(
                            f"step {s.step}: pose {k} scores {val:.9f} > "
                            f"selected {s.pose} at {chosen_val:.9f}")
        state = fold_observation(state, evaluator.stats(s.pose), config.params)
        visited.add(s.pose)

    return AuditReport(ok=not failures, failures=failures)
