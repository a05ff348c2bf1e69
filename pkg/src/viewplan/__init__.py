"""View-planning engine: surrogate scoring of camera poses and greedy trajectories."""

__version__ = "0.1.0"

from .geometry import (
    CameraPose,
    PoseSet,
    TriangleMesh,
    generate_sphere_poses,
    load_mesh_obj,
    normalize_scale,
)
from .objectives import ObjectiveParams, ScoreState, ScoreVector
from .planner import PlannerConfig, Trajectory, plan_random, plan_trajectory
from .scenegen import SceneSpec, generate_scene
from .visibility import ViewBuffers, ViewObservation, cast_ray, observe, render_view

__all__ = [
    "CameraPose",
    "ObjectiveParams",
    "PlannerConfig",
    "PoseSet",
    "SceneSpec",
    "ScoreState",
    "ScoreVector",
    "Trajectory",
    "TriangleMesh",
    "ViewBuffers",
    "ViewObservation",
    "cast_ray",
    "generate_scene",
    "generate_sphere_poses",
    "load_mesh_obj",
    "normalize_scale",
    "observe",
    "plan_random",
    "plan_trajectory",
    "render_view",
]
