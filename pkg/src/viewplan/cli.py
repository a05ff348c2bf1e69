"""Command-line entry point: score, plan, gen-data, export-transforms, audit.

Configuration is a single strict JSON document; unknown keys are rejected so
typos fail loudly (exit 2) instead of silently falling back to defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from .geometry import PoseSet, generate_sphere_poses, load_mesh_obj
from .objectives import ObjectiveParams, ScoreState, fold_observation, score_vector
from .planner import (
    DEFAULT_RESOLUTION,
    DEFAULT_TEXTURE_RESOLUTION,
    PlannerConfig,
    SceneEvaluator,
    Trajectory,
    audit_trajectory,
    plan_trajectory,
)
from .scenegen import SceneSpec, export_training_tuples, export_transforms, generate_scene, random_walk_trajectories
from .visibility import dump_buffers_png

COMMANDS = ("score", "plan", "gen-data", "export-transforms", "audit")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


def _require_keys(section: dict, allowed: set[str], context: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{context}.{key}'")


def _scene_spec_from(section: dict, context: str) -> SceneSpec:
    allowed = {f.name for f in dataclass_fields(SceneSpec)}
    _require_keys(section, allowed, context)
    try:
        return SceneSpec(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _load_scene(cfg: dict):
    section = cfg.get("scene")
    if not isinstance(section, dict):
        raise ConfigError("missing section 'scene'")
    _require_keys(section, {"obj", "generate"}, "scene")
    has_obj = "obj" in section
    has_gen = "generate" in section
    if has_obj == has_gen:
        raise ConfigError("'scene' needs exactly one of 'obj' or 'generate'")
    if has_obj:
        from .geometry import normalize_scale

        return normalize_scale(load_mesh_obj(section["obj"]))
    return generate_scene(_scene_spec_from(section["generate"], "scene.generate"))


def _load_candidates(cfg: dict, resolution: int | None) -> PoseSet:
    section = cfg.get("candidates")
    if not isinstance(section, dict):
        raise ConfigError("missing section 'candidates'")
    _require_keys(section, {"poses", "generate"}, "candidates")
    has_file = "poses" in section
    has_gen = "generate" in section
    if has_file == has_gen:
        raise ConfigError("'candidates' needs exactly one of 'poses' or 'generate'")
    if has_file:
        return PoseSet.load(section["poses"])
    gen = dict(section["generate"])
    _require_keys(gen, {"radius", "count", "mode", "seed", "elevation_deg",
                        "fov_y_deg", "width", "height"}, "candidates.generate")
    if resolution is not None:
        gen.setdefault("width", resolution)
        gen.setdefault("height", resolution)
    try:
        return generate_sphere_poses(**gen)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"candidates.generate: {exc}") from exc


def _objective_params(cfg: dict) -> ObjectiveParams:
    section = cfg.get("objectives", {})
    allowed = {f.name for f in dataclass_fields(ObjectiveParams)}
    _require_keys(section, allowed, "objectives")
    try:
        return ObjectiveParams(**section)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"objectives: {exc}") from exc


def _render_settings(cfg: dict, args) -> tuple[int, int]:
    section = cfg.get("render", {})
    _require_keys(section, {"resolution", "texture_resolution"}, "render")
    resolution = section.get("resolution", DEFAULT_RESOLUTION)
    texture = section.get("texture_resolution", DEFAULT_TEXTURE_RESOLUTION)
    if args.resolution is not None:
        resolution = texture = args.resolution
    return int(resolution), int(texture)


def _planner_config(cfg: dict, args, params: ObjectiveParams,
                    resolution: int, texture_resolution: int) -> PlannerConfig:
    section = cfg.get("planner")
    if not isinstance(section, dict):
        raise ConfigError("missing section 'planner'")
    allowed = {"budget", "sequence", "n_init", "seed", "sequence_indexing"}
    _require_keys(section, allowed, "planner")
    if "budget" not in section:
        raise ConfigError("missing key 'planner.budget'")
    seed = args.seed if args.seed is not None else section.get("seed", 0)
    config = PlannerConfig(
        budget=int(section["budget"]),
        sequence=tuple(section.get("sequence", list("CQQDDT"))),
        n_init=int(section.get("n_init", 3)),
        params=params,
        seed=int(seed),
        sequence_indexing=section.get("sequence_indexing", "restart"),
        resolution=resolution,
        texture_resolution=texture_resolution,
        threads=args.threads,
        keep_score_tables=args.verbose,
    )
    return config


def _write_manifest(out_dir: Path, command: str, cfg: dict, params: ObjectiveParams,
                    extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "config": cfg,
        "objective_params": params.__dict__,
    }
    if extra:
        doc.update(extra)
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, indent=2))


def cmd_plan(cfg: dict, args, out_dir: Path) -> int:
    params = _objective_params(cfg)
    resolution, texture = _render_settings(cfg, args)
    mesh = _load_scene(cfg)
    candidates = _load_candidates(cfg, resolution)
    config = _planner_config(cfg, args, params, resolution, texture)
    try:
        config.validate(len(candidates))
    except ValueError as exc:
        raise ConfigError(f"planner: {exc}") from exc

    evaluator = SceneEvaluator(mesh, candidates, params, resolution, texture)
    trajectory = plan_trajectory(mesh, candidates, config, evaluator)
    (out_dir / "trajectory.json").write_text(trajectory.to_json())
    (out_dir / "trajectory.csv").write_text(trajectory.to_csv())
    if args.verbose:
        (out_dir / "candidates.csv").write_text(trajectory.candidate_table_csv())
        buffers = evaluator.render(trajectory.steps[0].pose)
        dump_buffers_png(buffers, out_dir / "debug", "step1")
    _write_manifest(out_dir, "plan", cfg, params,
                    {"budget": config.budget, "seed": config.seed})
    if args.verbose:
        print(trajectory.to_csv(), end="")
    return 0


def cmd_score(cfg: dict, args, out_dir: Path) -> int:
    params = _objective_params(cfg)
    resolution, texture = _render_settings(cfg, args)
    mesh = _load_scene(cfg)
    candidates = _load_candidates(cfg, resolution)
    section = cfg.get("score", {})
    _require_keys(section, {"visited"}, "score")
    visited = section.get("visited", [])
    if not isinstance(visited, list) or any(not isinstance(k, int) for k in visited):
        raise ConfigError("'score.visited' must be a list of pose indices")
    for k in visited:
        if not 0 <= k < len(candidates):
            raise ConfigError(f"'score.visited' index {k} out of range")

    evaluator = SceneEvaluator(mesh, candidates, params, resolution, texture)
    state = ScoreState.empty(mesh.face_count)
    rows = ["step,pose_index,f_C,f_Q,f_D,f_T"]
    for step, k in enumerate(visited, start=1):
        state = fold_observation(state, evaluator.stats(k), params)
        d = score_vector(state, params).as_dict()
        rows.append(f"{step},{k},{d['f_C']:.6f},{d['f_Q']:.6f},{d['f_D']:.6f},{d['f_T']:.6f}")
    final = score_vector(state, params)
    (out_dir / "scores.csv").write_text("\n".join(rows) + "\n")
    (out_dir / "score.json").write_text(
        json.dumps({"visited": visited, "scores": final.as_dict()}, indent=2))
    _write_manifest(out_dir, "score", cfg, params)
    print(json.dumps(final.as_dict()))
    return 0


def cmd_gen_data(cfg: dict, args, out_dir: Path) -> int:
    params = _objective_params(cfg)
    resolution, texture = _render_settings(cfg, args)
    section = cfg.get("data")
    if not isinstance(section, dict):
        raise ConfigError("missing section 'data'")
    _require_keys(section, {"scenes", "walks", "walk_length", "candidates_per_prefix",
                            "seed"}, "data")
    scene_specs = section.get("scenes")
    if not scene_specs:
        raise ConfigError("missing key 'data.scenes'")
    walks_per_scene = int(section.get("walks", 3))
    walk_length = int(section.get("walk_length", 30))
    cap = int(section.get("candidates_per_prefix", 16))
    seed = args.seed if args.seed is not None else int(section.get("seed", 0))

    candidates = _load_candidates(cfg, resolution)
    scene_entries = []
    for i, raw in enumerate(scene_specs):
        spec = _scene_spec_from(raw, f"data.scenes[{i}]")
        mesh = generate_scene(spec)
        walks = random_walk_trajectories(candidates, walk_length, walks_per_scene,
                                         seed=seed + i)
        scene_dir = export_training_tuples(
            mesh, candidates, walks, params, out_dir, scene_name=spec.name(),
            candidates_per_prefix=cap, seed=seed + i, resolution=resolution,
            texture_resolution=texture, threads=args.threads)
        manifest = json.loads((scene_dir / "manifest.json").read_text())
        scene_entries.append({
            "name": spec.name(),
            "path": str(scene_dir.relative_to(out_dir)),
            "tuple_count": len(manifest["tuples"]),
        })
        if args.verbose:
            print(f"scene {spec.name()}: {len(manifest['tuples'])} tuples")

    (out_dir / "manifest.json").write_text(json.dumps({
        "scenes": scene_entries,
        "resolution": resolution,
        "walk_length": walk_length,
        "seed": seed,
    }, indent=2))
    _write_manifest(out_dir, "gen-data", cfg, params)
    return 0


def cmd_export_transforms(cfg: dict, args, out_dir: Path) -> int:
    resolution, _ = _render_settings(cfg, args)
    candidates = _load_candidates(cfg, resolution)
    section = cfg.get("transforms")
    if not isinstance(section, dict):
        raise ConfigError("missing section 'transforms'")
    _require_keys(section, {"trajectory", "output"}, "transforms")
    if "trajectory" not in section:
        raise ConfigError("missing key 'transforms.trajectory'")
    trajectory = Trajectory.from_json(Path(section["trajectory"]).read_text())
    out_name = section.get("output", "transforms.json")
    export_transforms(candidates, trajectory, out_dir / out_name)
    return 0


def cmd_audit(cfg: dict, args, out_dir: Path) -> int:
    params = _objective_params(cfg)
    resolution, texture = _render_settings(cfg, args)
    mesh = _load_scene(cfg)
    candidates = _load_candidates(cfg, resolution)
    section = cfg.get("audit")
    if not isinstance(section, dict) or "trajectory" not in section:
        raise ConfigError("missing key 'audit.trajectory'")
    _require_keys(section, {"trajectory"}, "audit")
    trajectory = Trajectory.from_json(Path(section["trajectory"]).read_text())
    config = _planner_config(cfg, args, params, resolution, texture)
    report = audit_trajectory(mesh, candidates, config, trajectory)
    for line in report.failures:
        print(f"AUDIT FAIL {line}", file=sys.stderr)
    print("audit: OK" if report.ok else "audit: FAILED")
    return 0 if report.ok else 1


_TOP_LEVEL_KEYS = {"scene", "candidates", "planner", "objectives", "render",
                   "score", "data", "transforms", "audit"}


def run(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="viewplan",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config document")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--resolution", type=int, default=None,
                        help="override render and texture resolution")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be a JSON object")
        _require_keys(cfg, _TOP_LEVEL_KEYS, "config")

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        handler = {
            "plan": cmd_plan,
            "score": cmd_score,
            "gen-data": cmd_gen_data,
            "export-transforms": cmd_export_transforms,
            "audit": cmd_audit,
        }[args.command]
        return handler(cfg, args, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
