"""Dataset generation through the planning engine's CLI (its public interface)."""

import json
import subprocess
import sys
from pathlib import Path

TINY_CONFIG = {
    "candidates": {"generate": {"radius": 3.0, "count": 16, "mode": "random",
                                "seed": 2}},
    "render": {"resolution": 64, "texture_resolution": 64},
    "data": {
        "scenes": [
            {"kind": "cube", "color_mode": "checker", "seed": 0},
            {"kind": "blocks", "count": 4, "color_mode": "per_face_random", "seed": 1},
        ],
        "walks": 2,
        "walk_length": 4,
        "candidates_per_prefix": 3,
        "seed": 5,
    },
}


def generate_dataset(config: dict, out_dir: Path) -> Path:
    cfg_path = out_dir.parent / f"{out_dir.name}_config.json"
    cfg_path.write_text(json.dumps(config))
    subprocess.run(
        [sys.executable, "-m", "viewplan.cli", "gen-data",
         "--config", str(cfg_path), "--out", str(out_dir)],
        check=True, capture_output=True, text=True)
    return out_dir


def scene_names(dataset_root: Path) -> list[str]:
    manifest = json.loads((dataset_root / "manifest.json").read_text())
    return [s["name"] for s in manifest["scenes"]]
