import numpy as np
import pytest

from viewplan import scenegen
from viewplan.geometry import generate_sphere_poses


@pytest.fixture(scope="session")
def cube_mesh():
    return scenegen.generate_scene(scenegen.SceneSpec(kind="cube", color_mode="checker"))


@pytest.fixture(scope="session")
def icosphere1_mesh():
    return scenegen.generate_scene(
        scenegen.SceneSpec(kind="icosphere", subdivisions=1, color_mode="flat"))


@pytest.fixture(scope="session")
def ring_poses_64():
    return generate_sphere_poses(radius=3.0, count=8, mode="ring", seed=0,
                                 width=64, height=64)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)
