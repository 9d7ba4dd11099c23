from pathlib import Path

import pytest

from gazepick.geometry import CollisionPlane, PlaneHit, Vec3
from gazepick.simworld import load_scene

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def demo_scene_path():
    return FIXTURES / "scenes" / "demo_tabletop.json"


@pytest.fixture
def two_mice_scene_path():
    return FIXTURES / "scenes" / "two_mice.json"


@pytest.fixture
def demo_scene(demo_scene_path):
    # Scenes mutate during grasps; always hand tests a fresh instance.
    return load_scene(demo_scene_path)


@pytest.fixture
def two_mice_scene(two_mice_scene_path):
    return load_scene(two_mice_scene_path)


@pytest.fixture
def unit_plane():
    """The 1 m x 1 m plane at z=1 with a 100x100 pixel grid."""
    return CollisionPlane(
        origin=Vec3(0.0, 0.0, 1.0),
        u_axis=Vec3(1.0, 0.0, 0.0),
        v_axis=Vec3(0.0, 1.0, 0.0),
        width_m=1.0,
        height_m=1.0,
        res_w=100,
        res_h=100,
    )


def hit_at(x: float, y: float, z: float = 0.0) -> PlaneHit:
    """Synthetic plane hit for feeding the fixation detector directly;
    pixel coordinates just mirror the point at 100 px/m."""
    return PlaneHit(point=Vec3(x, y, z), u=x * 100.0, v=y * 100.0, distance=1.0)
