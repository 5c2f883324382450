import numpy as np
import pytest

from streetelev.geometry import PanoramaGeometry
from streetelev.synth import Scene, render


def canonical_scene(**overrides) -> Scene:
    """A well-behaved suburban scene: flat lot, door 0.8 m above the road."""
    fields = dict(
        ground_elevation_m=10.0,
        road_near_m=2.0,
        road_far_m=4.5,
        road_elevation_m=10.0,
        grass_near_m=4.5,
        grass_far_m=6.5,
        grass_elevation_m=10.0,
        facade_distance_m=10.0,
        facade_bearing_deg=30.0,
        facade_width_m=14.0,
        facade_height_m=7.0,
        door_bottom_elevation_m=10.8,
        door_width_m=1.0,
        door_height_m=2.0,
        door_lateral_m=0.4,
        camera_height_m=2.5,
        camera_yaw_deg=25.0,
        camera_lat=29.6800,
        camera_lon=-95.4800,
    )
    fields.update(overrides)
    return Scene(**fields)


@pytest.fixture(scope="session")
def scene():
    return canonical_scene()


@pytest.fixture(scope="session")
def rendered(scene):
    """Moderate-resolution render shared by tests that only read from it."""
    return render(scene, PanoramaGeometry(width=2048, height=1024),
                  depth_shape=(256, 512))


def random_plane_map(rng: np.random.Generator, max_planes: int = 30):
    """A structurally valid DepthPlaneMap with random planes and indices."""
    from streetelev.depthmap import DepthPlaneMap

    n_planes = int(rng.integers(1, max_planes + 1))
    height = int(rng.integers(1, 40))
    width = int(rng.integers(1, 80))
    normals = rng.normal(size=(n_planes, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    distances = rng.uniform(0.0, 100.0, size=n_planes)
    indices = rng.integers(0, n_planes + 1, size=(height, width))
    return DepthPlaneMap(
        width=width,
        height=height,
        normals=normals.astype(np.float32),
        distances=distances.astype(np.float32),
        indices=indices.astype(np.uint8),
    )
