"""Synthetic street-scene raycaster with exact ground truth.

A scene is a handful of axis-consistent planes in the camera's east/north/up
frame: an infinite ground plane, horizontal road and grass bands at given
perpendicular distances along the facade bearing, and a vertical facade
carrying a door rectangle whose bottom elevation is the true lowest-floor
elevation.  Because every surface is one of finitely many planes, the
rendered depthmap is exact by construction and the full pipeline can be
checked against closed-form truth:

    truth LFE  = door bottom elevation
    truth RE   = road elevation
    truth HDSL = LFE - RE
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import depthmap as dm
from .depthmap import DepthPlaneMap
from .errors import DegenerateScene
from .estimate import CameraPose, extract_traces, measure_from_traces
from .geometry import GeoPoint, PanoramaGeometry, destination_point
from .masks import LABEL_DOOR, LABEL_GRASS, LABEL_OTHER, LABEL_ROAD, LabelMask

# surface ids used during raycasting
_SKY, _GROUND, _ROAD, _GRASS, _FACADE, _DOOR = range(6)
_LABEL_LUT = np.array(
    [LABEL_OTHER, LABEL_OTHER, LABEL_ROAD, LABEL_GRASS, LABEL_OTHER, LABEL_DOOR],
    dtype=np.uint8,
)
# depth plane table slots: 1 ground, 2 road, 3 grass, 4 facade (door included)
_INDEX_LUT = np.array([0, 1, 2, 3, 4, 4], dtype=np.uint8)

DEFAULT_DEPTH_SHAPE = (256, 512)  # (height, width), the deployed map size


@dataclass(frozen=True)
class Scene:
    """Parametric street scene; distances are meters, elevations MSL."""

    ground_elevation_m: float
    road_near_m: float
    road_far_m: float
    road_elevation_m: float
    grass_near_m: float
    grass_far_m: float
    grass_elevation_m: float
    facade_distance_m: float
    facade_bearing_deg: float
    facade_width_m: float
    facade_height_m: float
    door_bottom_elevation_m: float
    door_width_m: float
    door_height_m: float
    door_lateral_m: float
    camera_height_m: float
    camera_yaw_deg: float
    camera_lat: float
    camera_lon: float

    @property
    def camera_elevation_m(self) -> float:
        return self.ground_elevation_m + self.camera_height_m

    def validate(self) -> None:
        ce = self.camera_elevation_m
        if self.camera_height_m <= 0:
            raise DegenerateScene("camera is not above the ground plane")
        if self.facade_distance_m <= 0:
            raise DegenerateScene("facade is not in front of the camera")
        for name, elev in (("road", self.road_elevation_m), ("grass", self.grass_elevation_m)):
            if elev >= ce:
                raise DegenerateScene(f"camera is not above the {name} plane")
        if not 0 < self.road_near_m < self.road_far_m:
            raise DegenerateScene("road band is empty or contains the camera")
        if not self.grass_near_m < self.grass_far_m:
            raise DegenerateScene("grass band is empty")
        if self.road_near_m < self.grass_far_m and self.grass_near_m < self.road_far_m:
            raise DegenerateScene("road and grass bands overlap")
        if self.facade_width_m <= 0 or self.facade_height_m <= 0:
            raise DegenerateScene("facade has no area")
        if self.door_width_m <= 0 or self.door_height_m <= 0:
            raise DegenerateScene("door has no area")
        top = self.ground_elevation_m + self.facade_height_m
        if not (self.ground_elevation_m <= self.door_bottom_elevation_m
                and self.door_bottom_elevation_m + self.door_height_m <= top):
            raise DegenerateScene("door does not lie on the facade vertically")
        if abs(self.door_lateral_m) + self.door_width_m / 2 > self.facade_width_m / 2:
            raise DegenerateScene("door does not lie on the facade laterally")

    @property
    def truth(self) -> dict:
        return {
            "lfe_m": self.door_bottom_elevation_m,
            "re_m": self.road_elevation_m,
            "hdsl_m": self.door_bottom_elevation_m - self.road_elevation_m,
        }

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "Scene":
        fields = set(cls.__dataclass_fields__)
        unknown = set(data) - fields
        if unknown:
            raise ValueError(f"unknown scene fields: {sorted(unknown)}")
        missing = fields - set(data)
        if missing:
            raise ValueError(f"missing scene fields: {sorted(missing)}")
        return cls(**{k: float(data[k]) for k in fields})


def load_scene(path: str) -> Scene:
    with open(path) as fh:
        return Scene.from_json(json.load(fh))


def save_scene(scene: Scene, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scene.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True, eq=False)
class RenderedScene:
    """Everything the pipeline needs, plus the closed-form truth."""

    scene: Scene
    mask: LabelMask
    depth_map: DepthPlaneMap
    pose: CameraPose
    truth: dict
    house_location: GeoPoint
    house_bearing_deg: float


def _raycast(scene: Scene, height: int, width: int, yaw_deg: float,
             block_rows: int = 512) -> np.ndarray:
    """Surface id per pixel of an equirectangular grid (uint8).

    Rays go through exact integer pixel-coordinate angles (same convention
    as the depth lookup and the trace-to-elevation conversion).  Rendered in
    row blocks; horizontal planes are skipped above the horizon and the
    facade outside its pitch band.
    """
    ce = scene.camera_elevation_m
    beta = math.radians(scene.facade_bearing_deg)
    dist = np.float32(scene.facade_distance_m)

    cols = np.arange(width, dtype=np.float64)
    az = np.radians(yaw_deg + (cols - width / 2.0) * 360.0 / width)
    delta = az - beta
    cos_d = np.cos(delta).astype(np.float32)
    sin_d = np.sin(delta).astype(np.float32)
    with np.errstate(divide="ignore", invalid="ignore"):
        v_f = dist * sin_d / cos_d  # lateral facade-hit coordinate, row-free
    facing = cos_d > 0
    v_ok = facing & (np.abs(v_f) <= scene.facade_width_m / 2)
    door_v_ok = facing & (np.abs(v_f - scene.door_lateral_m) <= scene.door_width_m / 2)

    h_ground = np.float32(scene.ground_elevation_m - ce)
    h_road = np.float32(scene.road_elevation_m - ce)
    h_grass = np.float32(scene.grass_elevation_m - ce)
    coplanar = h_ground == h_road == h_grass
    road0, road1 = np.float32(scene.road_near_m), np.float32(scene.road_far_m)
    grass0, grass1 = np.float32(scene.grass_near_m), np.float32(scene.grass_far_m)
    z0 = np.float32(scene.ground_elevation_m - ce)
    z1 = np.float32(scene.ground_elevation_m + scene.facade_height_m - ce)
    dz0 = np.float32(scene.door_bottom_elevation_m - ce)
    dz1 = np.float32(scene.door_bottom_elevation_m + scene.door_height_m - ce)

    surf = np.zeros((height, width), dtype=np.uint8)
    inf = np.float32(np.inf)
    for r0 in range(0, height, block_rows):
        r1 = min(r0 + block_rows, height)
        rows = np.arange(r0, r1, dtype=np.float64)
        theta = np.radians((height / 2.0 - rows) * 180.0 / height)
        sin_t = np.sin(theta).astype(np.float32)[:, None]
        cos_t = np.cos(theta).astype(np.float32)[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            tan_t = sin_t / cos_t
            down = sin_t < 0

            if not down.any():
                block = np.zeros((len(rows), width), dtype=np.uint8)
                tmin = np.full((1, 1), inf)
            elif coplanar:
                # all horizontal planes coincide; bands only pick the label
                t = np.where(down, h_ground / sin_t, inf)  # (R, 1)
                u = (h_ground / tan_t) * cos_d[None, :]  # (R, W)
                band = np.where(
                    (u >= road0) & (u < road1), _ROAD,
                    np.where((u >= grass0) & (u < grass1), _GRASS, _GROUND),
                ).astype(np.uint8)
                block = np.where(down, band, _SKY).astype(np.uint8)
                tmin = t
            else:
                def plane_hit(h_rel):
                    t = np.where(down, h_rel / sin_t, inf)  # (R, 1)
                    u = (h_rel / tan_t) * cos_d[None, :]  # (R, W)
                    return t, u

                t_g, u_g = plane_hit(h_ground)
                t_r, u_r = plane_hit(h_road)
                t_s, u_s = plane_hit(h_grass)
                road_ok = down & (u_r >= road0) & (u_r < road1)
                grass_ok = down & (u_s >= grass0) & (u_s < grass1)
                ground_ok = (down
                             & ~((u_g >= road0) & (u_g < road1))
                             & ~((u_g >= grass0) & (u_g < grass1)))
                stack = np.stack([
                    np.where(ground_ok, t_g, inf),
                    np.where(road_ok, t_r, inf),
                    np.where(grass_ok, t_s, inf),
                ])
                best = np.argmin(stack, axis=0).astype(np.uint8)
                tmin = np.min(stack, axis=0)
                block = np.where(np.isfinite(tmin), best + 1, _SKY).astype(np.uint8)

            # facade pitch band: |z| >= dist*|tan(theta)|, so rows with
            # tan(theta) outside [z0, z1]/dist cannot hit it at all
            if float(tan_t.max()) >= z0 / dist and float(tan_t.min()) <= z1 / dist:
                t_f = dist / (cos_t * cos_d[None, :])
                z_f = dist * tan_t / cos_d[None, :]
                f_ok = v_ok[None, :] & (z_f >= z0) & (z_f <= z1) & (t_f < tmin)
                block[f_ok] = _FACADE
                door = f_ok & (z_f >= dz0) & (z_f <= dz1) & door_v_ok[None, :]
                block[door] = _DOOR
        surf[r0:r1] = block
    return surf


def _plane_table(scene: Scene):
    ce = scene.camera_elevation_m
    beta = math.radians(scene.facade_bearing_deg)
    normals = np.array(
        [
            [0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0],
            [0.0, 0.0, -1.0],
            [math.sin(beta), math.cos(beta), 0.0],
        ],
        dtype=np.float32,
    )
    distances = np.array(
        [
            ce - scene.ground_elevation_m,
            ce - scene.road_elevation_m,
            ce - scene.grass_elevation_m,
            scene.facade_distance_m,
        ],
        dtype=np.float32,
    )
    return normals, distances


# flat per-surface colors for the RGB preview render
_PREVIEW_RGB = np.array(
    [
        [126, 178, 221],  # sky
        [121, 99, 73],    # bare ground
        [92, 92, 97],     # road asphalt
        [88, 148, 68],    # grass
        [205, 182, 147],  # facade
        [94, 57, 34],     # door
    ],
    dtype=np.uint8,
)


def render_preview(scene: Scene, geom: PanoramaGeometry) -> np.ndarray:
    """Flat-shaded RGB rendering of the scene, (height, width, 3) uint8.

    Same projection and yaw as the label mask, so a segmenter run on the
    preview can be scored pixel-for-pixel against the rendered mask.
    """
    scene.validate()
    surf = _raycast(scene, geom.height, geom.width, yaw_deg=scene.camera_yaw_deg)
    return _PREVIEW_RGB[surf]


def render_depth(scene: Scene, depth_shape=DEFAULT_DEPTH_SHAPE) -> DepthPlaneMap:
    """Render only the world-aligned plane-index depthmap."""
    scene.validate()
    dh, dw = depth_shape
    surf = _raycast(scene, dh, dw, yaw_deg=0.0)
    normals, distances = _plane_table(scene)
    return DepthPlaneMap(
        width=dw, height=dh, normals=normals, distances=distances,
        indices=_INDEX_LUT[surf],
    )


def render(scene: Scene, geom: PanoramaGeometry, depth_shape=DEFAULT_DEPTH_SHAPE,
           captured: str = "2019-06-01") -> RenderedScene:
    """Raycast the scene into a label mask, depthmap, pose and truth record."""
    scene.validate()
    surf = _raycast(scene, geom.height, geom.width, yaw_deg=scene.camera_yaw_deg)
    mask = LabelMask(_LABEL_LUT[surf])
    depth_map = render_depth(scene, depth_shape)
    camera = GeoPoint(scene.camera_lat, scene.camera_lon)
    pose = CameraPose(
        location=camera,
        elevation_msl_m=scene.camera_elevation_m,
        yaw_deg=scene.camera_yaw_deg,
        captured=captured,
    )
    return RenderedScene(
        scene=scene,
        mask=mask,
        depth_map=depth_map,
        pose=pose,
        truth=scene.truth,
        house_location=destination_point(
            camera, scene.facade_bearing_deg, scene.facade_distance_m
        ),
        house_bearing_deg=scene.facade_bearing_deg,
    )


# ---------------------------------------------------------------------------
# parameter sweep

SWEEP_DISTANCES_M = (5.0, 10.0, 20.0, 40.0)
SWEEP_CAMERA_HEIGHTS_M = (2.0, 2.5, 3.0)
SWEEP_DOOR_ABOVE_ROAD_M = (0.0, 0.5, 1.0, 2.0)
SWEEP_PANORAMA = PanoramaGeometry(width=8192, height=4096)


def sweep_scene(facade_distance_m: float, camera_height_m: float,
                door_above_road_m: float, rng: np.random.Generator) -> Scene:
    """One deterministic jittered scene for a sweep grid cell.

    Road, grass and ground share an elevation so the door height above road
    is the only HDSL contributor; the door is raised by exactly the cell
    parameter.
    """
    ground = round(float(rng.uniform(4.0, 16.0)), 3)
    bearing = round(float(rng.uniform(0.0, 360.0)), 3)
    # keep the camera nearly square to the facade and the door near the house
    # bearing: large off-axis angles add a distance-independent error floor in
    # nearest-pixel mode that would mask the depth-resolution trend the sweep
    # is meant to expose
    yaw = (bearing + float(rng.uniform(-8.0, 8.0))) % 360.0
    road_far = (0.43 + 0.04 * float(rng.random())) * facade_distance_m
    return Scene(
        ground_elevation_m=ground,
        road_near_m=0.2 * facade_distance_m,
        road_far_m=road_far,
        road_elevation_m=ground,
        grass_near_m=road_far,
        grass_far_m=road_far + 0.2 * facade_distance_m,
        grass_elevation_m=ground,
        facade_distance_m=facade_distance_m,
        facade_bearing_deg=bearing,
        facade_width_m=14.0,
        facade_height_m=7.0,
        door_bottom_elevation_m=ground + door_above_road_m,
        door_width_m=1.0,
        door_height_m=2.0,
        door_lateral_m=float(rng.uniform(-1.0, 1.0)),
        camera_height_m=camera_height_m,
        camera_yaw_deg=yaw,
        camera_lat=29.68 + float(rng.uniform(-0.002, 0.002)),
        camera_lon=-95.48 + float(rng.uniform(-0.002, 0.002)),
    )


def sweep(distances=SWEEP_DISTANCES_M, camera_heights=SWEEP_CAMERA_HEIGHTS_M,
          door_heights=SWEEP_DOOR_ABOVE_ROAD_M, geom=SWEEP_PANORAMA,
          depth_shapes=(DEFAULT_DEPTH_SHAPE,),
          modes=(dm.PLANE_EXACT, dm.NEAREST_PIXEL), seed: int = 0) -> list:
    """Render the grid and measure every cell in every sampling mode.

    Returns one row (dict) per scene x depth shape x mode with signed and
    absolute LFE/RE/HDSL errors.  Deterministic for a given seed; an empty
    grid yields an empty table.
    """
    rows = []
    cell = 0
    for d in distances:
        for ch in camera_heights:
            for dh in door_heights:
                rng = np.random.default_rng([int(seed), cell])
                scene = sweep_scene(d, ch, dh, rng)
                rendered = render(scene, geom, depth_shape=depth_shapes[0])
                traces = extract_traces(rendered.mask, rendered.pose, geom,
                                        rendered.house_bearing_deg)
                for shape in depth_shapes:
                    depth_map = (rendered.depth_map if shape == depth_shapes[0]
                                 else render_depth(scene, shape))
                    for mode in modes:
                        m = measure_from_traces(
                            traces, rendered.pose, depth_map, geom, mode=mode,
                        )
                        truth = scene.truth
                        rows.append({
                            "facade_distance_m": d,
                            "camera_height_m": ch,
                            "door_above_road_m": dh,
                            "depth_height": shape[0],
                            "depth_width": shape[1],
                            "mode": mode,
                            "lfe_m": m.lfe.value,
                            "re_m": m.re.value,
                            "hdsl_m": m.hdsl,
                            "truth_lfe_m": truth["lfe_m"],
                            "truth_re_m": truth["re_m"],
                            "truth_hdsl_m": truth["hdsl_m"],
                            "lfe_error_m": m.lfe.value - truth["lfe_m"],
                            "re_error_m": m.re.value - truth["re_m"],
                            "hdsl_error_m": m.hdsl - truth["hdsl_m"],
                            "lfe_abs_error_m": abs(m.lfe.value - truth["lfe_m"]),
                            "re_abs_error_m": abs(m.re.value - truth["re_m"]),
                            "hdsl_abs_error_m": abs(m.hdsl - truth["hdsl_m"]),
                        })
                cell += 1
    return rows
