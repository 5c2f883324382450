"""Spherical and equirectangular geometry.

Conventions used throughout the toolkit:

* Compass azimuths are degrees in [0, 360), measured clockwise from north.
* Pitch is degrees from the horizon, positive upward.
* Panorama pixel (row, col) maps to angles linearly: the center column of a
  panorama faces the camera yaw direction, the center row is the horizon.
* The local camera frame is east/north/up (x east, y north, z up).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentPoints, PitchOutOfRange, RowOutOfRange

EARTH_RADIUS_M = 6371000.0


def normalize_angle(deg: float) -> float:
    """Wrap an angle into [0, 360)."""
    return deg % 360.0


def signed_delta(deg: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    d = deg % 360.0
    return d - 360.0 if d > 180.0 else d


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 latitude/longitude in decimal degrees."""

    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 < self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside (-180, 180]")


@dataclass(frozen=True)
class PanoramaGeometry:
    """Dimensions of a full-sphere equirectangular image (width = 2 * height)."""

    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("panorama dimensions must be positive")
        if self.width != 2 * self.height:
            raise ValueError(
                f"equirectangular panorama needs width = 2*height, got {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class AzimuthWindow:
    """Clockwise azimuth interval [start, end], wrapping through 0/360 if needed."""

    start: float
    end: float

    @property
    def width(self) -> float:
        return (self.end - self.start) % 360.0

    def contains(self, azimuth: float) -> bool:
        return (azimuth - self.start) % 360.0 <= self.width

    def column_slices(self, yaw_deg: float, geom: PanoramaGeometry) -> list[slice]:
        """Pixel-column ranges covered by this window, split at the image seam."""
        w = geom.width
        c0 = azimuth_to_column(self.start, yaw_deg, geom).column
        c1 = azimuth_to_column(self.end, yaw_deg, geom).column
        lo, hi = int(math.ceil(c0)), int(math.floor(c1))
        if c1 >= c0:
            return [slice(max(lo, 0), min(hi + 1, w))]
        return [slice(0, min(hi + 1, w)), slice(max(lo, 0), w)]

    def column_mask(self, yaw_deg: float, geom: PanoramaGeometry) -> np.ndarray:
        """Boolean per-column membership array of length ``geom.width``."""
        mask = np.zeros(geom.width, dtype=bool)
        for s in self.column_slices(yaw_deg, geom):
            mask[s] = True
        return mask


@dataclass(frozen=True)
class LocalizationResult:
    """Where a target azimuth lands in a panorama."""

    bearing: float          # compass bearing of the target, [0, 360)
    delta: float            # signed angle from yaw to target, (-180, 180]
    column: float           # fractional pixel column, [0, width)
    window: AzimuthWindow = field(default=None)  # primary +/-45 degree search window


def bearing_between(camera: GeoPoint, target: GeoPoint) -> float:
    """Initial great-circle bearing from camera to target, degrees [0, 360).

    Raises CoincidentPoints when the two points are closer than ~1e-9 rad
    of arc (about 6 mm), where the bearing is numerically meaningless.
    """
    lat_c = math.radians(camera.lat)
    lat_t = math.radians(target.lat)
    dlon = math.radians(target.lon - camera.lon)
    if great_circle_distance_m(camera, target) < EARTH_RADIUS_M * 1e-9:
        raise CoincidentPoints(f"{camera} and {target} coincide")
    x = math.sin(dlon) * math.cos(lat_t)
    y = math.cos(lat_c) * math.sin(lat_t) - math.sin(lat_c) * math.cos(lat_t) * math.cos(dlon)
    return normalize_angle(math.degrees(math.atan2(x, y)))


def great_circle_distance_m(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance on the mean-radius sphere, meters."""
    la1, la2 = math.radians(a.lat), math.radians(b.lat)
    dla = la2 - la1
    dlo = math.radians(b.lon - a.lon)
    h = math.sin(dla / 2.0) ** 2 + math.cos(la1) * math.cos(la2) * math.sin(dlo / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def destination_point(origin: GeoPoint, bearing_deg: float, distance_m: float) -> GeoPoint:
    """Point reached by travelling ``distance_m`` along an initial bearing."""
    delta = distance_m / EARTH_RADIUS_M
    theta = math.radians(bearing_deg)
    la1 = math.radians(origin.lat)
    lo1 = math.radians(origin.lon)
    la2 = math.asin(
        math.sin(la1) * math.cos(delta) + math.cos(la1) * math.sin(delta) * math.cos(theta)
    )
    lo2 = lo1 + math.atan2(
        math.sin(theta) * math.sin(delta) * math.cos(la1),
        math.cos(delta) - math.sin(la1) * math.sin(la2),
    )
    lon = math.degrees(lo2)
    lon = (lon + 180.0) % 360.0 - 180.0
    if lon == -180.0:
        lon = 180.0
    return GeoPoint(math.degrees(la2), lon)


def azimuth_to_column(
    bearing: float, yaw_deg: float, geom: PanoramaGeometry
) -> LocalizationResult:
    """Map a compass bearing to the panorama column it appears in.

    The center column faces the yaw direction; azimuth grows to the right.
    Equivalent to the two-branch half-width formula on its native domain and
    total everywhere else thanks to the signed wrap.
    """
    delta = signed_delta(bearing - yaw_deg)
    col = (geom.width / 2.0 + delta * geom.width / 360.0) % geom.width
    return LocalizationResult(
        bearing=normalize_angle(bearing),
        delta=delta,
        column=col,
        window=search_windows(bearing)[0],
    )


def column_to_azimuth(column: float, yaw_deg: float, geom: PanoramaGeometry) -> float:
    """Compass bearing seen at a panorama column (inverse of azimuth_to_column)."""
    return normalize_angle(yaw_deg + (column - geom.width / 2.0) * 360.0 / geom.width)


def row_to_pitch(row: float, geom: PanoramaGeometry) -> float:
    """Pitch angle of a panorama row: (H/2 - row) * 180 / H, degrees."""
    if not 0 <= row < geom.height:
        raise RowOutOfRange(f"row {row} outside [0, {geom.height})")
    return (geom.height / 2.0 - row) * 180.0 / geom.height


def pitch_to_row(pitch_deg: float, geom: PanoramaGeometry) -> int:
    """Nearest panorama row for a pitch angle; inverse of row_to_pitch."""
    if not -90.0 < pitch_deg <= 90.0:
        raise PitchOutOfRange(f"pitch {pitch_deg} outside (-90, 90]")
    row = int(round(geom.height / 2.0 - pitch_deg * geom.height / 180.0))
    return min(max(row, 0), geom.height - 1)


def height_offset(depth_m: float, pitch_deg: float) -> float:
    """Vertical offset of a point at slant depth d and pitch angle: d * sin(pitch)."""
    if depth_m < 0:
        raise ValueError("depth must be non-negative")
    return depth_m * math.sin(math.radians(pitch_deg))


def search_windows(bearing: float, half_width_deg: float = 45.0,
                   shift_deg: float = 22.5) -> list[AzimuthWindow]:
    """Door-search windows around a house bearing.

    The primary window spans +/-half_width; if the door is not found there,
    the window is retried translated -shift and +shift degrees.
    """
    if not 0.0 < half_width_deg <= 90.0:
        raise ValueError(f"window half width must be in (0, 90], got {half_width_deg}")
    if not 0.0 <= shift_deg < half_width_deg * 2.0:
        raise ValueError(f"window shift must be in [0, width), got {shift_deg}")
    b = normalize_angle(bearing)
    return [
        AzimuthWindow(normalize_angle(b - half_width_deg),
                      normalize_angle(b + half_width_deg)),
        AzimuthWindow(normalize_angle(b - half_width_deg - shift_deg),
                      normalize_angle(b + half_width_deg - shift_deg)),
        AzimuthWindow(normalize_angle(b - half_width_deg + shift_deg),
                      normalize_angle(b + half_width_deg + shift_deg)),
    ]


def azimuth_pitch_to_unit(azimuth_deg: float, pitch_deg: float) -> np.ndarray:
    """Unit direction vector in the east/north/up frame."""
    az = math.radians(azimuth_deg)
    pt = math.radians(pitch_deg)
    cp = math.cos(pt)
    return np.array([math.sin(az) * cp, math.cos(az) * cp, math.sin(pt)])
