"""Robust elevation estimation from pixel traces.

Each traced pixel becomes an elevation sample E = CE + d * sin(pitch),
where CE is the camera elevation above mean sea level, d the slant depth
from the plane-encoded depthmap and pitch the pixel's vertical angle.
The lowest-floor elevation (LFE) is then a guarded median:

    samples -> IQR outlier fence -> lowest-fraction visibility subset
            -> at-or-below-median subset -> median

Roadside elevation (RE) runs the same pipeline without the visibility and
below-median subsets, and the street-to-floor height difference is their
difference, HDSL = LFE - RE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import depthmap as dm
from .errors import EmptyInstance, EstimationFailed, KindMismatch, NoVisibleDoor
from .geometry import (
    GeoPoint,
    PanoramaGeometry,
    azimuth_to_column,
    normalize_angle,
    search_windows,
)
from .masks import DoorBottomTrace, LabelMask, RoadsideTrace, door_bottom, roadside

KIND_LFE = "LFE"
KIND_RE = "RE"
VISIBILITY_FRACTIONS = (0.25, 0.50, 0.75, 1.0)


@dataclass(frozen=True)
class CameraPose:
    """Camera location, elevation above MSL, facing direction, capture date."""

    location: GeoPoint
    elevation_msl_m: float
    yaw_deg: float
    captured: str = None  # ISO date, optional

    def __post_init__(self):
        if not math.isfinite(self.elevation_msl_m):
            raise ValueError("camera elevation must be finite")
        object.__setattr__(self, "yaw_deg", normalize_angle(self.yaw_deg))


@dataclass(frozen=True)
class ElevationSample:
    """One traced pixel converted to an elevation above MSL."""

    pixel: tuple  # (p_x, p_y)
    pitch_deg: float
    depth_m: float
    height_offset_m: float
    elevation_msl_m: float


@dataclass(frozen=True)
class ElevationEstimate:
    """Median-pipeline result for one trace."""

    value: float
    kind: str  # KIND_LFE or KIND_RE
    sample_count: int
    subset_sizes: dict = field(compare=False)
    visibility: str = None
    visible_fraction: float = None


def trace_elevations(columns, rows, pose: CameraPose, depth_map, geom,
                     mode=dm.PLANE_EXACT) -> np.ndarray:
    """Vectorized elevations for traced pixels; NaN where no surface is hit."""
    cols = np.asarray(columns, dtype=np.float64)
    rws = np.asarray(rows, dtype=np.float64)
    azimuth = pose.yaw_deg + (cols - geom.width / 2.0) * 360.0 / geom.width
    pitch = (geom.height / 2.0 - rws) * 180.0 / geom.height
    depths = dm.sample_depths(depth_map, azimuth, pitch, mode=mode)
    return pose.elevation_msl_m + depths * np.sin(np.radians(pitch))


def sample_elevation(pixel, pose: CameraPose, depth_map, geom: PanoramaGeometry,
                     mode=dm.PLANE_EXACT):
    """Elevation sample for one pixel, or None when the ray hits no surface."""
    p_x, p_y = pixel
    if not (0 <= p_x < geom.width and 0 <= p_y < geom.height):
        raise ValueError(f"pixel {pixel} outside {geom.width}x{geom.height} panorama")
    pitch = (geom.height / 2.0 - p_y) * 180.0 / geom.height
    azimuth = pose.yaw_deg + (p_x - geom.width / 2.0) * 360.0 / geom.width
    depth = dm.sample_depths(depth_map, azimuth, pitch, mode=mode)[0]
    if np.isnan(depth):
        return None
    offset = depth * math.sin(math.radians(pitch))
    return ElevationSample(
        pixel=(int(p_x), int(p_y)),
        pitch_deg=pitch,
        depth_m=float(depth),
        height_offset_m=offset,
        elevation_msl_m=pose.elevation_msl_m + offset,
    )


# ---------------------------------------------------------------------------
# median pipeline


def remove_outliers(values, fence_factor: float = 1.5) -> np.ndarray:
    """Drop samples outside [Q1 - f*IQR, Q3 + f*IQR]; never empties the set."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot fence an empty sample set")
    if fence_factor < 0.0:
        raise ValueError(f"fence factor must be >= 0, got {fence_factor}")
    q1, q3 = np.percentile(arr, [25.0, 75.0])
    iqr = q3 - q1
    kept = arr[(arr >= q1 - fence_factor * iqr) & (arr <= q3 + fence_factor * iqr)]
    return kept if kept.size else arr


def visibility_subset(values, fraction: float) -> np.ndarray:
    """Keep the ceil(fraction * n) smallest values; fraction 1.0 is identity."""
    if fraction not in VISIBILITY_FRACTIONS:
        raise ValueError(f"fraction {fraction} not in {VISIBILITY_FRACTIONS}")
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        raise ValueError("cannot subset an empty sample set")
    return arr[: math.ceil(fraction * arr.size)]


def below_median_subset(values) -> np.ndarray:
    """Values at or below the median (mean-of-two-central for even counts)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot subset an empty sample set")
    return arr[arr <= np.median(arr)]


def _valid_elevations(trace, pose, depth_map, geom, mode):
    elev = trace_elevations(trace.columns, trace.rows, pose, depth_map, geom, mode)
    valid = elev[np.isfinite(elev)]
    if valid.size == 0:
        raise EstimationFailed("no traced pixel hit a depth surface")
    return valid


def estimate_lfe(trace: DoorBottomTrace, pose: CameraPose, depth_map, geom,
                 mode=dm.PLANE_EXACT, literal_median: bool = False,
                 fence_factor: float = 1.5) -> ElevationEstimate:
    """Lowest-floor elevation from a door-bottom trace.

    ``literal_median`` takes the median before the below-median subset is
    applied (the two readings of the source procedure differ by this step;
    the default counteracts the systematic overestimate from slanted door
    bottoms).
    """
    samples = _valid_elevations(trace, pose, depth_map, geom, mode)
    fenced = remove_outliers(samples, fence_factor=fence_factor)
    visible = visibility_subset(fenced, trace.visible_fraction)
    lowest = below_median_subset(visible)
    value = float(np.median(visible if literal_median else lowest))
    return ElevationEstimate(
        value=value,
        kind=KIND_LFE,
        sample_count=int(samples.size),
        subset_sizes={
            "samples": int(samples.size),
            "after_outlier_fence": int(fenced.size),
            "after_visibility": int(visible.size),
            "after_below_median": int(lowest.size),
        },
        visibility=trace.visibility,
        visible_fraction=trace.visible_fraction,
    )


def estimate_re(trace: RoadsideTrace, pose: CameraPose, depth_map, geom,
                mode=dm.PLANE_EXACT, fence_factor: float = 1.5) -> ElevationEstimate:
    """Roadside elevation: outlier fence then median, no visibility subsets."""
    samples = _valid_elevations(trace, pose, depth_map, geom, mode)
    fenced = remove_outliers(samples, fence_factor=fence_factor)
    return ElevationEstimate(
        value=float(np.median(fenced)),
        kind=KIND_RE,
        sample_count=int(samples.size),
        subset_sizes={
            "samples": int(samples.size),
            "after_outlier_fence": int(fenced.size),
        },
    )


def estimate_hdsl(lfe: ElevationEstimate, re: ElevationEstimate) -> float:
    """Street-to-floor height difference, LFE - RE."""
    if lfe.kind != KIND_LFE or re.kind != KIND_RE:
        raise KindMismatch(f"need (LFE, RE), got ({lfe.kind}, {re.kind})")
    return lfe.value - re.value


# ---------------------------------------------------------------------------
# per-house orchestration


@dataclass(frozen=True)
class HouseMeasurement:
    """Joined LFE/RE/HDSL result for a single house and panorama."""

    lfe: ElevationEstimate
    re: ElevationEstimate
    hdsl: float
    window: object
    instance_id: int
    roadside_feature: str


def _pick_instance(instances, house_column: float, width: int):
    """Prefer the instance whose column span centers nearest the house bearing."""

    def ring_distance(inst):
        center = float(np.median(inst.columns))
        d = abs(center - house_column)
        return min(d, width - d)

    return min(instances, key=lambda i: (ring_distance(i), -i.pixel_count))


@dataclass(frozen=True, eq=False)
class HouseTraces:
    """Extraction output for one house, independent of depth sampling mode."""

    door: DoorBottomTrace
    road: RoadsideTrace
    window: object


def extract_traces(mask: LabelMask, pose: CameraPose, geom: PanoramaGeometry,
                   house_bearing: float, roadside_offset_px: int = 20,
                   visibility_override=None, window_half_width_deg: float = 45.0,
                   window_shift_deg: float = 22.5) -> HouseTraces:
    """Locate the house door and adjacent roadside in the panorama mask.

    Tries the centered search window first, then the two shifted windows;
    raises NoVisibleDoor when none contains a door instance.
    """
    house_col = azimuth_to_column(house_bearing, pose.yaw_deg, geom).column
    for window in search_windows(house_bearing, half_width_deg=window_half_width_deg,
                                 shift_deg=window_shift_deg):
        column_mask = window.column_mask(pose.yaw_deg, geom)
        instances = mask.instances_in_columns(column_mask)
        if not instances:
            continue
        instance = _pick_instance(instances, house_col, geom.width)
        try:
            trace = door_bottom(mask, instance, column_mask=column_mask,
                                visibility_override=visibility_override)
        except EmptyInstance:
            continue
        road_trace = roadside(mask, window, pose.yaw_deg, geom,
                              offset_px=roadside_offset_px)
        return HouseTraces(door=trace, road=road_trace, window=window)
    raise NoVisibleDoor(
        f"no door instance inside any search window at {house_bearing:.1f} deg"
    )


def measure_from_traces(traces: HouseTraces, pose: CameraPose, depth_map,
                        geom: PanoramaGeometry, mode=dm.PLANE_EXACT,
                        literal_median: bool = False,
                        fence_factor: float = 1.5) -> HouseMeasurement:
    """Estimate LFE/RE/HDSL from already-extracted traces."""
    lfe = estimate_lfe(traces.door, pose, depth_map, geom, mode=mode,
                       literal_median=literal_median, fence_factor=fence_factor)
    re = estimate_re(traces.road, pose, depth_map, geom, mode=mode,
                     fence_factor=fence_factor)
    return HouseMeasurement(
        lfe=lfe,
        re=re,
        hdsl=estimate_hdsl(lfe, re),
        window=traces.window,
        instance_id=traces.door.instance_id,
        roadside_feature=traces.road.feature,
    )


def measure_house(mask: LabelMask, depth_map, pose: CameraPose,
                  geom: PanoramaGeometry, house_bearing: float,
                  mode=dm.PLANE_EXACT, roadside_offset_px: int = 20,
                  literal_median: bool = False, visibility_override=None,
                  window_half_width_deg: float = 45.0,
                  window_shift_deg: float = 22.5,
                  fence_factor: float = 1.5) -> HouseMeasurement:
    """Run extraction and estimation end to end for one house."""
    traces = extract_traces(mask, pose, geom, house_bearing,
                            roadside_offset_px=roadside_offset_px,
                            visibility_override=visibility_override,
                            window_half_width_deg=window_half_width_deg,
                            window_shift_deg=window_shift_deg)
    return measure_from_traces(traces, pose, depth_map, geom, mode=mode,
                               literal_median=literal_median,
                               fence_factor=fence_factor)
