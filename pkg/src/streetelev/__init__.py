"""Street-view elevation toolkit.

Measures a building's lowest-floor elevation (LFE, proxied by the front
door bottom) and the street-to-floor height difference (HDSL) from
equirectangular panoramas, plane-encoded depthmaps, camera metadata, and
segmentation label masks.  A synthetic raycast oracle renders scenes with
known elevations for end-to-end verification.
"""

from .depthmap import (
    NEAREST_PIXEL,
    PLANE_EXACT,
    DepthPlaneMap,
    decode_depthmap,
    depth_at,
    encode_depthmap,
    sample_depths,
)
from .errors import StreetElevError
from .estimate import (
    CameraPose,
    ElevationEstimate,
    HouseMeasurement,
    estimate_hdsl,
    estimate_lfe,
    estimate_re,
    extract_traces,
    measure_house,
)
from .geometry import (
    AzimuthWindow,
    GeoPoint,
    PanoramaGeometry,
    azimuth_to_column,
    bearing_between,
    column_to_azimuth,
    great_circle_distance_m,
    pitch_to_row,
    row_to_pitch,
    search_windows,
)
from .ingest import (
    FetchConfig,
    HouseRecord,
    PanoramaBundle,
    fetch_bundle,
    load_bundle,
    load_bundles,
    load_houses,
    match_house,
    save_bundle,
    save_houses,
    select_best_image,
)
from .masks import (
    DoorBottomTrace,
    DoorInstance,
    LabelMask,
    RoadsideTrace,
    classify_visibility,
    door_bottom,
    load_mask,
    roadside,
    save_mask,
)
from .stats import (
    EvaluationRow,
    flag_outliers,
    funnel,
    hdsl_distribution,
    kruskal_wallis,
    mae,
    paired_t_test,
)
from .synth import Scene, load_scene, render, render_preview, save_scene, sweep

__version__ = "0.1.0"

__all__ = [
    "AzimuthWindow",
    "CameraPose",
    "DepthPlaneMap",
    "DoorBottomTrace",
    "DoorInstance",
    "ElevationEstimate",
    "EvaluationRow",
    "FetchConfig",
    "GeoPoint",
    "HouseMeasurement",
    "HouseRecord",
    "LabelMask",
    "NEAREST_PIXEL",
    "PLANE_EXACT",
    "PanoramaBundle",
    "PanoramaGeometry",
    "RoadsideTrace",
    "Scene",
    "StreetElevError",
    "azimuth_to_column",
    "bearing_between",
    "classify_visibility",
    "column_to_azimuth",
    "decode_depthmap",
    "depth_at",
    "door_bottom",
    "encode_depthmap",
    "estimate_hdsl",
    "estimate_lfe",
    "estimate_re",
    "extract_traces",
    "fetch_bundle",
    "flag_outliers",
    "funnel",
    "great_circle_distance_m",
    "hdsl_distribution",
    "kruskal_wallis",
    "load_bundle",
    "load_bundles",
    "load_houses",
    "load_mask",
    "load_scene",
    "mae",
    "match_house",
    "measure_house",
    "paired_t_test",
    "pitch_to_row",
    "render",
    "render_preview",
    "roadside",
    "row_to_pitch",
    "save_bundle",
    "save_houses",
    "save_mask",
    "save_scene",
    "search_windows",
    "select_best_image",
    "sweep",
]
