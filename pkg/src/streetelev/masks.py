"""Segmentation label masks and pixel-trace extraction.

A mask is a single-channel 8-bit grid aligned to an equirectangular
panorama.  Codes: 0 other, 1 door, 2 road, 3 grass, 4 dirt.  Door pixels
are grouped into connected instances (4-connectivity, with horizontal
wrap across the panorama seam).  The traces feed the elevation estimator:

* door_bottom  — lowest door pixel per column of one instance,
* roadside     — house-side road edge per column inside an azimuth window,
                 falling back to grass/dirt bottom edges pushed down by a
                 configurable pixel offset.

Masks are saved as PNG (mode "L", raw codes) plus a JSON sidecar listing
the door instances, so independently produced masks can be validated.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import EmptyInstance, MaskSchemaError, NoRoadsideFeature

LABEL_OTHER = 0
LABEL_DOOR = 1
LABEL_ROAD = 2
LABEL_GRASS = 3
LABEL_DIRT = 4
PALETTE = {"other": 0, "door": 1, "road": 2, "grass": 3, "dirt": 4}
MAX_LABEL = max(PALETTE.values())

# Heuristic knobs for visibility classification; see classify_visibility.
DOOR_ASPECT_RATIO = 0.45  # width/height of a typical door (~0.9 m x 2.0 m)
COMPLETE_WIDTH_RATIO = 0.875

ROADSIDE_OFFSET_PX = 20  # at reference panorama height, scaled by height/8192
REFERENCE_PANO_HEIGHT = 8192
ROAD_COVERAGE_MIN = 0.5  # road must cover > this fraction of window columns

COMPLETE = "complete"
PARTIAL = "partial"
PARTIAL_FRACTIONS = (0.25, 0.50, 0.75)


@dataclass(frozen=True, eq=False)
class DoorInstance:
    """One connected region of door pixels."""

    instance_id: int
    pixel_count: int
    bbox: tuple  # (row_min, col_min, row_max, col_max), inclusive
    columns: np.ndarray = field(repr=False)  # sorted occupied columns

    def to_json(self) -> dict:
        return {
            "id": self.instance_id,
            "pixel_count": self.pixel_count,
            "bbox": [int(v) for v in self.bbox],
        }


class LabelMask:
    """Immutable label grid plus its discovered door instances.

    Instance labels are kept only for the row slab actually containing door
    pixels (``_inst_slab`` starting at row ``_slab_row0``) so that instance
    discovery and tracing stay cheap on full-size panoramas.
    """

    __slots__ = ("labels", "height", "width", "door_instances",
                 "_inst_slab", "_slab_row0")

    def __init__(self, labels):
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        if labels.ndim != 2:
            raise MaskSchemaError(f"labels must be 2-D, got shape {labels.shape}")
        if labels.size and int(labels.max()) > MAX_LABEL:
            raise MaskSchemaError(
                f"label code {int(labels.max())} outside palette 0..{MAX_LABEL}"
            )
        labels.setflags(write=False)
        slab, row0, instances = _find_door_instances(labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "height", labels.shape[0])
        object.__setattr__(self, "width", labels.shape[1])
        object.__setattr__(self, "_inst_slab", slab)
        object.__setattr__(self, "_slab_row0", row0)
        object.__setattr__(self, "door_instances", instances)

    def __setattr__(self, name, value):
        raise AttributeError("LabelMask is immutable")

    def __repr__(self):
        return f"LabelMask({self.height}x{self.width}, {len(self.door_instances)} doors)"

    def instance_region(self, instance_id: int):
        """(first slab row, bool grid) of one instance's pixels."""
        return self._slab_row0, self._inst_slab == instance_id

    def instances_in_columns(self, column_mask: np.ndarray) -> list:
        """Door instances with at least one column selected by a bool column mask."""
        return [
            inst
            for inst in self.door_instances
            if bool(column_mask[inst.columns].any())
        ]


def _find_door_instances(labels: np.ndarray):
    """4-connected components of door pixels, merged across the panorama seam."""
    door = labels == LABEL_DOOR
    occupied = np.nonzero(door.any(axis=1))[0]
    if len(occupied) == 0:
        return np.zeros((0, labels.shape[1]), dtype=np.int32), 0, []
    row0, row1 = int(occupied[0]), int(occupied[-1]) + 1
    inst_labels, count = ndimage.label(door[row0:row1])
    inst_labels = inst_labels.astype(np.int32, copy=False)
    if count > 1:
        # union components adjacent through the wrap between last and first column
        left, right = inst_labels[:, 0], inst_labels[:, -1]
        touching = (left > 0) & (right > 0)
        parent = list(range(count + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(left[touching], right[touching]):
            ra, rb = find(int(a)), find(int(b))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(count + 1)])
        remap = np.zeros(count + 1, dtype=inst_labels.dtype)
        remap[np.unique(roots[1:])] = np.arange(1, len(np.unique(roots[1:])) + 1)
        inst_labels = remap[roots[inst_labels]]
        count = int(inst_labels.max())
    instances = []
    for i in range(1, count + 1):
        rows, cols = np.nonzero(inst_labels == i)
        instances.append(
            DoorInstance(
                instance_id=i,
                pixel_count=len(rows),
                bbox=(int(rows.min()) + row0, int(cols.min()),
                      int(rows.max()) + row0, int(cols.max())),
                columns=np.unique(cols),
            )
        )
    return inst_labels, row0, instances


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True, eq=False)
class DoorBottomTrace:
    """Lowest door pixel per column of one instance."""

    columns: np.ndarray
    rows: np.ndarray
    instance_id: int
    visibility: str
    visible_fraction: float

    @property
    def pixels(self) -> list:
        """(p_x, p_y) pairs, one per occupied column."""
        return [(int(c), int(r)) for c, r in zip(self.columns, self.rows)]

    def __len__(self):
        return len(self.columns)


@dataclass(frozen=True, eq=False)
class RoadsideTrace:
    """Roadside row per column inside the requested window."""

    columns: np.ndarray
    rows: np.ndarray
    feature: str
    offset_applied: int

    @property
    def pixels(self) -> list:
        return [(int(c), int(r)) for c, r in zip(self.columns, self.rows)]

    def __len__(self):
        return len(self.columns)


def _per_column_extreme(region: np.ndarray, minimum: bool):
    """Per-column min/max row of a bool grid; columns without pixels dropped."""
    cols = np.nonzero(region.any(axis=0))[0]
    if minimum:
        rows = region.argmax(axis=0)[cols]
    else:
        rows = region.shape[0] - 1 - region[::-1].argmax(axis=0)[cols]
    return cols, rows.astype(np.int64)


def door_bottom(mask: LabelMask, instance: DoorInstance, column_mask=None,
                visibility_override=None) -> DoorBottomTrace:
    """Trace the bottom edge of one door instance: max row per column.

    ``column_mask`` (bool, length width) restricts the trace to a search
    window; the restriction marks the trace as clipped for visibility
    classification.  ``visibility_override`` forces a fraction in
    {0.25, 0.5, 0.75, 1.0} for houses with curated labels.
    """
    row0, region = mask.instance_region(instance.instance_id)
    if not region.any():
        raise EmptyInstance(f"door instance {instance.instance_id} has no pixels")
    clipped = False
    if column_mask is not None:
        clipped = bool(region[:, ~np.asarray(column_mask, dtype=bool)].any())
        region = region & np.asarray(column_mask, dtype=bool)[None, :]
        if not region.any():
            raise EmptyInstance(
                f"door instance {instance.instance_id} has no pixels in window"
            )
    cols, rows = _per_column_extreme(region, minimum=False)
    rows = rows + row0
    visibility, fraction = classify_visibility(
        instance, cols, mask.width, clipped=clipped, override=visibility_override
    )
    return DoorBottomTrace(
        columns=cols,
        rows=rows,
        instance_id=instance.instance_id,
        visibility=visibility,
        visible_fraction=fraction,
    )


def _circular_contiguous(cols: np.ndarray, width: int) -> bool:
    if len(cols) <= 1:
        return True
    gaps = np.diff(np.sort(cols))
    big = int(np.count_nonzero(gaps > 1))
    wraps = (int(cols.min()) + width - int(cols.max())) > 1
    return big + (1 if wraps else 0) <= 1  # at most one gap on the circle


def classify_visibility(instance: DoorInstance, traced_columns, width: int,
                        clipped: bool = False, override=None):
    """Label a door-bottom trace complete or partial with a visible fraction.

    A trace is complete when it was not clipped by the search window, its
    columns are contiguous (allowing the panorama seam), and it spans at
    least COMPLETE_WIDTH_RATIO of the width expected from the instance
    height and the default door aspect ratio.  Otherwise the fraction is
    the traced/expected width ratio quantized to {0.25, 0.5, 0.75}.
    """
    if override is not None:
        if override not in PARTIAL_FRACTIONS + (1.0,):
            raise ValueError(f"visibility override {override} not in quarters")
        return (COMPLETE, 1.0) if override == 1.0 else (PARTIAL, float(override))
    cols = np.asarray(traced_columns)
    height_px = instance.bbox[2] - instance.bbox[0] + 1
    expected = max(1.0, DOOR_ASPECT_RATIO * height_px)
    ratio = len(cols) / expected
    unbroken = _circular_contiguous(cols, width)
    if not clipped and unbroken and ratio >= COMPLETE_WIDTH_RATIO:
        return COMPLETE, 1.0
    quantized = round(min(ratio, 1.0) * 4) / 4
    fraction = float(min(max(quantized, PARTIAL_FRACTIONS[0]), PARTIAL_FRACTIONS[-1]))
    return PARTIAL, fraction


def roadside(mask: LabelMask, window, yaw_deg: float, geom,
             offset_px: int = ROADSIDE_OFFSET_PX) -> RoadsideTrace:
    """Trace the house-side road edge inside an azimuth window.

    Primary mode takes, per window column, the minimal row of road pixels
    below the horizon (the road edge away from the camera).  When road
    covers half the window columns or fewer, grass then dirt stand in:
    their per-column maximal row plus a vertical offset (``offset_px`` at
    the reference height, scaled by mask height / 8192).
    """
    if (mask.height, mask.width) != (geom.height, geom.width):
        raise MaskSchemaError(
            f"mask {mask.height}x{mask.width} does not match panorama "
            f"{geom.height}x{geom.width}"
        )
    in_window = window.column_mask(yaw_deg, geom)
    n_window = int(np.count_nonzero(in_window))
    horizon = mask.height // 2 + 1  # first row strictly below the horizon
    sub = mask.labels[horizon:]

    road = (sub == LABEL_ROAD) & in_window[None, :]
    road_cols, road_rows = _per_column_extreme(road, minimum=True)
    road_rows = road_rows + horizon
    if n_window and len(road_cols) > ROAD_COVERAGE_MIN * n_window:
        return RoadsideTrace(road_cols, road_rows, "road", 0)

    effective = max(1, round(offset_px * mask.height / REFERENCE_PANO_HEIGHT))
    for feature, code in (("grass", LABEL_GRASS), ("dirt", LABEL_DIRT)):
        grid = (sub == code) & in_window[None, :]
        cols, rows = _per_column_extreme(grid, minimum=False)
        if len(cols):
            rows = np.minimum(rows + horizon + effective, mask.height - 1)
            return RoadsideTrace(cols, rows, feature, effective)

    if len(road_cols):  # sparse road beats nothing
        return RoadsideTrace(road_cols, road_rows, "road", 0)
    raise NoRoadsideFeature("no road, grass, or dirt pixels in window")


# ---------------------------------------------------------------------------
# file format


def save_mask(mask: LabelMask, png_path: str, sidecar_path: str = None) -> None:
    """Write the mask PNG (mode L, raw codes) and its JSON sidecar."""
    Image.fromarray(mask.labels, mode="L").save(png_path, format="PNG")
    sidecar = {
        "width": mask.width,
        "height": mask.height,
        "palette": PALETTE,
        "door_instances": [inst.to_json() for inst in mask.door_instances],
    }
    path = sidecar_path or _default_sidecar(png_path)
    with open(path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mask(png_path: str, sidecar_path: str = None, strict: bool = True) -> LabelMask:
    """Load and validate a mask PNG; cross-checks the sidecar when present."""
    with Image.open(png_path) as img:
        if img.mode not in ("L", "P"):
            raise MaskSchemaError(f"mask PNG must be 8-bit single channel, got {img.mode}")
        labels = np.asarray(img, dtype=np.uint8)
    mask = LabelMask(labels)
    path = sidecar_path or _default_sidecar(png_path)
    if os.path.exists(path):
        _validate_sidecar(mask, path, strict=strict)
    elif strict and sidecar_path is not None:
        raise MaskSchemaError(f"sidecar not found: {path}")
    return mask


def _default_sidecar(png_path: str) -> str:
    return os.path.splitext(png_path)[0] + ".json"


def _validate_sidecar(mask: LabelMask, path: str, strict: bool) -> None:
    try:
        with open(path) as fh:
            sidecar = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise MaskSchemaError(f"unreadable sidecar {path}: {exc}") from exc
    if not isinstance(sidecar, dict):
        raise MaskSchemaError(f"sidecar {path} must be a JSON object")
    if (sidecar.get("width"), sidecar.get("height")) != (mask.width, mask.height):
        raise MaskSchemaError(
            f"sidecar dimensions {sidecar.get('width')}x{sidecar.get('height')} "
            f"do not match mask {mask.width}x{mask.height}"
        )
    palette = sidecar.get("palette")
    if palette is not None and palette != PALETTE:
        raise MaskSchemaError(f"sidecar palette {palette} differs from {PALETTE}")
    if not strict:
        return
    listed = sidecar.get("door_instances", [])
    if len(listed) != len(mask.door_instances):
        raise MaskSchemaError(
            f"sidecar lists {len(listed)} door instances, mask has "
            f"{len(mask.door_instances)}"
        )
    for entry in listed:
        bbox = entry.get("bbox", [])
        if len(bbox) != 4:
            raise MaskSchemaError(f"sidecar instance bbox malformed: {entry}")
        r0, c0, r1, c1 = bbox
        if not (0 <= r0 <= r1 < mask.height and 0 <= c0 <= c1 < mask.width):
            raise MaskSchemaError(f"sidecar instance bbox out of bounds: {entry}")
        if entry.get("pixel_count", 0) <= 0:
            raise MaskSchemaError(f"sidecar instance pixel_count invalid: {entry}")
