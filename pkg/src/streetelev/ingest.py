"""House tables, panorama bundles, matching, and optional HTTP fetching.

House tables are CSV files with header ``id,address,lat,lon,lfe_truth_m,
reconstruction_date``.  A panorama bundle is one directory per pano id:

    <root>/<pano_id>/metadata.json   pano_id, lat, lon, elevation_msl_m,
                                     yaw_deg, date, width, height [, address]
    <root>/<pano_id>/depthmap.b64    encoded plane depthmap
    <root>/<pano_id>/mask.png(.json) optional label mask + sidecar
    <root>/<pano_id>/image.png       optional stitched imagery

Fetching is idempotent (complete bundles are skipped) and atomic (bundles
are assembled in a temp directory and renamed into place), so it is safe
to parallelize across pano ids.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .depthmap import decode_depthmap
from .errors import HttpError, IncompleteBundle, MaskSchemaError, NoVisibleDoor, ParseError
from .estimate import CameraPose
from .geometry import GeoPoint, bearing_between, great_circle_distance_m, search_windows
from .masks import LabelMask, load_mask, save_mask

HOUSE_CSV_HEADER = ["id", "address", "lat", "lon", "lfe_truth_m", "reconstruction_date"]

# common suffix/direction abbreviations folded during address comparison
_ADDRESS_ABBREV = {
    "street": "st", "avenue": "ave", "drive": "dr", "road": "rd",
    "boulevard": "blvd", "lane": "ln", "court": "ct", "place": "pl",
    "circle": "cir", "terrace": "ter", "parkway": "pkwy", "highway": "hwy",
    "north": "n", "south": "s", "east": "e", "west": "w",
}

DEFAULT_MAX_DISTANCE_M = 60.0
DEFAULT_MIN_CAPTURE_DATE = "2016-01-01"  # "after 2015" by default, configurable


@dataclass(frozen=True)
class HouseRecord:
    """One surveyed house, optionally with drone-measured ground truth."""

    house_id: str
    address: str
    location: GeoPoint
    lfe_truth_m: float = None
    reconstruction_date: str = None


@dataclass(frozen=True, eq=False)
class PanoramaBundle:
    """One panorama's pose, dimensions, encoded depthmap, and optional mask."""

    pano_id: str
    pose: CameraPose
    width: int
    height: int
    depthmap_b64: str
    mask: LabelMask = field(default=None, repr=False)
    address: str = ""

    def __post_init__(self):
        if self.width != 2 * self.height or self.height <= 0:
            raise ValueError(
                f"panorama needs width = 2*height, got {self.width}x{self.height}"
            )
        if self.mask is not None and (self.mask.height, self.mask.width) != (
            self.height,
            self.width,
        ):
            raise MaskSchemaError(
                f"mask {self.mask.height}x{self.mask.width} does not match "
                f"panorama {self.height}x{self.width}"
            )
        decode_depthmap(self.depthmap_b64)  # malformed depthmaps fail here


def normalize_address(text: str) -> str:
    """Case/punctuation/abbreviation-insensitive address key."""
    words = re.sub(r"[^\w\s]", " ", text.lower()).split()
    return " ".join(_ADDRESS_ABBREV.get(w, w) for w in words)


def _parse_date(text, row=None):
    """ISO date or year-month; returns the canonical ISO day string."""
    if text is None or text == "":
        return None
    candidate = f"{text}-01" if re.fullmatch(r"\d{4}-\d{2}", text) else text
    try:
        return date.fromisoformat(candidate).isoformat()
    except ValueError as exc:
        raise ParseError(f"bad date {text!r}: {exc}", row=row) from exc


# ---------------------------------------------------------------------------
# house tables


def load_houses(path: str) -> list:
    """Parse a house CSV; raises ParseError with the offending row number."""
    records = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", row=1) from None
        if [h.strip() for h in header] != HOUSE_CSV_HEADER:
            raise ParseError(
                f"header must be {','.join(HOUSE_CSV_HEADER)}, got {','.join(header)}",
                row=1,
            )
        for n, cells in enumerate(reader, start=2):
            if not cells or cells == [""]:
                continue
            if len(cells) != len(HOUSE_CSV_HEADER):
                raise ParseError(f"expected {len(HOUSE_CSV_HEADER)} fields, got {len(cells)}", row=n)
            house_id, address, lat, lon, truth, recon = [c.strip() for c in cells]
            if not house_id:
                raise ParseError("missing id", row=n)
            if house_id in seen:
                raise ParseError(f"duplicate id {house_id!r}", row=n)
            seen.add(house_id)
            try:
                location = GeoPoint(float(lat), float(lon))
            except ValueError as exc:
                raise ParseError(f"bad coordinates ({lat!r}, {lon!r}): {exc}", row=n) from exc
            truth_m = None
            if truth:
                truth_m = float(truth) if _is_float(truth) else None
                if truth_m is None or not math.isfinite(truth_m):
                    raise ParseError(f"bad lfe_truth_m {truth!r}", row=n)
            records.append(
                HouseRecord(
                    house_id=house_id,
                    address=address,
                    location=location,
                    lfe_truth_m=truth_m,
                    reconstruction_date=_parse_date(recon, row=n),
                )
            )
    return records


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def save_houses(records, path: str) -> None:
    """Inverse of load_houses (load -> save -> load is identity)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HOUSE_CSV_HEADER)
        for r in records:
            writer.writerow([
                r.house_id,
                r.address,
                repr(r.location.lat),
                repr(r.location.lon),
                "" if r.lfe_truth_m is None else repr(r.lfe_truth_m),
                r.reconstruction_date or "",
            ])


# ---------------------------------------------------------------------------
# matching


def _eligible(house: HouseRecord, bundle: PanoramaBundle, max_distance_m,
              min_capture_date):
    dist = great_circle_distance_m(house.location, bundle.pose.location)
    if dist > max_distance_m:
        return None
    captured = bundle.pose.captured
    if min_capture_date is not None:
        if captured is None or captured < min_capture_date:
            return None
    if house.reconstruction_date is not None:
        if captured is None or captured <= house.reconstruction_date:
            return None
    return dist


def match_house(house: HouseRecord, bundles,
                max_distance_m: float = DEFAULT_MAX_DISTANCE_M,
                min_capture_date: str = DEFAULT_MIN_CAPTURE_DATE):
    """Best bundle for a house, or None.

    Candidates must lie within the distance cap, satisfy the minimum
    capture date, and postdate the house's reconstruction when one is
    recorded.  An exact (normalized) address match wins; otherwise the
    nearest camera does.
    """
    target = normalize_address(house.address) if house.address else None
    exact, near = [], []
    for bundle in bundles:
        dist = _eligible(house, bundle, max_distance_m, min_capture_date)
        if dist is None:
            continue
        entry = (dist, bundle.pano_id, bundle)
        if target and bundle.address and normalize_address(bundle.address) == target:
            exact.append(entry)
        else:
            near.append(entry)
    pool = exact or near
    if not pool:
        return None
    return min(pool, key=lambda e: (e[0], e[1]))[2]


def _door_columns_in_window(bundle: PanoramaBundle, house: HouseRecord) -> int:
    """Widest door-instance column count inside the house search window."""
    if bundle.mask is None or not bundle.mask.door_instances:
        return 0
    from .geometry import PanoramaGeometry  # local to avoid unused at import

    geom = PanoramaGeometry(bundle.width, bundle.height)
    bearing = bearing_between(bundle.pose.location, house.location)
    window = search_windows(bearing)[0]
    in_window = window.column_mask(bundle.pose.yaw_deg, geom)
    return max(
        int(np.count_nonzero(in_window[inst.columns]))
        for inst in bundle.mask.door_instances
    )


def select_best_image(candidates, house: HouseRecord) -> PanoramaBundle:
    """Candidate whose door bottom is widest inside the house window.

    Ties break toward the shortest camera-house distance, then the newest
    capture date, then pano id (for determinism).  Raises NoVisibleDoor when
    no candidate shows a door inside the window.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("need at least one candidate bundle")
    scored = []
    for bundle in candidates:
        cols = _door_columns_in_window(bundle, house)
        if cols == 0:
            continue
        dist = great_circle_distance_m(house.location, bundle.pose.location)
        newest = bundle.pose.captured or ""
        scored.append((-cols, dist, _reverse_text(newest), bundle.pano_id, bundle))
    if not scored:
        raise NoVisibleDoor(f"no candidate shows a door for house {house.house_id}")
    return min(scored)[4]


def _reverse_text(text: str) -> tuple:
    # sort newest-first while keeping min(); ISO dates compare lexicographically
    return tuple(-ord(c) for c in text)


# ---------------------------------------------------------------------------
# bundle directories


def save_bundle(bundle: PanoramaBundle, root: str) -> str:
    """Write the bundle directory layout; returns the bundle path."""
    path = os.path.join(root, bundle.pano_id)
    os.makedirs(path, exist_ok=True)
    meta = {
        "pano_id": bundle.pano_id,
        "lat": bundle.pose.location.lat,
        "lon": bundle.pose.location.lon,
        "elevation_msl_m": bundle.pose.elevation_msl_m,
        "yaw_deg": bundle.pose.yaw_deg,
        "date": bundle.pose.captured,
        "width": bundle.width,
        "height": bundle.height,
        "address": bundle.address,
    }
    with open(os.path.join(path, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(path, "depthmap.b64"), "w") as fh:
        fh.write(bundle.depthmap_b64 + "\n")
    if bundle.mask is not None:
        save_mask(bundle.mask, os.path.join(path, "mask.png"))
    return path


def load_bundle(path: str) -> PanoramaBundle:
    """Read a bundle directory written by save_bundle or fetch_bundle."""
    meta_path = os.path.join(path, "metadata.json")
    depth_path = os.path.join(path, "depthmap.b64")
    for required in (meta_path, depth_path):
        if not os.path.exists(required):
            raise IncompleteBundle(f"missing {os.path.basename(required)} in {path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    with open(depth_path) as fh:
        depth_text = fh.read().strip()
    mask_path = os.path.join(path, "mask.png")
    mask = load_mask(mask_path) if os.path.exists(mask_path) else None
    pose = CameraPose(
        location=GeoPoint(float(meta["lat"]), float(meta["lon"])),
        elevation_msl_m=float(meta["elevation_msl_m"]),
        yaw_deg=float(meta["yaw_deg"]),
        captured=_parse_date(meta.get("date")),
    )
    return PanoramaBundle(
        pano_id=str(meta["pano_id"]),
        pose=pose,
        width=int(meta["width"]),
        height=int(meta["height"]),
        depthmap_b64=depth_text,
        mask=mask,
        address=str(meta.get("address") or ""),
    )


def load_bundles(root: str) -> list:
    """All bundles under a root directory, sorted by pano id."""
    bundles = []
    for name in sorted(os.listdir(root)):
        path = os.path.join(root, name)
        if os.path.isdir(path) and os.path.exists(os.path.join(path, "metadata.json")):
            bundles.append(load_bundle(path))
    return bundles


# ---------------------------------------------------------------------------
# HTTP fetching


@dataclass(frozen=True)
class FetchConfig:
    """URL templates with {pano_id}/{zoom}/{x}/{y} placeholders."""

    metadata_url: str
    depthmap_url: str
    tile_url: str = None  # imagery optional
    zoom: int = 2
    tile_size: int = 512
    timeout_s: float = 10.0


def _http_get(session, url, timeout_s):
    import requests

    try:
        response = session.get(url, timeout=timeout_s)
    except requests.RequestException as exc:
        raise HttpError(f"GET {url} failed: {exc}") from exc
    if response.status_code != 200:
        raise HttpError(f"GET {url} -> {response.status_code}")
    return response


def fetch_bundle(pano_id: str, config: FetchConfig, root: str, session=None) -> str:
    """Download one bundle into <root>/<pano_id>; returns the bundle path.

    Skips bundles that already exist (idempotent).  Assets are fetched into
    a temp directory and renamed into place so concurrent or interrupted
    fetches never leave partial bundles behind.
    """
    import requests

    final = os.path.join(root, pano_id)
    if os.path.exists(os.path.join(final, "metadata.json")):
        return final
    own_session = session is None
    if own_session:
        session = requests.Session()
    os.makedirs(root, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=f".{pano_id}-", dir=root)
    try:
        meta_raw = _http_get(
            session, config.metadata_url.format(pano_id=pano_id), config.timeout_s
        ).json()
        for key in ("lat", "lon", "elevation_msl_m", "yaw_deg", "width", "height"):
            if key not in meta_raw:
                raise IncompleteBundle(f"metadata for {pano_id} missing {key!r}")
        meta = dict(meta_raw)
        meta["pano_id"] = pano_id
        depth_text = _http_get(
            session, config.depthmap_url.format(pano_id=pano_id), config.timeout_s
        ).text.strip()
        decode_depthmap(depth_text)  # validate before writing anything
        with open(os.path.join(tmp, "metadata.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(tmp, "depthmap.b64"), "w") as fh:
            fh.write(depth_text + "\n")
        if config.tile_url:
            _fetch_tiles(session, config, pano_id, meta, tmp)
        try:
            os.replace(tmp, final)
        except OSError:
            shutil.rmtree(tmp, ignore_errors=True)  # another worker won the rename
        return final
    except Exception:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    finally:
        if own_session:
            session.close()


def _fetch_tiles(session, config, pano_id, meta, tmp):
    from io import BytesIO

    from PIL import Image

    width, height = int(meta["width"]), int(meta["height"])
    size = config.tile_size
    canvas = Image.new("RGB", (width, height))
    for ty in range((height + size - 1) // size):
        for tx in range((width + size - 1) // size):
            url = config.tile_url.format(pano_id=pano_id, zoom=config.zoom, x=tx, y=ty)
            try:
                raw = _http_get(session, url, config.timeout_s).content
            except HttpError as exc:
                raise IncompleteBundle(f"tile ({tx},{ty}) of {pano_id}: {exc}") from exc
            try:
                tile = Image.open(BytesIO(raw)).convert("RGB")
            except Exception as exc:
                raise IncompleteBundle(f"tile ({tx},{ty}) of {pano_id} unreadable") from exc
            canvas.paste(tile, (tx * size, ty * size))
    canvas.save(os.path.join(tmp, "image.png"), format="PNG")
