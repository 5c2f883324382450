"""Codec and sampler for plane-encoded panorama depthmaps.

Wire format (all little-endian), after base64url and optional zlib:

    offset  size            field
    0       1               header_size, must be 8
    1       2               plane_count (u16), table records incl. reserved slot 0
    3       2               width (u16)
    5       2               height (u16)
    7       1               pad, ignored
    8       height*width    plane index per pixel (u8, row-major, row 0 = top)
    ...     plane_count*16  plane records: nx, ny, nz, distance (f32 each)

Record 0 is reserved: index 0 means "no surface" (sky) and its record bytes
are ignored (written as zeros).  A payload whose first byte is 8 is parsed
as raw; any other payload must be a zlib container.

The index grid is world-aligned: integer column c looks along compass
azimuth (c - width/2) * 360 / width, integer row r along pitch
(height/2 - r) * 180 / height.  Plane normals live in the east/north/up
frame and point away from the camera, so a ray r meets plane (n, D) at
slant depth D / (n . r).
"""

from __future__ import annotations

import base64
import binascii
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import HeaderMismatch, InvalidPlaneIndex, MalformedEncoding

HEADER = struct.Struct("<BHHHB")
RECORD_BYTES = 16
NORMAL_TOL = 1e-5
DENOM_EPS = 1e-6

PLANE_EXACT = "plane_exact"
NEAREST_PIXEL = "nearest_pixel"
SAMPLING_MODES = (PLANE_EXACT, NEAREST_PIXEL)


@dataclass(frozen=True)
class RayDirection:
    """Compass azimuth [0, 360) and pitch [-90, 90], degrees."""

    azimuth: float
    pitch: float

    def __post_init__(self):
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch {self.pitch} outside [-90, 90]")

    def unit_vector(self) -> np.ndarray:
        az = np.radians(self.azimuth)
        pt = np.radians(self.pitch)
        return np.array([np.sin(az) * np.cos(pt), np.cos(az) * np.cos(pt), np.sin(pt)])


class DepthPlaneMap:
    """Plane table plus per-pixel plane indices.

    ``normals`` is (n, 3) float32 with unit rows, ``distances`` (n,) float32
    non-negative; pixel index k refers to plane k-1, index 0 to no surface.
    Instances are immutable after construction and safe to share.
    """

    __slots__ = ("width", "height", "normals", "distances", "indices")

    def __init__(self, width, height, normals, distances, indices):
        width, height = int(width), int(height)
        if width < 1 or height < 1:
            raise ValueError("depthmap dimensions must be positive")
        normals = np.ascontiguousarray(normals, dtype=np.float32).reshape(-1, 3)
        distances = np.ascontiguousarray(distances, dtype=np.float32).reshape(-1)
        if len(normals) != len(distances):
            raise ValueError("normals and distances length mismatch")
        if len(normals) > 255:
            raise ValueError("at most 255 planes are addressable by u8 indices")
        if len(normals):
            lengths = np.linalg.norm(normals.astype(np.float64), axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise ValueError("plane normals must be unit length")
            if np.any(distances < 0):
                raise ValueError("plane distances must be non-negative")
        indices = np.ascontiguousarray(indices, dtype=np.uint8)
        if indices.shape != (height, width):
            raise ValueError(f"indices must have shape ({height}, {width})")
        if indices.size and int(indices.max()) >= len(normals) + 1:
            raise InvalidPlaneIndex(
                f"index {int(indices.max())} >= plane count {len(normals) + 1}"
            )
        object.__setattr__(self, "width", width)
        object.__setattr__(self, "height", height)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "distances", distances)
        object.__setattr__(self, "indices", indices)
        normals.setflags(write=False)
        distances.setflags(write=False)
        indices.setflags(write=False)

    def __setattr__(self, name, value):
        raise AttributeError("DepthPlaneMap is immutable")

    @property
    def plane_count(self) -> int:
        """Number of table records including the reserved no-surface slot."""
        return len(self.normals) + 1

    def __eq__(self, other):
        if not isinstance(other, DepthPlaneMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.normals, other.normals)
            and np.array_equal(self.distances, other.distances)
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"DepthPlaneMap({self.height}x{self.width}, {len(self.normals)} planes)"

    def debug_summary(self) -> dict:
        """JSON-ready sidecar: dimensions plus the plane table."""
        return {
            "width": self.width,
            "height": self.height,
            "plane_count": self.plane_count,
            "planes": [
                {"normal": [float(x) for x in n], "distance": float(d)}
                for n, d in zip(self.normals, self.distances)
            ],
        }


def decode_depthmap(encoded: str) -> DepthPlaneMap:
    """Decode base64url text (raw or zlib payload) into a DepthPlaneMap."""
    if isinstance(encoded, bytes):
        encoded = encoded.decode("ascii", errors="strict")
    compact = "".join(encoded.split())
    try:
        raw = base64.urlsafe_b64decode(compact + "=" * (-len(compact) % 4))
    except (binascii.Error, ValueError, UnicodeEncodeError) as exc:
        raise MalformedEncoding(f"invalid base64url payload: {exc}") from exc
    if not raw:
        raise MalformedEncoding("empty payload")
    if raw[0] != HEADER.size:
        try:
            raw = zlib.decompress(raw)
        except zlib.error as exc:
            raise MalformedEncoding(f"payload is neither raw nor zlib: {exc}") from exc
    return _parse_payload(raw)


def _parse_payload(raw: bytes) -> DepthPlaneMap:
    if len(raw) < HEADER.size:
        raise HeaderMismatch(f"payload of {len(raw)} bytes is shorter than the header")
    header_size, plane_count, width, height, _pad = HEADER.unpack_from(raw)
    if header_size != HEADER.size:
        raise HeaderMismatch(f"header size {header_size}, expected {HEADER.size}")
    if plane_count < 1 or width < 1 or height < 1:
        raise HeaderMismatch(
            f"invalid header fields plane_count={plane_count} width={width} height={height}"
        )
    expected = HEADER.size + height * width + plane_count * RECORD_BYTES
    if len(raw) != expected:
        raise HeaderMismatch(f"payload is {len(raw)} bytes, header promises {expected}")
    grid_end = HEADER.size + height * width
    indices = np.frombuffer(raw, dtype=np.uint8, count=height * width, offset=HEADER.size)
    indices = indices.reshape(height, width)
    if indices.size and int(indices.max()) >= plane_count:
        raise InvalidPlaneIndex(
            f"index {int(indices.max())} >= plane count {plane_count}"
        )
    records = np.frombuffer(raw, dtype="<f4", count=plane_count * 4, offset=grid_end)
    records = records.reshape(plane_count, 4)
    return DepthPlaneMap(
        width=width,
        height=height,
        normals=records[1:, :3],
        distances=records[1:, 3],
        indices=indices,
    )


def encode_depthmap(depth_map: DepthPlaneMap, compress: bool = True) -> str:
    """Inverse of decode_depthmap; round-trips float32 content bit-exactly."""
    header = HEADER.pack(
        HEADER.size, depth_map.plane_count, depth_map.width, depth_map.height, 0
    )
    records = np.zeros((depth_map.plane_count, 4), dtype="<f4")
    records[1:, :3] = depth_map.normals
    records[1:, 3] = depth_map.distances
    payload = header + depth_map.indices.tobytes() + records.tobytes()
    if compress:
        payload = zlib.compress(payload)
    return base64.urlsafe_b64encode(payload).decode("ascii")


def grid_position(depth_map: DepthPlaneMap, azimuth, pitch):
    """Nearest integer (row, col) whose grid ray is closest to the given angles."""
    az = np.asarray(azimuth, dtype=np.float64)
    pt = np.asarray(pitch, dtype=np.float64)
    delta = (az % 360.0 + 180.0) % 360.0 - 180.0  # signed wrap
    col = np.rint(depth_map.width / 2.0 + delta * depth_map.width / 360.0).astype(np.int64)
    col %= depth_map.width
    row = np.rint(depth_map.height / 2.0 - pt * depth_map.height / 180.0).astype(np.int64)
    row = np.clip(row, 0, depth_map.height - 1)
    return row, col


def sample_depths(depth_map, azimuth, pitch, mode=PLANE_EXACT):
    """Vectorized depth lookup; returns float64 depths with NaN for no surface."""
    if mode not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling mode {mode!r}")
    az = np.atleast_1d(np.asarray(azimuth, dtype=np.float64))
    pt = np.atleast_1d(np.asarray(pitch, dtype=np.float64))
    row, col = grid_position(depth_map, az, pt)
    idx = depth_map.indices[row, col].astype(np.int64)
    hit = idx > 0
    if mode == NEAREST_PIXEL:
        # evaluate the plane at the grid pixel's own ray, not the query ray
        az = (col - depth_map.width / 2.0) * 360.0 / depth_map.width
        pt = (depth_map.height / 2.0 - row) * 180.0 / depth_map.height
    az_r, pt_r = np.radians(az), np.radians(pt)
    ray = np.stack(
        [np.sin(az_r) * np.cos(pt_r), np.cos(az_r) * np.cos(pt_r), np.sin(pt_r)], axis=-1
    )
    depths = np.full(az.shape, np.nan)
    safe = np.where(hit, idx - 1, 0)
    if len(depth_map.normals):
        denom = np.einsum("...k,...k->...", ray, depth_map.normals[safe].astype(np.float64))
        ok = hit & (denom > DENOM_EPS)
        depths[ok] = depth_map.distances[safe][ok].astype(np.float64) / denom[ok]
    return depths


def depth_at(depth_map: DepthPlaneMap, ray: RayDirection, mode=PLANE_EXACT):
    """Slant depth along a ray, meters, or None when no surface is hit.

    Looks up the plane index at the grid pixel nearest the ray, then
    intersects the exact ray with that plane (``plane_exact``) or reuses the
    pixel-center intersection (``nearest_pixel``).
    """
    d = sample_depths(depth_map, ray.azimuth, ray.pitch, mode=mode)[0]
    return None if np.isnan(d) else float(d)
