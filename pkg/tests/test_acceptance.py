"""Acceptance suite: one test per headline guarantee, each printing a verdict.

These tests intentionally re-derive expected values with independent,
deliberately naive implementations (pure-Python medians, scalar great-circle
algebra, hand-packed binary fixtures) so they can catch regressions in the
vectorized library code rather than mirroring it.
"""

import itertools
import math
import statistics
import struct
import time
from dataclasses import replace

import numpy as np
import pytest

import streetelev.depthmap as dm
from streetelev.depthmap import DepthPlaneMap, decode_depthmap, encode_depthmap
from streetelev.errors import (
    HeaderMismatch,
    InvalidPlaneIndex,
    MalformedEncoding,
)
from streetelev.estimate import (
    CameraPose,
    below_median_subset,
    estimate_lfe,
    measure_house,
    remove_outliers,
    trace_elevations,
    visibility_subset,
)
from streetelev.geometry import (
    GeoPoint,
    PanoramaGeometry,
    azimuth_to_column,
    bearing_between,
    destination_point,
    pitch_to_row,
    row_to_pitch,
)
from streetelev.masks import COMPLETE, PARTIAL, DoorBottomTrace, LabelMask
from streetelev.stats import (
    EvaluationRow,
    FUNNEL_STEPS,
    flag_outliers,
    funnel,
    kruskal_wallis,
    paired_t_test,
)
from streetelev.synth import SWEEP_PANORAMA, render, sweep

from conftest import canonical_scene, random_plane_map


def announce(capsys, name, ok):
    with capsys.disabled():
        print(f"\nacceptance [{name}]: {'PASS' if ok else 'FAIL'}")


_shared = {}


# ---------------------------------------------------------------------------
# 1. depthmap codec round-trip


def test_codec_round_trip(capsys):
    rng = np.random.default_rng(2024)
    started = time.monotonic()
    ok = True
    try:
        for i in range(1000):
            depth_map = random_plane_map(rng)
            again = decode_depthmap(
                encode_depthmap(depth_map, compress=bool(i % 2)))
            assert np.array_equal(again.indices, depth_map.indices)
            assert np.array_equal(again.normals, depth_map.normals)
            assert np.array_equal(again.distances, depth_map.distances)
            assert (again.width, again.height) == (depth_map.width,
                                                   depth_map.height)
        elapsed = time.monotonic() - started

        good = encode_depthmap(random_plane_map(rng), compress=False)
        raw = struct.pack("<BHHHB", 8, 2, 2, 1, 0) + bytes([0, 1])  # planes cut
        with pytest.raises(HeaderMismatch):
            decode_depthmap(dm._b64encode(raw) if hasattr(dm, "_b64encode")
                            else __import__("base64").urlsafe_b64encode(raw).decode())
        with pytest.raises(MalformedEncoding):
            decode_depthmap("!!!not base64!!!")
        with pytest.raises(HeaderMismatch):
            decode_depthmap(good[:-10])  # raw payload with the tail cut off
        bad_index = struct.pack("<BHHHB", 8, 2, 1, 1, 0) + bytes([7]) \
            + bytes(16) + struct.pack("<4f", 0.0, 0.0, -1.0, 2.0)
        with pytest.raises(InvalidPlaneIndex):
            decode_depthmap(__import__("base64").urlsafe_b64encode(bad_index).decode())

        assert elapsed < 5.0, f"1000 round-trips took {elapsed:.2f}s"
    except BaseException:
        ok = False
        raise
    finally:
        announce(capsys, "codec round-trip", ok)


# ---------------------------------------------------------------------------
# 2. geometry oracles


def _bearing_oracle(a: GeoPoint, b: GeoPoint) -> float:
    """Initial great-circle bearing from cartesian cross products."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))

    def unit(lat, lon):
        return np.array([math.cos(lat) * math.cos(lon),
                         math.cos(lat) * math.sin(lon),
                         math.sin(lat)])

    p1, p2 = unit(lat1, lon1), unit(lat2, lon2)
    north = np.array([0.0, 0.0, 1.0])
    east1 = np.cross(north, p1)
    east1 /= np.linalg.norm(east1)
    north1 = np.cross(p1, east1)
    direction = np.cross(np.cross(p1, p2), p1)
    angle = math.degrees(math.atan2(direction @ east1, direction @ north1))
    return angle % 360.0


def _column_reference(bearing, yaw, width):
    """Both wrap branches of the center-relative column formula."""
    delta = (bearing - yaw) % 360.0
    if delta <= 180.0:
        col = width / 2.0 + delta * width / 360.0
    else:
        col = width / 2.0 - (360.0 - delta) * width / 360.0
    return col % width


def test_geometry_oracles(capsys):
    rng = np.random.default_rng(7)
    started = time.monotonic()
    ok = True
    try:
        for _ in range(10_000):
            a = GeoPoint(float(rng.uniform(-70, 70)),
                         float(rng.uniform(-179, 179)))
            b = GeoPoint(a.lat + float(rng.uniform(-0.01, 0.01)),
                         a.lon + float(rng.uniform(-0.01, 0.01)))
            if (a.lat, a.lon) == (b.lat, b.lon):
                continue
            want = _bearing_oracle(a, b)
            got = bearing_between(a, b)
            assert abs((got - want + 180.0) % 360.0 - 180.0) < 1e-6

        geom = PanoramaGeometry(4096, 2048)
        pitches = rng.uniform(-89.9, 89.9, size=2000)
        half_pixel = 0.5 * 180.0 / geom.height
        for pitch in pitches:
            row = pitch_to_row(pitch, geom)
            assert abs(row_to_pitch(row, geom) - pitch) <= half_pixel + 1e-9

        for _ in range(10_000):
            yaw = float(rng.uniform(-720, 720))
            bearing = float(rng.uniform(-720, 720))
            got = azimuth_to_column(bearing, yaw, geom).column
            want = _column_reference(bearing % 360.0, yaw % 360.0, geom.width)
            assert abs(got - want) < 1e-6 or abs(abs(got - want) - geom.width) < 1e-6

        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"geometry oracles took {elapsed:.2f}s"
    except BaseException:
        ok = False
        raise
    finally:
        announce(capsys, "geometry oracles", ok)


# ---------------------------------------------------------------------------
# 3. end-to-end synthetic accuracy over the 48-scene grid


def test_end_to_end_synthetic_grid(capsys):
    started = time.monotonic()
    ok = True
    try:
        rows = sweep(
            distances=(5.0, 10.0, 20.0, 40.0),
            camera_heights=(2.0, 2.5, 3.0),
            door_heights=(0.0, 0.5, 1.0, 2.0),
            geom=SWEEP_PANORAMA,
            depth_shapes=((256, 512),),
            modes=(dm.PLANE_EXACT, dm.NEAREST_PIXEL),
            seed=0,
        )
        _shared["sweep_rows"] = rows
        exact = [r for r in rows if r["mode"] == dm.PLANE_EXACT]
        naive = [r for r in rows if r["mode"] == dm.NEAREST_PIXEL]
        assert len(exact) == 48 and len(naive) == 48

        worst_lfe = max(r["lfe_abs_error_m"] for r in exact)
        worst_hdsl = max(r["hdsl_abs_error_m"] for r in exact)
        assert worst_lfe <= 0.05, f"plane-exact LFE error {worst_lfe:.4f} m"
        assert worst_hdsl <= 0.07, f"plane-exact HDSL error {worst_hdsl:.4f} m"

        by_distance = {}
        for r in naive:
            by_distance.setdefault(r["facade_distance_m"], []).append(
                r["hdsl_abs_error_m"])
        means = [statistics.fmean(by_distance[d])
                 for d in sorted(by_distance)]
        assert all(lo < hi for lo, hi in zip(means, means[1:])), (
            f"nearest-pixel error not monotone in distance: {means}")

        elapsed = time.monotonic() - started
        assert elapsed < 120.0, f"48-scene grid took {elapsed:.1f}s"
    except BaseException:
        ok = False
        raise
    finally:
        announce(capsys, "end-to-end synthetic grid", ok)


# ---------------------------------------------------------------------------
# 4. robustness of the median pipeline


def _contamination_shift():
    """LFE shift when 20% of door-bottom samples read +0.5 m too high."""
    geom = PanoramaGeometry(256, 128)
    pose = CameraPose(location=GeoPoint(29.68, -95.48),
                      elevation_msl_m=20.0, yaw_deg=0.0)
    n_trace = 40
    columns = np.arange(64, 64 + 2 * n_trace, 2)
    rows = np.full(n_trace, 96)  # pitch -45 deg, comfortably below horizon

    # five nearly level floor planes a couple of centimeters apart provide
    # natural sample spread; plane 6 sits exactly 0.5 m higher
    drops = np.array([3.00, 2.98, 2.99, 3.01, 3.02, 2.50], dtype=np.float32)
    normals = np.tile(np.array([0.0, 0.0, -1.0], dtype=np.float32), (6, 1))

    def build(contaminate):
        indices = np.zeros((64, 128), dtype=np.uint8)
        azimuth = pose.yaw_deg + (columns - geom.width / 2) * 360.0 / geom.width
        pitch = (geom.height / 2 - rows) * 180.0 / geom.height
        probe = DepthPlaneMap(width=128, height=64, normals=normals,
                              distances=drops, indices=indices.copy())
        g_rows, g_cols = dm.grid_position(probe, azimuth, pitch)
        for i, (gr, gc) in enumerate(zip(np.atleast_1d(g_rows),
                                         np.atleast_1d(g_cols))):
            plane = 1 + i % 5
            if contaminate and i % 5 == 0:  # every fifth sample: 8/40 = 20%
                plane = 6
            indices[gr, gc] = plane
        return DepthPlaneMap(width=128, height=64, normals=normals,
                             distances=drops, indices=indices)

    trace = DoorBottomTrace(columns=columns, rows=rows, instance_id=1,
                            visibility=COMPLETE, visible_fraction=1.0)
    clean = estimate_lfe(trace, pose, build(False), geom)
    dirty = estimate_lfe(trace, pose, build(True), geom)

    # make sure the contamination actually reached the samples
    shifted = trace_elevations(columns, rows, pose, build(True), geom)
    baseline = trace_elevations(columns, rows, pose, build(False), geom)
    assert np.isclose(np.max(shifted - baseline), 0.5, atol=1e-6)
    return abs(dirty.value - clean.value)


def _occlude(mask: LabelMask, keep_fraction: float) -> LabelMask:
    """Erase door columns from the right, keeping ~keep_fraction of the
    width expected from the door height (the visibility denominator)."""
    (instance,) = mask.door_instances
    row0, col0, row1, col1 = instance.bbox
    expected = 0.45 * (row1 - row0 + 1)
    keep = max(1, round(keep_fraction * expected))
    labels = np.array(mask.labels)
    labels[:, col0 + keep:col1 + 1][labels[:, col0 + keep:col1 + 1] == 1] = 0
    return LabelMask(labels)


def test_robustness_of_median_pipeline(capsys, rendered):
    ok = True
    try:
        shift = _contamination_shift()
        assert shift < 0.02, f"20% contamination moved LFE by {shift:.4f} m"

        geom = PanoramaGeometry(2048, 1024)
        truth_lfe = rendered.truth["lfe_m"]
        for fraction in (0.25, 0.5, 0.75):
            occluded = _occlude(rendered.mask, fraction)
            m = measure_house(occluded, rendered.depth_map, rendered.pose,
                              geom, rendered.house_bearing_deg)
            assert m.lfe.visibility == PARTIAL
            assert m.lfe.visible_fraction == fraction
            err = abs(m.lfe.value - truth_lfe)
            assert err <= 0.05, (
                f"fraction {fraction}: LFE off truth by {err:.4f} m")

        # error groups per visibility fraction over a 12-scene slice;
        # the fine panorama keeps row quantization below the tolerance
        # even at the 40 m corner of the grid
        groups = {f: [] for f in (0.25, 0.5, 0.75, 1.0)}
        for distance in (5.0, 10.0, 20.0, 40.0):
            for door_above in (0.3, 0.8, 1.3):
                scene = canonical_scene(
                    facade_distance_m=distance,
                    door_bottom_elevation_m=10.0 + door_above,
                )
                shot = render(scene, SWEEP_PANORAMA, depth_shape=(256, 512))
                for fraction in groups:
                    m = measure_house(shot.mask, shot.depth_map, shot.pose,
                                      SWEEP_PANORAMA, shot.house_bearing_deg,
                                      visibility_override=fraction)
                    err = abs(m.lfe.value - shot.truth["lfe_m"])
                    assert err <= 0.05
                    groups[fraction].append(err)
        verdict = kruskal_wallis([groups[f] for f in sorted(groups)])
        assert verdict["p"] > 0.1, (
            f"visibility groups differ: H={verdict['H']:.3f} p={verdict['p']:.4f}")
    except BaseException:
        ok = False
        raise
    finally:
        announce(capsys, "median-pipeline robustness", ok)


# ---------------------------------------------------------------------------
# 5. invariants


def _quartiles_scalar(values):
    """numpy-default linear interpolation, reimplemented longhand."""
    ordered = sorted(values)
    n = len(ordered)

    def at(q):
        pos = (n - 1) * q
        lo = math.floor(pos)
        hi = min(lo + 1, n - 1)
        return ordered[lo] + (pos - lo) * (ordered[hi] - ordered[lo])

    return at(0.25), at(0.75)


def _brute_force_lfe(values, fraction, fence_factor=1.5):
    """Scalar re-implementation of fence -> visibility -> below-median."""
    q1, q3 = _quartiles_scalar(values)
    margin = fence_factor * (q3 - q1)
    fenced = [v for v in values if q1 - margin <= v <= q3 + margin]
    visible = sorted(fenced)[:math.ceil(fraction * len(fenced))]
    med = statistics.median(visible)
    lowest = [v for v in visible if v <= med]
    return statistics.median(lowest)


def test_invariants(capsys, rendered):
    rng = np.random.default_rng(99)
    ok = True
    try:
        geom = PanoramaGeometry(2048, 1024)
        base = measure_house(rendered.mask, rendered.depth_map, rendered.pose,
                             geom, rendered.house_bearing_deg)

        # datum shift: raising the camera raises LFE/RE, HDSL is unchanged
        lifted_pose = replace(rendered.pose, elevation_msl_m=
                              rendered.pose.elevation_msl_m + 37.25)
        lifted = measure_house(rendered.mask, rendered.depth_map, lifted_pose,
                               geom, rendered.house_bearing_deg)
        assert lifted.lfe.value - base.lfe.value == pytest.approx(37.25, abs=1e-9)
        assert lifted.re.value - base.re.value == pytest.approx(37.25, abs=1e-9)
        assert lifted.hdsl == pytest.approx(base.hdsl, abs=1e-9)

        # yaw rotation: camera heading must not leak into the estimates
        turned = render(canonical_scene(camera_yaw_deg=25.0 + 90.0), geom,
                        depth_shape=(256, 512))
        assert np.array_equal(turned.depth_map.indices,
                              rendered.depth_map.indices)
        spun = measure_house(turned.mask, turned.depth_map, turned.pose,
                             geom, turned.house_bearing_deg)
        assert spun.lfe.value == pytest.approx(base.lfe.value, abs=1e-9)
        assert spun.re.value == pytest.approx(base.re.value, abs=1e-9)

        # HDSL is the LFE/RE difference on every grid row and measurement
        rows = _shared.get("sweep_rows") or sweep(
            distances=(5.0,), camera_heights=(2.5,), door_heights=(0.5,))
        for r in rows:
            assert abs(r["hdsl_m"] - (r["lfe_m"] - r["re_m"])) < 1e-9
        assert base.hdsl == pytest.approx(base.lfe.value - base.re.value,
                                          abs=1e-12)

        # funnel counts never increase
        for _ in range(200):
            records = [{s: bool(rng.integers(0, 2)) for s in FUNNEL_STEPS}
                       for _ in range(rng.integers(0, 25))]
            counts = [c for _, c in funnel(records)]
            assert all(a >= b for a, b in zip(counts, counts[1:]))

        # median pipeline equals a scalar brute force on every elevation
        # multiset of size <= 12 over a 4-value alphabet
        alphabet = (10.0, 10.3, 11.2, 14.0)
        for size in range(1, 13):
            for combo in itertools.combinations_with_replacement(alphabet, size):
                values = np.array(combo, dtype=np.float64)
                for fraction in (0.25, 0.5, 0.75, 1.0):
                    fenced = remove_outliers(values)
                    visible = visibility_subset(fenced, fraction)
                    got = float(np.median(below_median_subset(visible)))
                    want = _brute_force_lfe(list(combo), fraction)
                    assert math.isclose(got, want, abs_tol=1e-12), (
                        combo, fraction, got, want)
    except BaseException:
        ok = False
        raise
    finally:
        announce(capsys, "invariants", ok)


# ---------------------------------------------------------------------------
# 6. statistics fixtures and the outlier rule


def test_statistics_fixtures(capsys):
    rng = np.random.default_rng(1234)
    ok = True
    try:
        kw = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
        assert abs(kw["H"] - 7.2) < 1e-9
        assert abs(kw["p"] - math.exp(-3.6)) < 1e-9

        tied = kruskal_wallis([[1, 1, 2], [2, 3, 3]])
        assert abs(tied["H"] - 10.0 / 3.0) < 1e-9
        assert abs(tied["p"] - math.erfc(math.sqrt(5.0 / 3.0))) < 1e-9

        t = paired_t_test([1, 2, 3, 4, 5], [2, 2, 4, 4, 7])
        assert abs(t["t"] - (-2.138089935299395)) < 1e-9
        assert abs(t["p"] - 0.0993006832137268) < 1e-9

        for _ in range(1000):
            n = int(rng.integers(4, 50))
            rows = [EvaluationRow.make(str(i), float(e), float(t_))
                    for i, (e, t_) in enumerate(
                        zip(rng.normal(10, 1, n), rng.normal(10, 1, n)))]
            flagged = flag_outliers(rows)
            q1, q3 = _quartiles_scalar([r.abs_error_m for r in rows])
            fence = q3 + 1.5 * (q3 - q1)
            for row, out in zip(rows, flagged):
                assert out.is_outlier == (row.abs_error_m > fence)
    except BaseException:
        ok = False
        raise
    finally:
        announce(capsys, "statistics fixtures", ok)
