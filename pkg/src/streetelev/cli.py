"""Command-line front end wiring the pipeline end to end.

Subcommands: ``decode`` (depthmap inspection), ``estimate`` (per-house
LFE/RE/HDSL table), ``evaluate`` (accuracy report against ground truth),
``synth`` (render scene bundles or run the parameter sweep), ``mask``
(label-mask schema check).

Exit codes: 0 success, 1 usage error, 2 data error (malformed input),
3 estimate ran but every house failed.  Every command is deterministic
given its inputs; reruns produce byte-identical files.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import csv
import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import depthmap as dm
from . import stats as st
from .errors import NoTruth, ParseError, StreetElevError, TooFewRows
from .estimate import measure_house
from .geometry import (
    PanoramaGeometry,
    bearing_between,
    great_circle_distance_m,
    search_windows,
)
from .ingest import (
    DEFAULT_MAX_DISTANCE_M,
    DEFAULT_MIN_CAPTURE_DATE,
    PanoramaBundle,
    load_bundles,
    load_houses,
    save_bundle,
)
from .masks import load_mask
from .synth import (
    SWEEP_CAMERA_HEIGHTS_M,
    SWEEP_DISTANCES_M,
    SWEEP_DOOR_ABOVE_ROAD_M,
    SWEEP_PANORAMA,
    load_scene,
    render,
    render_preview,
    sweep,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_ALL_FAILED = 3

ESTIMATE_COLUMNS = [
    "house_id", "pano_id", "lfe_m", "re_m", "hdsl_m", "lfe_truth_m",
    "visibility", "visible_fraction", "instance_id", "roadside_feature",
    "camera_distance_m", "ground_truth", "svi_available", "door_visible",
    "date_matched", "door_bottom_detected", "error",
]


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Estimate-run settings; round-trips through a JSON file."""

    houses: str
    bundles: str
    output: str
    mode: str = dm.PLANE_EXACT
    window_half_width_deg: float = 45.0
    window_shift_deg: float = 22.5
    roadside_offset_px: int = 20
    fence_factor: float = 1.5
    min_capture_date: str = DEFAULT_MIN_CAPTURE_DATE
    max_distance_m: float = DEFAULT_MAX_DISTANCE_M
    literal_median: bool = False
    visibility_overrides: dict = dataclasses.field(default_factory=dict)
    jobs: int = 1

    def __post_init__(self):
        if self.mode not in dm.SAMPLING_MODES:
            raise ValueError(f"mode must be one of {dm.SAMPLING_MODES}, got {self.mode!r}")
        if not 0.0 < self.window_half_width_deg <= 90.0:
            raise ValueError("window half width must be in (0, 90] degrees")
        if not 0.0 <= self.window_shift_deg < 2.0 * self.window_half_width_deg:
            raise ValueError("window shift must be in [0, window width)")
        if self.roadside_offset_px < 0:
            raise ValueError("roadside offset must be >= 0 pixels")
        if self.fence_factor < 0.0:
            raise ValueError("fence factor must be >= 0")
        if self.max_distance_m <= 0.0:
            raise ValueError("distance cap must be positive")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        for house_id, fraction in self.visibility_overrides.items():
            if fraction not in (0.25, 0.5, 0.75, 1.0):
                raise ValueError(
                    f"visibility override for {house_id!r} must be a quarter "
                    f"fraction, got {fraction}"
                )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return RunConfig.from_json(json.load(fh))


def save_config(config: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# decode


def cmd_decode(args) -> int:
    with open(args.path) as fh:
        text = fh.read().strip()
    depth_map = dm.decode_depthmap(text)
    print(f"planes={depth_map.plane_count} {depth_map.height}x{depth_map.width}")
    if args.sidecar:
        with open(args.sidecar, "w") as fh:
            json.dump(depth_map.debug_summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.roundtrip:
        compressed = _was_compressed(text)
        with open(args.roundtrip, "w") as fh:
            fh.write(dm.encode_depthmap(depth_map, compress=compressed) + "\n")
    return EXIT_OK


def _was_compressed(text: str) -> bool:
    padded = text + "=" * (-len(text) % 4)
    raw = base64.urlsafe_b64decode(padded.encode("ascii"))
    return not (raw and raw[0] == 8)


# ---------------------------------------------------------------------------
# estimate


def _empty_row(house) -> dict:
    row = {c: "" for c in ESTIMATE_COLUMNS}
    row["house_id"] = house.house_id
    row["lfe_truth_m"] = "" if house.lfe_truth_m is None else repr(house.lfe_truth_m)
    for step in st.FUNNEL_STEPS:
        row[step] = 0
    row["ground_truth"] = int(house.lfe_truth_m is not None)
    return row


def _door_columns(bundle, house, config) -> int:
    """Widest in-window door-instance column count; 0 when no door shows."""
    if bundle.mask is None or not bundle.mask.door_instances:
        return 0
    geom = PanoramaGeometry(bundle.width, bundle.height)
    bearing = bearing_between(bundle.pose.location, house.location)
    window = search_windows(bearing, half_width_deg=config.window_half_width_deg,
                            shift_deg=config.window_shift_deg)[0]
    in_window = window.column_mask(bundle.pose.yaw_deg, geom)
    return max(
        int(np.count_nonzero(in_window[inst.columns]))
        for inst in bundle.mask.door_instances
    )


def _date_ok(bundle, house, config) -> bool:
    captured = bundle.pose.captured
    if config.min_capture_date and (captured is None or captured < config.min_capture_date):
        return False
    if house.reconstruction_date is not None:
        if captured is None or captured <= house.reconstruction_date:
            return False
    return True


def _select_candidate(candidates, house):
    """Widest in-window door span wins; near/new/id break ties."""

    def score(item):
        cols, dist, bundle = item
        return (-cols, dist, tuple(-ord(c) for c in (bundle.pose.captured or "")),
                bundle.pano_id)

    return min(candidates, key=score)[2]


def _estimate_one(house, bundles, config) -> dict:
    row = _empty_row(house)
    in_range = []
    for bundle in bundles:
        dist = great_circle_distance_m(house.location, bundle.pose.location)
        if dist <= config.max_distance_m:
            in_range.append((dist, bundle))
    if not in_range:
        row["error"] = "NoCandidateInRange"
        return row
    row["svi_available"] = 1

    with_door = []
    for dist, bundle in in_range:
        cols = _door_columns(bundle, house, config)
        if cols:
            with_door.append((cols, dist, bundle))
    if not with_door:
        row["error"] = "NoVisibleDoor"
        return row
    row["door_visible"] = 1

    dated = [item for item in with_door if _date_ok(item[2], house, config)]
    if not dated:
        row["error"] = "DateFiltered"
        return row
    row["date_matched"] = 1

    best = _select_candidate(dated, house)
    row["pano_id"] = best.pano_id
    row["camera_distance_m"] = repr(
        great_circle_distance_m(house.location, best.pose.location)
    )
    try:
        geom = PanoramaGeometry(best.width, best.height)
        depth_map = dm.decode_depthmap(best.depthmap_b64)
        bearing = bearing_between(best.pose.location, house.location)
        measurement = measure_house(
            best.mask, depth_map, best.pose, geom, bearing,
            mode=config.mode,
            roadside_offset_px=config.roadside_offset_px,
            literal_median=config.literal_median,
            visibility_override=config.visibility_overrides.get(house.house_id),
            window_half_width_deg=config.window_half_width_deg,
            window_shift_deg=config.window_shift_deg,
            fence_factor=config.fence_factor,
        )
    except StreetElevError as exc:
        row["error"] = type(exc).__name__
        return row
    row.update(
        lfe_m=repr(measurement.lfe.value),
        re_m=repr(measurement.re.value),
        hdsl_m=repr(measurement.hdsl),
        visibility=measurement.lfe.visibility,
        visible_fraction=repr(measurement.lfe.visible_fraction),
        instance_id=measurement.instance_id,
        roadside_feature=measurement.roadside_feature,
        door_bottom_detected=1,
    )
    return row


def run_estimate(config: RunConfig) -> list:
    """Estimate every house in the table; one result row per house."""
    houses = load_houses(config.houses)
    bundles = load_bundles(config.bundles)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(lambda h: _estimate_one(h, bundles, config), houses))
    else:
        rows = [_estimate_one(h, bundles, config) for h in houses]
    rows.sort(key=lambda r: r["house_id"])
    return rows


def write_estimates(rows, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ESTIMATE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def cmd_estimate(args) -> int:
    config = _config_from_args(args)
    if args.save_config:
        save_config(config, args.save_config)
    rows = run_estimate(config)
    write_estimates(rows, config.output)
    succeeded = sum(1 for r in rows if r["door_bottom_detected"] == 1)
    print(f"estimated {succeeded}/{len(rows)} houses -> {config.output}")
    if rows and succeeded == 0:
        return EXIT_ALL_FAILED
    return EXIT_OK


def _config_from_args(args) -> RunConfig:
    base = load_config(args.config).to_json() if args.config else {}
    overrides = {
        "houses": args.houses,
        "bundles": args.bundles,
        "output": args.output,
        "mode": args.mode,
        "window_half_width_deg": args.window_half_width,
        "window_shift_deg": args.window_shift,
        "roadside_offset_px": args.roadside_offset,
        "fence_factor": args.fence_factor,
        "min_capture_date": args.min_capture_date,
        "max_distance_m": args.max_distance,
        "literal_median": args.literal_median or None,
        "jobs": args.jobs,
    }
    for key, value in overrides.items():
        if value is not None:
            base[key] = value
    for required in ("houses", "bundles", "output"):
        if not base.get(required):
            raise UsageError(f"--{required} is required (flag or config file)")
    return RunConfig.from_json(base)


# ---------------------------------------------------------------------------
# evaluate


def _read_estimates(path: str) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "house_id" not in reader.fieldnames:
            raise ParseError(f"{path} is not an estimates table", row=1)
        return list(reader)


def cmd_evaluate(args) -> int:
    estimates = _read_estimates(args.estimates)
    truth = {h.house_id: h.lfe_truth_m for h in load_houses(args.houses)}

    eval_rows = []
    hdsl_values = []
    for record in estimates:
        if record.get("lfe_m"):
            hdsl_values.append(float(record["hdsl_m"]))
            truth_m = truth.get(record["house_id"])
            if truth_m is not None:
                eval_rows.append(
                    st.EvaluationRow.make(
                        record["house_id"], float(record["lfe_m"]), truth_m,
                        visibility=record.get("visibility") or None,
                    )
                )
    if not eval_rows:
        raise NoTruth("no successful estimate has ground truth")

    try:
        eval_rows = st.flag_outliers(eval_rows)
        outliers_skipped = None
    except TooFewRows as exc:
        outliers_skipped = str(exc)

    report = {
        "n_estimates": len(estimates),
        "n_scored": len(eval_rows),
        "mae": st.mae(eval_rows),
        "outliers": None if outliers_skipped else
        sorted(r.house_id for r in eval_rows if r.is_outlier),
        "outliers_skipped": outliers_skipped,
        "hdsl": st.hdsl_distribution(hdsl_values, thresholds=tuple(args.thresholds))
        if hdsl_values else None,
        # CSV flags are the strings "0"/"1"; coerce before counting
        "funnel": [list(pair) for pair in st.funnel(
            [{s: r.get(s) == "1" for s in st.FUNNEL_STEPS} for r in estimates]
        )],
    }
    if args.groups:
        report["kruskal_wallis"] = _grouped_test(eval_rows, args.groups,
                                                 args.permutation)

    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_scored_rows(eval_rows, os.path.join(args.out_dir, "rows.csv"))
    st.write_histogram_svg(
        [r.abs_error_m for r in eval_rows],
        os.path.join(args.out_dir, "abs_error_hist.svg"),
        title="Absolute LFE error", x_label="meters",
    )
    if hdsl_values:
        st.write_histogram_svg(
            hdsl_values, os.path.join(args.out_dir, "hdsl_hist.svg"),
            title="Estimated street-to-floor height", x_label="meters",
        )
    print(
        f"scored {len(eval_rows)} houses: mae={report['mae']['meters']:.4f} m "
        f"-> {args.out_dir}"
    )
    return EXIT_OK


def _grouped_test(eval_rows, column: str, permutation: bool) -> dict:
    groups = {}
    for row in eval_rows:
        key = getattr(row, column, None)
        groups.setdefault(key if key is not None else "unknown", []).append(
            row.abs_error_m
        )
    labels = sorted(groups)
    if len(labels) < 2:
        return {"skipped": f"need >= 2 {column} groups, found {len(labels)}"}
    try:
        result = st.kruskal_wallis([groups[k] for k in labels],
                                   permutation=permutation)
    except StreetElevError as exc:
        return {"skipped": str(exc)}
    result["groups"] = {k: len(groups[k]) for k in labels}
    return result


def _write_scored_rows(eval_rows, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["house_id", "estimate_m", "truth_m", "error_m",
                         "abs_error_m", "visibility", "is_outlier"])
        for r in eval_rows:
            writer.writerow([r.house_id, repr(r.estimate_m), repr(r.truth_m),
                             repr(r.error_m), repr(r.abs_error_m),
                             r.visibility or "", int(r.is_outlier)])


# ---------------------------------------------------------------------------
# synth


def _parse_shape(text: str):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise UsageError(f"shape must look like 2048x4096, got {text!r}") from None


def _float_list(text: str):
    return tuple(float(v) for v in text.split(","))


def cmd_synth(args) -> int:
    if args.sweep:
        return _synth_sweep(args)
    if not args.scene:
        raise UsageError("synth needs --scene FILE or --sweep")
    scene = load_scene(args.scene)
    pano_h, pano_w = _parse_shape(args.pano)
    geom = PanoramaGeometry(width=pano_w, height=pano_h)
    rendered = render(scene, geom, depth_shape=_parse_shape(args.depth))

    pano_id = args.pano_id or _scene_pano_id(args.scene)
    bundle = PanoramaBundle(
        pano_id=pano_id,
        pose=rendered.pose,
        width=geom.width,
        height=geom.height,
        depthmap_b64=dm.encode_depthmap(rendered.depth_map),
        mask=rendered.mask,
    )
    path = save_bundle(bundle, args.out)
    if args.image:
        from PIL import Image

        Image.fromarray(render_preview(scene, geom)).save(
            os.path.join(path, "image.png"), format="PNG"
        )
    truth = dict(rendered.truth)
    truth["house_lat"] = rendered.house_location.lat
    truth["house_lon"] = rendered.house_location.lon
    truth["house_bearing_deg"] = rendered.house_bearing_deg
    with open(os.path.join(path, "truth.json"), "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"rendered {pano_id} ({pano_h}x{pano_w}) -> {path}")
    return EXIT_OK


def _scene_pano_id(scene_path: str) -> str:
    with open(scene_path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()[:12]
    return f"synth-{digest}"


def _synth_sweep(args) -> int:
    pano_h, pano_w = _parse_shape(args.pano or "4096x8192")
    shapes = tuple(_parse_shape(s) for s in args.depth_shapes.split(","))
    rows = sweep(
        distances=_float_list(args.distances),
        camera_heights=_float_list(args.camera_heights),
        door_heights=_float_list(args.door_heights),
        geom=PanoramaGeometry(width=pano_w, height=pano_h),
        depth_shapes=shapes,
        modes=tuple(args.modes.split(",")),
        seed=args.seed,
    )
    if not rows:
        with open(args.out, "w", newline="") as fh:
            fh.write("")
        print(f"empty sweep grid -> {args.out}")
        return EXIT_OK
    columns = list(rows[0].keys())
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({
                k: repr(v) if isinstance(v, float) else v for k, v in row.items()
            })
    print(f"swept {len(rows)} rows -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mask


def cmd_mask(args) -> int:
    sidecar = os.path.splitext(args.path)[0] + ".json" if args.strict else None
    mask = load_mask(args.path, sidecar_path=sidecar)
    print(f"ok doors={len(mask.door_instances)} {mask.height}x{mask.width}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse defaults to exit code 2; this tool reserves 2 for data
        # errors and uses 1 for usage problems
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="streetelev",
        description="Estimate lowest-floor and street elevations from "
                    "street-view panorama bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decode", help="inspect an encoded depthmap file")
    p.add_argument("path", help="base64 depthmap file")
    p.add_argument("--sidecar", metavar="JSON",
                   help="write a plane-table summary next to the decode")
    p.add_argument("--roundtrip", metavar="B64",
                   help="re-encode the decoded map to this file")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("estimate", help="per-house LFE/RE/HDSL table")
    p.add_argument("--config", metavar="JSON", help="run-config file; flags override")
    p.add_argument("--save-config", metavar="JSON",
                   help="write the effective config for reproduction")
    p.add_argument("--houses", help="house CSV (id,address,lat,lon,...)")
    p.add_argument("--bundles", help="directory of panorama bundles")
    p.add_argument("--output", help="estimates CSV to write")
    p.add_argument("--mode", choices=sorted(dm.SAMPLING_MODES),
                   help=f"depth sampling mode (default {dm.PLANE_EXACT})")
    p.add_argument("--window-half-width", type=float, metavar="DEG",
                   help="door search window half width (default 45)")
    p.add_argument("--window-shift", type=float, metavar="DEG",
                   help="retry window translation (default 22.5)")
    p.add_argument("--roadside-offset", type=int, metavar="PX",
                   help="grass/dirt fallback row offset at 8192-row scale "
                        "(default 20)")
    p.add_argument("--fence-factor", type=float, metavar="F",
                   help="IQR multiplier for the outlier fence (default 1.5)")
    p.add_argument("--min-capture-date", metavar="YYYY-MM-DD",
                   help=f"discard older imagery (default {DEFAULT_MIN_CAPTURE_DATE})")
    p.add_argument("--max-distance", type=float, metavar="M",
                   help=f"camera-to-house cap (default {DEFAULT_MAX_DISTANCE_M:g})")
    p.add_argument("--literal-median", action="store_true", default=False,
                   help="median of the visibility subset, skipping the "
                        "below-median step")
    p.add_argument("--jobs", type=int, metavar="N", help="parallel houses (default 1)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="score estimates against ground truth")
    p.add_argument("--estimates", required=True, help="CSV from the estimate command")
    p.add_argument("--houses", required=True, help="house CSV with lfe_truth_m")
    p.add_argument("--out-dir", required=True, help="report directory")
    p.add_argument("--groups", metavar="COLUMN",
                   help="Kruskal-Wallis on abs errors grouped by this row "
                        "field (e.g. visibility)")
    p.add_argument("--permutation", action="store_true",
                   help="exact permutation p-value (small samples only)")
    p.add_argument("--thresholds", type=_float_list, default=(0.305, 0.536),
                   metavar="M,M", help="HDSL fraction-below thresholds")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="render synthetic bundles or sweep a grid")
    p.add_argument("--scene", metavar="JSON", help="scene description to render")
    p.add_argument("--out", required=True, metavar="PATH",
                   help="bundle root (scene) or CSV table (sweep)")
    p.add_argument("--pano", metavar="HxW", default="2048x4096",
                   help="panorama size (sweep default 4096x8192)")
    p.add_argument("--depth", metavar="HxW", default="256x512", help="depthmap size")
    p.add_argument("--image", action="store_true",
                   help="also write a flat-shaded RGB preview panorama")
    p.add_argument("--pano-id", help="bundle id (default: scene content hash)")
    p.add_argument("--sweep", action="store_true",
                   help="render the full parameter grid and write an error table")
    p.add_argument("--seed", type=int, default=0, help="sweep jitter seed")
    p.add_argument("--distances", default=",".join(map(str, SWEEP_DISTANCES_M)),
                   metavar="M,..", help="facade distances")
    p.add_argument("--camera-heights",
                   default=",".join(map(str, SWEEP_CAMERA_HEIGHTS_M)),
                   metavar="M,..", help="camera heights above road")
    p.add_argument("--door-heights",
                   default=",".join(map(str, SWEEP_DOOR_ABOVE_ROAD_M)),
                   metavar="M,..", help="door heights above road")
    p.add_argument("--depth-shapes", default="256x512", metavar="HxW,..",
                   help="depthmap sizes to compare")
    p.add_argument("--modes", default=",".join(sorted(dm.SAMPLING_MODES)),
                   metavar="M,..", help="sampling modes to compare")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mask", help="validate a label mask and its sidecar")
    p.add_argument("path", help="mask PNG")
    p.add_argument("--strict", action="store_true",
                   help="fail when the instance sidecar is missing "
                        "(present sidecars are always cross-checked)")
    p.set_defaults(func=cmd_mask)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StreetElevError, OSError, ValueError, KeyError,
            json.JSONDecodeError, binascii.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
