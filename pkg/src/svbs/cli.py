"""Command-line front end: generate, encode, rewrite, decode, validate,
select-tiles, simulate, report.

Angles on the command line are degrees, delays are milliseconds.  Every
command that writes outputs also writes a <name>.manifest.json recording the
tool version, arguments, input digests, and output list, so a run can be
reproduced from the manifest alone.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import math
import os
import statistics
import sys
import tempfile

from . import __version__
from .codec import (
    TrackResolution,
    decode_frame,
    encode_svc,
    encode_track,
    generate_content,
)
from .config import SequenceConfig
from .container import parse, serialize, validate_structure
from .errors import SvbsError
from .geometry import (
    Projection,
    ProjectionKind,
    Viewport,
    read_viewport_trace,
    select_tiles,
)
from .rewriter import rewrite_viewport_frame
from .simulator import (
    NetworkModel,
    Scheme,
    SchemeKind,
    latency_summary,
    network_from_mapping,
    read_session_config,
    run_session,
    scheme_from_mapping,
    write_report_csv,
    write_report_json,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--width", type=int, default=768, help="enhanced-layer width in pixels")
    p.add_argument("--height", type=int, default=384, help="enhanced-layer height in pixels")
    p.add_argument("--scale-factor", type=int, default=2, help="base-layer downscale factor")
    p.add_argument("--tile-cols", type=int, default=6)
    p.add_argument("--tile-rows", type=int, default=4)
    p.add_argument("--fps", default="30", help="frames per second, N or N/D")
    p.add_argument("--gop", type=int, default=30, help="GOP size in frames")
    p.add_argument("--ref-window", type=int, default=1,
                   help="how many previous base frames an enhanced frame may reference")


def _config_from_args(args) -> SequenceConfig:
    fps = str(args.fps)
    if "/" in fps:
        num, den = fps.split("/", 1)
    else:
        num, den = fps, "1"
    return SequenceConfig(
        width=args.width,
        height=args.height,
        scale_factor=args.scale_factor,
        tile_cols=args.tile_cols,
        tile_rows=args.tile_rows,
        fps_num=int(num),
        fps_den=int(den),
        gop_size=args.gop,
        ref_window=args.ref_window,
    )


def _parse_viewport(text: str) -> Viewport:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 4:
        raise SvbsError("--viewport wants yaw,pitch,hfov,vfov in degrees")
    return Viewport.from_degrees(*parts)


def _projection_kind(name: str) -> ProjectionKind:
    return ProjectionKind.ERP if name == "erp" else ProjectionKind.CUBEMAP_3x2


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path: str, args, inputs: list[str], outputs: list[str]) -> None:
    manifest = {
        "tool_version": __version__,
        "command": getattr(args, "command", ""),
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": outputs,
    }
    path = out_path + ".manifest.json"
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- subcommands -------------------------------------------------------------


def _cmd_generate(args) -> int:
    config = _config_from_args(args)
    source = generate_content(args.seed, config, args.frames)
    with open(args.out, "wb") as fh:
        for frame in source.frames:
            fh.write(frame.tobytes())
    _write_manifest(args.out, args, [], [args.out])
    print(f"wrote {args.frames} frames of {config.width}x{config.height} luma to {args.out}")
    return EXIT_OK


def _cmd_encode(args) -> int:
    config = _config_from_args(args)
    source = generate_content(args.seed, config, args.frames)
    if args.schema == "svc":
        stream = encode_svc(source)
    else:
        resolution = TrackResolution.FULL if args.resolution == "full" else TrackResolution.BASE
        stream = encode_track(source, args.gop, resolution)
    data = serialize(stream)
    with open(args.out, "wb") as fh:
        fh.write(data)
    _write_manifest(args.out, args, [], [args.out])
    print(f"encoded {len(stream.frames)} frames, {len(data)} bytes -> {args.out}")
    return EXIT_OK


def _cmd_rewrite(args) -> int:
    with open(args.input, "rb") as fh:
        stream = parse(fh.read())
    if args.viewport:
        viewport = _parse_viewport(args.viewport)
    else:
        trace = read_viewport_trace(args.trace)
        if not trace:
            raise SvbsError("trace is empty")
        viewport = trace[0][1]
    projection = Projection(_projection_kind(args.projection), stream.config.width,
                            stream.config.height)
    selected = select_tiles(viewport, projection, stream.config,
                            math.radians(args.step_deg))
    targets = range(len(stream.frames)) if args.frame is None else [args.frame]
    frames = list(stream.frames)
    for k in targets:
        frames[k] = rewrite_viewport_frame(frames[k], selected, stream.config)
    out_stream = stream.__class__(config=stream.config, frames=tuple(frames))
    data = serialize(out_stream)
    with open(args.out, "wb") as fh:
        fh.write(data)
    _write_manifest(args.out, args, [args.input], [args.out])
    print(f"rewrote {len(list(targets))} frame(s), kept tiles {sorted(selected)} -> {args.out}")
    return EXIT_OK


def _cmd_decode(args) -> int:
    with open(args.input, "rb") as fh:
        stream = parse(fh.read())
    if args.tiles == "all":
        tiles = set(range(stream.config.tile_count))
    elif args.tiles == "none":
        tiles = set()
    else:
        tiles = {int(x) for x in args.tiles.split(",")}
    frame = decode_frame(stream, args.frame, tiles)
    with open(args.out, "wb") as fh:
        fh.write(frame.tobytes())
    _write_manifest(args.out, args, [args.input], [args.out])
    print(f"decoded frame {args.frame} ({frame.width}x{frame.height}) -> {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    with open(args.input, "rb") as fh:
        stream = parse(fh.read())
    report = validate_structure(stream)
    for violation in report:
        print(f"frame {violation.frame_index}: {violation.rule} {violation.detail}")
    if report:
        print(f"{len(report)} violation(s)")
        return EXIT_DATA
    print(f"ok: {len(stream.frames)} frames, no violations")
    return EXIT_OK


def _cmd_select_tiles(args) -> int:
    config = _config_from_args(args)
    viewport = _parse_viewport(args.viewport)
    projection = Projection(_projection_kind(args.projection), config.width, config.height)
    tiles = select_tiles(viewport, projection, config, math.radians(args.step_deg))
    print(",".join(str(t) for t in sorted(tiles)))
    return EXIT_OK


def _build_scheme(text: str) -> Scheme:
    if text == "svc":
        return Scheme(SchemeKind.SVC)
    if text.startswith("multitrack"):
        inner = text[len("multitrack"):].strip("():")
        if inner:
            parts = [int(x) for x in inner.split(",")]
            long_gop = parts[0]
            short_gop = parts[1] if len(parts) > 1 else 0
        else:
            long_gop, short_gop = 30, 0
        return Scheme(SchemeKind.MULTITRACK, long_gop=long_gop, short_gop=short_gop)
    raise SvbsError(f"unknown scheme {text!r} (svc or multitrack(LONG,SHORT))")


def _cmd_simulate(args) -> int:
    config = _config_from_args(args)
    trace = read_viewport_trace(args.trace)
    if args.net:
        mapping = read_session_config(args.net)
        network = network_from_mapping(mapping)
        schemes = [scheme_from_mapping(mapping)] if not args.scheme else None
    else:
        network = NetworkModel(
            uplink_delay_ms=args.uplink_ms,
            downlink_delay_ms=args.downlink_ms,
            bandwidth_bytes_per_s=args.bandwidth_bps,
        )
        schemes = None
    if schemes is None:
        schemes = [_build_scheme(s) for s in (args.scheme or ["svc"])]

    def one(scheme):
        return run_session(
            scheme, trace, network, config, args.seed,
            projection_kind=_projection_kind(args.projection),
            select_step=math.radians(args.step_deg),
        )

    if args.jobs > 1 and len(schemes) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(one, schemes))
    else:
        reports = [one(s) for s in schemes]

    outputs = []
    for scheme, report in zip(schemes, reports):
        stem = f"{args.out}.{scheme.label.replace('(', '_').replace(')', '').replace(',', '_')}"
        write_report_json(report, stem + ".json")
        write_report_csv(report, stem + ".csv")
        outputs += [stem + ".json", stem + ".csv"]
    for entry in latency_summary(reports):
        print(json.dumps(entry))
    _write_manifest(args.out, args, [args.trace] + ([args.net] if args.net else []), outputs)
    return EXIT_OK


def _cmd_report(args) -> int:
    switch_rows: dict[str, list[tuple[float | None, float | None]]] = {}
    byte_rows: dict[str, int] = {}
    for path in args.csv:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                scheme = row["scheme"]
                if row["row"] == "switch":
                    mtp = float(row["mtp_ms"]) if row["mtp_ms"] else None
                    raw = row["mthq_ms"]
                    mthq = float(raw) if raw and raw != "NOT_REACHED" else None
                    switch_rows.setdefault(scheme, []).append((mtp, mthq))
                elif row["row"] == "second":
                    byte_rows[scheme] = byte_rows.get(scheme, 0) + int(row["bytes"])
    summary = []
    for scheme, samples in sorted(switch_rows.items()):
        mthq = [m for _, m in samples if m is not None]
        summary.append(
            {
                "scheme": scheme,
                "switches": len(samples),
                "mean_mthq_ms": statistics.fmean(mthq) if mthq else None,
                "p95_mthq_ms": sorted(mthq)[max(0, math.ceil(0.95 * len(mthq)) - 1)]
                if mthq
                else None,
                "total_bytes": byte_rows.get(scheme, 0),
            }
        )
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# --- argument wiring ---------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="svbs", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write deterministic synthetic luma frames")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("encode", help="encode synthetic content to an SVB stream")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--frames", type=int, default=30)
    p.add_argument("--schema", choices=["svc", "track"], default="svc")
    p.add_argument("--resolution", choices=["full", "base"], default="full",
                   help="track schema only")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("rewrite", help="rewrite frames of a stream for one viewport")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--viewport", help="yaw,pitch,hfov,vfov in degrees")
    p.add_argument("--trace", help="viewport trace file; first entry is used")
    p.add_argument("--frame", type=int, help="rewrite only this frame (default: all)")
    p.add_argument("--projection", choices=["erp", "cubemap"], default="erp")
    p.add_argument("--step-deg", type=float, default=0.25, help="ray sampling step in degrees")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rewrite)

    p = sub.add_parser("decode", help="decode one frame to raw 8-bit luma")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--frame", type=int, default=0)
    p.add_argument("--tiles", default="all", help="comma list of tile indices, or all/none")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("validate", help="check structural rules; exit 0 iff clean")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("select-tiles", help="print the tile set for a viewport")
    _add_config_flags(p)
    p.add_argument("--viewport", required=True, help="yaw,pitch,hfov,vfov in degrees")
    p.add_argument("--projection", choices=["erp", "cubemap"], default="erp")
    p.add_argument("--step-deg", type=float, default=0.25)
    p.set_defaults(func=_cmd_select_tiles)

    p = sub.add_parser("simulate", help="run a streaming session over a viewport trace")
    _add_config_flags(p)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--trace", required=True)
    p.add_argument("--scheme", action="append",
                   help="svc or multitrack(LONG,SHORT); repeatable")
    p.add_argument("--net", help="key=value session config file")
    p.add_argument("--uplink-ms", type=float, default=0.0)
    p.add_argument("--downlink-ms", type=float, default=0.0)
    p.add_argument("--bandwidth-bps", type=float, default=None,
                   help="bytes per second; omit for unlimited")
    p.add_argument("--projection", choices=["erp", "cubemap"], default="erp")
    p.add_argument("--step-deg", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output stem for report files")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("report", help="merge simulate CSVs and print a summary")
    p.add_argument("csv", nargs="+")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except SvbsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
