"""Mock layered tiled codec over procedurally generated 8-bit luma video.

The encoder realizes the two-layer structure: a downscaled base layer with
conventional KEY/INTER delta coding, and an enhanced layer whose tiles are
residuals against the nearest-neighbor-upscaled base layer only, never
against other enhanced frames.  Residuals are stored as mod-256 difference
bytes and run-length coded, so payload sizes respond to content while
reconstruction stays bit-exact.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .config import SequenceConfig
from .container import (
    Bitstream,
    Frame,
    FrameHeader,
    FrameType,
    LayerFrame,
    LayerId,
    Tile,
    TileGroup,
    TileKind,
    UNIT_HEADER_SIZE,
    validate_structure,
)
from .errors import (
    BadConfigError,
    BadDimensionsError,
    CorruptRleError,
    InvalidStructureError,
    MissingBaseError,
)

PSNR_INF = math.inf

# Zero runs shorter than this are cheaper as literals.
MIN_ZERO_RUN = 6

_RUN_ZERO = 0
_RUN_LITERAL = 1


@dataclass(eq=False)
class RasterFrame:
    """One 8-bit luma frame, row-major."""

    width: int
    height: int
    samples: np.ndarray  # shape (height, width), dtype uint8

    def __post_init__(self) -> None:
        self.samples = np.ascontiguousarray(self.samples, dtype=np.uint8)
        if self.samples.shape != (self.height, self.width):
            raise BadDimensionsError(
                f"samples shape {self.samples.shape} does not match "
                f"{self.height}x{self.width}"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RasterFrame):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.samples, other.samples)
        )

    def tobytes(self) -> bytes:
        return self.samples.tobytes()


@dataclass(frozen=True)
class VideoSource:
    config: SequenceConfig
    frames: tuple[RasterFrame, ...]
    seed: int


@dataclass(frozen=True)
class RateRecord:
    """Serialized byte cost of one container unit, attributed to a tile."""

    frame_index: int
    layer_id: LayerId
    tile_index: int | None  # None for frame headers / delimiters
    n_bytes: int


# --- content generation ------------------------------------------------------


def generate_content(seed: int, config: SequenceConfig, frame_count: int) -> VideoSource:
    """Deterministic synthetic video: textured background plus drifting blobs.

    The background carries pixel-level detail that box downsampling loses,
    while frame-to-frame change is confined to a few slowly moving compact
    blobs.  That makes INTER frames much cheaper than KEY frames and the
    enhanced layer genuinely informative over the upscaled base.
    """
    if frame_count < 1:
        raise BadConfigError("frame_count must be >= 1")
    w, h = config.width, config.height
    rng = np.random.default_rng(seed)

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    background = np.full((h, w), 128.0)
    for _ in range(5):
        amp = rng.uniform(6.0, 14.0)
        fx = rng.uniform(1.0, 9.0)
        fy = rng.uniform(1.0, 9.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        background += amp * np.sin(2 * np.pi * (fx * xs / w + fy * ys / h) + phase)
    # Static pixel-level detail: survives temporal deltas, lost by downsampling.
    background += rng.uniform(-10.0, 10.0, size=(h, w))

    n_blobs = 4
    blob_amp = rng.uniform(40.0, 70.0, size=n_blobs)
    blob_r = rng.uniform(0.08, 0.16, size=n_blobs) * min(w, h)
    blob_x0 = rng.uniform(0, w, size=n_blobs)
    blob_y0 = rng.uniform(0, h, size=n_blobs)
    blob_vx = rng.uniform(-2.0, 2.0, size=n_blobs)
    blob_vy = rng.uniform(-1.5, 1.5, size=n_blobs)

    frames = []
    for t in range(frame_count):
        img = background.copy()
        for j in range(n_blobs):
            cx = (blob_x0[j] + blob_vx[j] * t) % w
            cy = (blob_y0[j] + blob_vy[j] * t) % h
            # Wrap-aware distance so blobs drift seamlessly across edges.
            dx = np.minimum(np.abs(xs - cx), w - np.abs(xs - cx))
            dy = np.minimum(np.abs(ys - cy), h - np.abs(ys - cy))
            r2 = (dx * dx + dy * dy) / (blob_r[j] * blob_r[j])
            bump = np.maximum(0.0, 1.0 - r2)
            img += blob_amp[j] * bump * bump
        samples = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        frames.append(RasterFrame(w, h, samples))
    return VideoSource(config=config, frames=tuple(frames), seed=seed)


# --- resampling --------------------------------------------------------------


def downsample(frame: RasterFrame, factor: int) -> RasterFrame:
    """Box filter: mean of each factor x factor block, rounded half-up."""
    if factor < 1:
        raise BadDimensionsError("factor must be >= 1")
    if frame.width % factor or frame.height % factor:
        raise BadDimensionsError(
            f"{frame.width}x{frame.height} not divisible by factor {factor}"
        )
    if factor == 1:
        return RasterFrame(frame.width, frame.height, frame.samples.copy())
    h2, w2 = frame.height // factor, frame.width // factor
    blocks = frame.samples.reshape(h2, factor, w2, factor).astype(np.uint32)
    sums = blocks.sum(axis=(1, 3))
    f2 = factor * factor
    out = ((2 * sums + f2) // (2 * f2)).astype(np.uint8)
    return RasterFrame(w2, h2, out)


def upsample_nearest(frame: RasterFrame, factor: int) -> RasterFrame:
    """Replicate each source pixel factor x factor."""
    if factor < 1:
        raise BadDimensionsError("factor must be >= 1")
    out = np.repeat(np.repeat(frame.samples, factor, axis=0), factor, axis=1)
    return RasterFrame(frame.width * factor, frame.height * factor, out)


# --- run-length coding -------------------------------------------------------


def rle_compress(data: bytes) -> bytes:
    """Repeated records: run_type u8 (0=zero run, 1=literal), length u32,
    then literal bytes for type 1.  Zero runs shorter than MIN_ZERO_RUN are
    folded into literals."""
    arr = np.frombuffer(bytes(data), dtype=np.uint8)
    n = arr.size
    if n == 0:
        return b""
    padded = np.concatenate(([False], arr == 0, [False]))
    edges = np.diff(padded.astype(np.int8))
    starts = np.nonzero(edges == 1)[0]
    ends = np.nonzero(edges == -1)[0]

    out = []
    lit_start = 0
    for s, e in zip(starts, ends):
        if e - s < MIN_ZERO_RUN:
            continue
        if s > lit_start:
            out.append(struct.pack("<BI", _RUN_LITERAL, s - lit_start))
            out.append(arr[lit_start:s].tobytes())
        out.append(struct.pack("<BI", _RUN_ZERO, e - s))
        lit_start = e
    if lit_start < n:
        out.append(struct.pack("<BI", _RUN_LITERAL, n - lit_start))
        out.append(arr[lit_start:].tobytes())
    return b"".join(out)


def rle_decompress(data: bytes) -> bytes:
    out = []
    pos = 0
    n = len(data)
    while pos < n:
        if n - pos < 5:
            raise CorruptRleError(f"truncated record header at offset {pos}")
        run_type, length = struct.unpack_from("<BI", data, pos)
        pos += 5
        if run_type == _RUN_ZERO:
            out.append(b"\x00" * length)
        elif run_type == _RUN_LITERAL:
            if n - pos < length:
                raise CorruptRleError(f"literal run of {length} overruns input at offset {pos}")
            out.append(data[pos : pos + length])
            pos += length
        else:
            raise CorruptRleError(f"unknown run type {run_type} at offset {pos - 5}")
    return b"".join(out)


# --- residual helpers --------------------------------------------------------


def _residual(cur: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Mod-256 difference bytes; zero byte means no change."""
    return (cur.astype(np.int16) - ref.astype(np.int16)).astype(np.uint8)


def _apply_residual(ref: np.ndarray, res: np.ndarray) -> np.ndarray:
    return (ref.astype(np.int16) + res.astype(np.int16)).astype(np.uint8)


def _tile_region(config: SequenceConfig, tile_index: int) -> tuple[slice, slice]:
    col, row = config.tile_position(tile_index)
    tw, th = config.tile_width, config.tile_height
    return slice(row * th, (row + 1) * th), slice(col * tw, (col + 1) * tw)


def _coded_tile_group(tile_index: int, cols: int, payload: bytes) -> TileGroup:
    tile = Tile(
        tile_index=tile_index,
        tile_col=tile_index % cols,
        tile_row=tile_index // cols,
        tile_kind=TileKind.CODED,
        coded_payload=payload,
    )
    return TileGroup(tg_start=tile_index, tg_end=tile_index, tiles=(tile,))


def _single_group_covering(payloads: list[bytes], cols: int) -> tuple[TileGroup, ...]:
    """One single-tile TileGroup per payload, raster order."""
    return tuple(_coded_tile_group(i, cols, p) for i, p in enumerate(payloads))


# --- encoders ----------------------------------------------------------------


def encode_svc(source: VideoSource) -> Bitstream:
    """Two-layer encode: delta-coded base plus base-referenced enhanced tiles.

    Per enhanced frame, the base reference offset (within ref_window and the
    current GOP) is the one minimizing total compressed size, ties to the
    smallest offset.  No enhanced frame ever references another enhanced
    frame.
    """
    config = source.config
    gop = config.gop_size
    sf = config.scale_factor
    bases = [downsample(f, sf) for f in source.frames]
    ups_cache: dict[int, np.ndarray] = {}

    def upsampled(i: int) -> np.ndarray:
        if i not in ups_cache:
            ups_cache[i] = upsample_nearest(bases[i], sf).samples
        return ups_cache[i]

    frames = []
    for i, frame in enumerate(source.frames):
        key = i % gop == 0
        base_header = FrameHeader(
            frame_index=i,
            layer_id=LayerId.BASE,
            frame_type=FrameType.KEY if key else FrameType.INTER,
        )
        if key:
            base_bytes = bases[i].tobytes()
        else:
            base_bytes = _residual(bases[i].samples, bases[i - 1].samples).tobytes()
        if config.base_single_tile:
            base_groups = (_coded_tile_group(0, 1, rle_compress(base_bytes)),)
        else:
            base_groups = _encode_base_tiled(config, bases, i, key)

        gop_start = (i // gop) * gop
        candidates = [o for o in range(config.ref_window) if i - o >= gop_start]
        best = None
        for off in candidates:
            ref = upsampled(i - off)
            payloads = []
            for t in range(config.tile_count):
                rs, cs = _tile_region(config, t)
                res = _residual(frame.samples[rs, cs], ref[rs, cs])
                payloads.append(rle_compress(res.tobytes()))
            total = sum(len(p) for p in payloads)
            if best is None or total < best[0]:
                best = (total, off, payloads)
        _, best_off, payloads = best
        enh_header = FrameHeader(
            frame_index=i,
            layer_id=LayerId.ENHANCED,
            frame_type=FrameType.INTER,
            base_ref_offset=best_off,
        )
        enh_groups = _single_group_covering(payloads, config.tile_cols)
        frames.append(
            Frame(
                layers=(
                    LayerFrame(base_header, base_groups),
                    LayerFrame(enh_header, enh_groups),
                )
            )
        )
    return Bitstream(config=config, frames=tuple(frames))


def _encode_base_tiled(
    config: SequenceConfig, bases: list[RasterFrame], i: int, key: bool
) -> tuple[TileGroup, ...]:
    bw, bh = config.base_width, config.base_height
    tw, th = bw // config.tile_cols, bh // config.tile_rows
    payloads = []
    for t in range(config.tile_count):
        col, row = config.tile_position(t)
        rs, cs = slice(row * th, (row + 1) * th), slice(col * tw, (col + 1) * tw)
        cur = bases[i].samples[rs, cs]
        if key:
            data = cur.tobytes()
        else:
            data = _residual(cur, bases[i - 1].samples[rs, cs]).tobytes()
        payloads.append(rle_compress(data))
    return _single_group_covering(payloads, config.tile_cols)


class TrackResolution:
    FULL = "full"
    BASE = "base"


def encode_track(source: VideoSource, gop: int, resolution: str) -> Bitstream:
    """Conventional single-layer tiled track with closed GOPs.

    FULL keeps the source resolution and tile grid; BASE downscales by the
    configured factor and uses a single tile.
    """
    if gop < 1:
        raise BadConfigError("gop must be >= 1")
    config = source.config
    if resolution == TrackResolution.FULL:
        track_config = SequenceConfig(
            width=config.width,
            height=config.height,
            scale_factor=config.scale_factor,
            tile_cols=config.tile_cols,
            tile_rows=config.tile_rows,
            fps_num=config.fps_num,
            fps_den=config.fps_den,
            gop_size=gop,
            base_single_tile=False,
            ref_window=1,
        )
        track_frames = source.frames
    elif resolution == TrackResolution.BASE:
        track_config = SequenceConfig(
            width=config.base_width,
            height=config.base_height,
            scale_factor=config.scale_factor,
            tile_cols=1,
            tile_rows=1,
            fps_num=config.fps_num,
            fps_den=config.fps_den,
            gop_size=gop,
            base_single_tile=True,
            ref_window=1,
        )
        track_frames = tuple(downsample(f, config.scale_factor) for f in source.frames)
    else:
        raise BadConfigError(f"unknown track resolution {resolution!r}")

    cols, rows = _layer_tile_grid(track_config)
    tw = track_config.width // cols
    th = track_config.height // rows
    frames = []
    for i, frame in enumerate(track_frames):
        key = i % gop == 0
        header = FrameHeader(
            frame_index=i,
            layer_id=LayerId.BASE,
            frame_type=FrameType.KEY if key else FrameType.INTER,
        )
        payloads = []
        for t in range(cols * rows):
            col, row = t % cols, t // cols
            rs, cs = slice(row * th, (row + 1) * th), slice(col * tw, (col + 1) * tw)
            cur = frame.samples[rs, cs]
            if key:
                data = cur.tobytes()
            else:
                data = _residual(cur, track_frames[i - 1].samples[rs, cs]).tobytes()
            payloads.append(rle_compress(data))
        frames.append(
            Frame(layers=(LayerFrame(header, _single_group_covering(payloads, cols)),))
        )
    return Bitstream(config=track_config, frames=tuple(frames))


def _layer_tile_grid(config: SequenceConfig) -> tuple[int, int]:
    if config.base_single_tile:
        return 1, 1
    return config.tile_cols, config.tile_rows


# --- decoding ----------------------------------------------------------------


def _decode_base_frames(bitstream: Bitstream, upto: int) -> list[np.ndarray]:
    config = bitstream.config
    bw, bh = config.base_width, config.base_height
    cols, rows = _layer_tile_grid(config)
    tw, th = bw // cols, bh // rows
    decoded: list[np.ndarray] = []
    for i in range(upto + 1):
        frame = bitstream.frames[i]
        base = next(
            (l for l in frame.layers if l.header.layer_id == LayerId.BASE), None
        )
        if base is None:
            raise MissingBaseError(i)
        key = base.header.frame_type == FrameType.KEY
        out = np.empty((bh, bw), dtype=np.uint8)
        for group in base.tile_groups:
            for tile in group.tiles:
                col, row = tile.tile_index % cols, tile.tile_index // cols
                rs = slice(row * th, (row + 1) * th)
                cs = slice(col * tw, (col + 1) * tw)
                raw = rle_decompress(tile.coded_payload)
                region = np.frombuffer(raw, dtype=np.uint8).reshape(th, tw)
                if key:
                    out[rs, cs] = region
                else:
                    out[rs, cs] = _apply_residual(decoded[i - 1][rs, cs], region)
        decoded.append(out)
    return decoded


def decode_frame(
    bitstream: Bitstream, frame_index: int, received_tiles: set[int]
) -> RasterFrame:
    """Reconstruct one frame at enhanced resolution.

    Received CODED tiles reproduce the source bit-exactly; every other tile
    region is filled with the nearest-upscaled co-located base region of the
    same frame index.
    """
    report = validate_structure(bitstream)
    if report:
        raise InvalidStructureError(
            f"stream fails validation: {report[0].rule} at frame {report[0].frame_index}"
        )
    config = bitstream.config
    if not 0 <= frame_index < len(bitstream.frames):
        raise MissingBaseError(frame_index)
    bases = _decode_base_frames(bitstream, frame_index)
    sf = config.scale_factor

    def upsampled(i: int) -> np.ndarray:
        return upsample_nearest(RasterFrame(config.base_width, config.base_height, bases[i]), sf).samples

    out = upsampled(frame_index).copy()
    frame = bitstream.frames[frame_index]
    enh = next((l for l in frame.layers if l.header.layer_id == LayerId.ENHANCED), None)
    if enh is None:
        return RasterFrame(config.width, config.height, out)
    ref = None
    for group in enh.tile_groups:
        for tile in group.tiles:
            if tile.tile_kind != TileKind.CODED or tile.tile_index not in received_tiles:
                continue
            if ref is None:
                ref = upsampled(frame_index - enh.header.base_ref_offset)
            rs, cs = _tile_region(config, tile.tile_index)
            raw = rle_decompress(tile.coded_payload)
            res = np.frombuffer(raw, dtype=np.uint8).reshape(
                config.tile_height, config.tile_width
            )
            out[rs, cs] = _apply_residual(ref[rs, cs], res)
    return RasterFrame(config.width, config.height, out)


# --- metrics and accounting --------------------------------------------------


def psnr(a: RasterFrame, b: RasterFrame) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise BadDimensionsError("frames differ in dimensions")
    diff = a.samples.astype(np.float64) - b.samples.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(255.0 * 255.0 / mse)


def rate_records(bitstream: Bitstream) -> list[RateRecord]:
    """Serialized unit costs per frame: tile groups attributed to their tile,
    frame headers and delimiters to tile_index None."""
    from .container import _frame_header_payload, _tile_group_payload  # internal sizes

    records = []
    for pos, frame in enumerate(bitstream.frames):
        for layer in frame.layers:
            records.append(
                RateRecord(
                    pos,
                    layer.header.layer_id,
                    None,
                    UNIT_HEADER_SIZE + len(_frame_header_payload(layer.header)),
                )
            )
            for group in layer.tile_groups:
                records.append(
                    RateRecord(
                        pos,
                        layer.header.layer_id,
                        group.tg_start,
                        UNIT_HEADER_SIZE + len(_tile_group_payload(group)),
                    )
                )
    return records
