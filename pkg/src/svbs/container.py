"""Scalable viewport bitstream (SVB) container: object model, bit-exact
serialization, parsing, and structural validation.

Wire layout (little-endian throughout):

    magic "SVBS" | version u8=1 | sequence header (15 bytes)
    then repeated units: unit_type u8 | payload_size u32 | payload

Sequence header: width u16, height u16, scale_factor u8, tile_cols u8,
tile_rows u8, fps_num u16, fps_den u16, gop_size u16, flags u8
(bit0=base_single_tile), ref_window u8.

FrameHeader payload: frame_index u32, layer_id u8, frame_type u8, flags u8
(bit0=cdf_update_disabled, bit1=global_mv_zero), base_ref_offset u8.

TileGroup payload: tg_start u16, tg_end u16, then per tile: tile_index u16,
tile_kind u8, then either coded length u32 + bytes (CODED) or
superblock_count u16 + 6-byte superblock mode record (SKIPPED).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .config import SequenceConfig
from .errors import (
    BadMagicError,
    InvalidStructureError,
    TruncatedError,
    UnknownUnitTypeError,
)

MAGIC = b"SVBS"
VERSION = 1
HEADER_SIZE = 20
UNIT_HEADER_SIZE = 5
SUPERBLOCK_MODE_SIZE = 6


class UnitType(IntEnum):
    TEMPORAL_DELIMITER = 0
    FRAME_HEADER = 1
    TILE_GROUP = 2
    METADATA = 3


class LayerId(IntEnum):
    BASE = 0
    ENHANCED = 1


class FrameType(IntEnum):
    KEY = 0
    INTER = 1


class TileKind(IntEnum):
    CODED = 0
    SKIPPED = 1


class PartitionMode(IntEnum):
    PARTITION_NONE = 0
    PARTITION_HORZ = 1
    PARTITION_VERT = 2
    PARTITION_SPLIT = 3


class RefFrames(IntEnum):
    REF_TO_BASE_LAYER_ONLY = 0
    REF_TO_PREVIOUS_FRAME = 1


class InterMode(IntEnum):
    ZERO_MV = 0
    NEW_MV = 1


@dataclass(frozen=True)
class SuperblockMode:
    """Per-superblock syntax elements carried by a skipped tile stub."""

    partition_mode: PartitionMode
    skip: bool
    is_inter: bool
    ref_frames: RefFrames
    inter_mode: InterMode
    use_obmc: bool

    def to_bytes(self) -> bytes:
        return struct.pack(
            "<6B",
            int(self.partition_mode),
            int(self.skip),
            int(self.is_inter),
            int(self.ref_frames),
            int(self.inter_mode),
            int(self.use_obmc),
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SuperblockMode":
        p, s, i, r, m, o = struct.unpack("<6B", raw)
        return cls(
            partition_mode=PartitionMode(p),
            skip=bool(s),
            is_inter=bool(i),
            ref_frames=RefFrames(r),
            inter_mode=InterMode(m),
            use_obmc=bool(o),
        )


@dataclass(frozen=True)
class Tile:
    tile_index: int
    tile_col: int
    tile_row: int
    tile_kind: TileKind
    coded_payload: bytes | None = None
    superblock_count: int | None = None
    skipped_mode: SuperblockMode | None = None

    def __post_init__(self) -> None:
        if self.tile_kind == TileKind.CODED:
            if self.coded_payload is None:
                raise InvalidStructureError("CODED tile requires coded_payload")
        else:
            if self.superblock_count is None or self.skipped_mode is None:
                raise InvalidStructureError(
                    "SKIPPED tile requires superblock_count and skipped_mode"
                )


@dataclass(frozen=True)
class TileGroup:
    tg_start: int
    tg_end: int
    tiles: tuple[Tile, ...]


@dataclass(frozen=True)
class FrameHeader:
    frame_index: int
    layer_id: LayerId
    frame_type: FrameType
    cdf_update_disabled: bool = False
    global_mv_zero: bool = False
    base_ref_offset: int = 0


@dataclass(frozen=True)
class LayerFrame:
    header: FrameHeader
    tile_groups: tuple[TileGroup, ...]


@dataclass(frozen=True)
class Frame:
    """One temporal unit: delimiter(s), optional metadata, then layers.

    A well-formed frame has exactly one temporal delimiter; the count is kept
    so malformed streams can still be parsed and reported by the validator.
    """

    layers: tuple[LayerFrame, ...]
    delimiter_count: int = 1
    metadata: tuple[bytes, ...] = ()


@dataclass(frozen=True)
class Bitstream:
    config: SequenceConfig
    frames: tuple[Frame, ...]


@dataclass(frozen=True)
class Violation:
    frame_index: int
    rule: str
    detail: str = ""


@dataclass(frozen=True)
class FrameSizes:
    frame_index: int
    delimiter_bytes: int
    metadata_bytes: int
    layer_bytes: dict[LayerId, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.delimiter_bytes + self.metadata_bytes + sum(self.layer_bytes.values())


# --- serialization -----------------------------------------------------------


def serialize_sequence_header(config: SequenceConfig) -> bytes:
    flags = 1 if config.base_single_tile else 0
    return MAGIC + struct.pack(
        "<BHHBBBHHHBB",
        VERSION,
        config.width,
        config.height,
        config.scale_factor,
        config.tile_cols,
        config.tile_rows,
        config.fps_num,
        config.fps_den,
        config.gop_size,
        flags,
        config.ref_window,
    )


def _pack_unit(unit_type: UnitType, payload: bytes) -> bytes:
    return struct.pack("<BI", int(unit_type), len(payload)) + payload


def _frame_header_payload(header: FrameHeader) -> bytes:
    flags = (1 if header.cdf_update_disabled else 0) | (2 if header.global_mv_zero else 0)
    return struct.pack(
        "<IBBBB",
        header.frame_index,
        int(header.layer_id),
        int(header.frame_type),
        flags,
        header.base_ref_offset,
    )


def _tile_group_payload(group: TileGroup) -> bytes:
    parts = [struct.pack("<HH", group.tg_start, group.tg_end)]
    for tile in group.tiles:
        parts.append(struct.pack("<HB", tile.tile_index, int(tile.tile_kind)))
        if tile.tile_kind == TileKind.CODED:
            parts.append(struct.pack("<I", len(tile.coded_payload)))
            parts.append(tile.coded_payload)
        else:
            parts.append(struct.pack("<H", tile.superblock_count))
            parts.append(tile.skipped_mode.to_bytes())
    return b"".join(parts)


def iter_frame_units(frame: Frame):
    """Yield (unit_type, payload) pairs for one frame in wire order."""
    for _ in range(frame.delimiter_count):
        yield UnitType.TEMPORAL_DELIMITER, b""
    for blob in frame.metadata:
        yield UnitType.METADATA, blob
    for layer in frame.layers:
        yield UnitType.FRAME_HEADER, _frame_header_payload(layer.header)
        for group in layer.tile_groups:
            yield UnitType.TILE_GROUP, _tile_group_payload(group)


def serialize_frame(frame: Frame) -> bytes:
    return b"".join(_pack_unit(t, p) for t, p in iter_frame_units(frame))


def serialized_frame_size(frame: Frame) -> int:
    return sum(UNIT_HEADER_SIZE + len(p) for _, p in iter_frame_units(frame))


def serialize(bitstream: Bitstream, check: bool = True) -> bytes:
    """Serialize an object model to bytes; deterministic and injective.

    With ``check`` (the default) the model must pass :func:`validate_structure`.
    """
    if check:
        report = validate_structure(bitstream)
        if report:
            first = report[0]
            raise InvalidStructureError(
                f"refusing to serialize: {first.rule} at frame {first.frame_index}"
                f" ({len(report)} violation(s) total)"
            )
    parts = [serialize_sequence_header(bitstream.config)]
    for frame in bitstream.frames:
        parts.append(serialize_frame(frame))
    return b"".join(parts)


# --- parsing -----------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _parse_sequence_header(reader: _Reader) -> SequenceConfig:
    if len(reader.data) < len(MAGIC):
        if reader.data == MAGIC[: len(reader.data)]:
            raise TruncatedError(len(reader.data))
        raise BadMagicError("stream does not start with SVBS magic")
    magic = reader.take(4)
    if magic != MAGIC:
        raise BadMagicError("stream does not start with SVBS magic")
    (version,) = reader.unpack("<B")
    if version != VERSION:
        raise BadMagicError(f"unsupported container version {version}")
    (w, h, sf, tc, tr, fn, fd, gop, flags, rw) = reader.unpack("<HHBBBHHHBB")
    return SequenceConfig(
        width=w,
        height=h,
        scale_factor=sf,
        tile_cols=tc,
        tile_rows=tr,
        fps_num=fn,
        fps_den=fd,
        gop_size=gop,
        base_single_tile=bool(flags & 1),
        ref_window=rw,
    )


def _parse_frame_header(payload: bytes, offset: int) -> FrameHeader:
    if len(payload) != 8:
        raise TruncatedError(offset, f"frame header payload has {len(payload)} bytes, want 8")
    idx, layer, ftype, flags, ref = struct.unpack("<IBBBB", payload)
    try:
        layer_id = LayerId(layer)
        frame_type = FrameType(ftype)
    except ValueError as exc:
        raise InvalidStructureError(f"bad frame header enum at offset {offset}: {exc}") from exc
    return FrameHeader(
        frame_index=idx,
        layer_id=layer_id,
        frame_type=frame_type,
        cdf_update_disabled=bool(flags & 1),
        global_mv_zero=bool(flags & 2),
        base_ref_offset=ref,
    )


def _parse_tile_group(payload: bytes, offset: int, config: SequenceConfig) -> TileGroup:
    sub = _Reader(payload)
    try:
        tg_start, tg_end = sub.unpack("<HH")
        tiles = []
        while sub.pos < len(payload):
            tile_index, kind = sub.unpack("<HB")
            try:
                tile_kind = TileKind(kind)
            except ValueError as exc:
                raise InvalidStructureError(
                    f"bad tile kind {kind} at offset {offset + sub.pos - 1}"
                ) from exc
            col = tile_index % config.tile_cols
            row = tile_index // config.tile_cols
            if tile_kind == TileKind.CODED:
                (size,) = sub.unpack("<I")
                coded = sub.take(size)
                tiles.append(Tile(tile_index, col, row, tile_kind, coded_payload=coded))
            else:
                (sb_count,) = sub.unpack("<H")
                mode = SuperblockMode.from_bytes(sub.take(SUPERBLOCK_MODE_SIZE))
                tiles.append(
                    Tile(
                        tile_index,
                        col,
                        row,
                        tile_kind,
                        superblock_count=sb_count,
                        skipped_mode=mode,
                    )
                )
    except TruncatedError as exc:
        # Re-position relative to the whole stream.
        raise TruncatedError(offset + exc.offset) from exc
    return TileGroup(tg_start=tg_start, tg_end=tg_end, tiles=tuple(tiles))


def parse(data: bytes) -> Bitstream:
    """Decode bytes into the object model; inverse of :func:`serialize`."""
    reader = _Reader(data)
    config = _parse_sequence_header(reader)

    frames: list[Frame] = []
    # Pending state of the frame being assembled.
    delims = 0
    metadata: list[bytes] = []
    layers: list[tuple[FrameHeader, list[TileGroup]]] = []
    open_frame = False

    def flush() -> None:
        nonlocal delims, metadata, layers, open_frame
        if not open_frame:
            return
        frames.append(
            Frame(
                layers=tuple(LayerFrame(h, tuple(gs)) for h, gs in layers),
                delimiter_count=delims,
                metadata=tuple(metadata),
            )
        )
        delims = 0
        metadata = []
        layers = []
        open_frame = False

    while reader.pos < len(data):
        unit_offset = reader.pos
        type_byte, size = reader.unpack("<BI")
        payload = reader.take(size)
        try:
            unit_type = UnitType(type_byte)
        except ValueError:
            raise UnknownUnitTypeError(type_byte, unit_offset) from None

        if unit_type == UnitType.TEMPORAL_DELIMITER:
            if open_frame and (layers or metadata):
                flush()
            open_frame = True
            delims += 1
        elif unit_type == UnitType.METADATA:
            open_frame = True
            metadata.append(payload)
        elif unit_type == UnitType.FRAME_HEADER:
            header = _parse_frame_header(payload, unit_offset + UNIT_HEADER_SIZE)
            open_frame = True
            layers.append((header, []))
        else:  # TILE_GROUP
            if not layers:
                raise InvalidStructureError(
                    f"tile group without preceding frame header at offset {unit_offset}"
                )
            group = _parse_tile_group(payload, unit_offset + UNIT_HEADER_SIZE, config)
            layers[-1][1].append(group)
    flush()
    return Bitstream(config=config, frames=tuple(frames))


# --- validation --------------------------------------------------------------

R_TEMPORAL_DELIM = "R_TEMPORAL_DELIM"
R_LAYER_ORDER = "R_LAYER_ORDER"
R_TEMPORAL_IN_ENH = "R_TEMPORAL_IN_ENH"
R_CLOSED_GOP = "R_CLOSED_GOP"
R_REF_WINDOW = "R_REF_WINDOW"
R_FRAME_INDEX = "R_FRAME_INDEX"
R_TG_RANGE = "R_TG_RANGE"
R_TILE_INDEX = "R_TILE_INDEX"
R_TILE_COVERAGE = "R_TILE_COVERAGE"
R_SKIP_IN_BASE = "R_SKIP_IN_BASE"
R_SKIP_FLAGS = "R_SKIP_FLAGS"


def _layer_grid(config: SequenceConfig, layer_id: LayerId) -> tuple[int, int]:
    """(cols, rows) of the tile grid a layer is expected to cover."""
    if layer_id == LayerId.BASE and config.base_single_tile:
        return 1, 1
    return config.tile_cols, config.tile_rows


def _check_layer_tiles(
    out: list[Violation], pos: int, layer: LayerFrame, config: SequenceConfig
) -> None:
    cols, rows = _layer_grid(config, layer.header.layer_id)
    count = cols * rows
    seen: set[int] = set()
    has_skipped = False
    range_broken = False
    for group in layer.tile_groups:
        if group.tg_start > group.tg_end:
            out.append(Violation(pos, R_TG_RANGE, f"tg_start {group.tg_start} > tg_end {group.tg_end}"))
            range_broken = True
            continue
        if group.tg_end >= count:
            out.append(Violation(pos, R_TG_RANGE, f"tg_end {group.tg_end} outside {cols}x{rows} grid"))
            range_broken = True
            continue
        expected = list(range(group.tg_start, group.tg_end + 1))
        actual = [t.tile_index for t in group.tiles]
        if actual != expected:
            out.append(
                Violation(pos, R_TG_RANGE, f"tiles {actual} do not match tg range {expected}")
            )
            range_broken = True
        for tile in group.tiles:
            if tile.tile_index != tile.tile_row * cols + tile.tile_col:
                out.append(
                    Violation(
                        pos,
                        R_TILE_INDEX,
                        f"tile {tile.tile_index} inconsistent with col/row "
                        f"({tile.tile_col},{tile.tile_row})",
                    )
                )
            if tile.tile_index in seen:
                out.append(Violation(pos, R_TILE_COVERAGE, f"tile {tile.tile_index} covered twice"))
            seen.add(tile.tile_index)
            if tile.tile_kind == TileKind.SKIPPED:
                has_skipped = True
                if layer.header.layer_id == LayerId.BASE:
                    out.append(Violation(pos, R_SKIP_IN_BASE, f"tile {tile.tile_index}"))
    if len(seen) != count and not range_broken:
        out.append(
            Violation(pos, R_TILE_COVERAGE, f"layer covers {len(seen)} of {count} grid tiles")
        )
    if has_skipped and layer.header.layer_id == LayerId.ENHANCED:
        if not (layer.header.cdf_update_disabled and layer.header.global_mv_zero):
            out.append(
                Violation(
                    pos,
                    R_SKIP_FLAGS,
                    "skipped tiles require cdf_update_disabled and global_mv_zero",
                )
            )


def validate_structure(bitstream: Bitstream) -> list[Violation]:
    """Structural rule check; empty list means the stream is well formed.

    Violations are data, not exceptions: malformed hand-built models are
    reported rule by rule with the offending frame position.
    """
    out: list[Violation] = []
    config = bitstream.config
    gop = config.gop_size
    for pos, frame in enumerate(bitstream.frames):
        if frame.delimiter_count != 1:
            out.append(
                Violation(pos, R_TEMPORAL_DELIM, f"{frame.delimiter_count} delimiters, want 1")
            )
        if not frame.layers:
            out.append(Violation(pos, R_TEMPORAL_DELIM, "frame has no layers"))
            continue
        prev_layer: LayerId | None = None
        base_seen = False
        for layer in frame.layers:
            header = layer.header
            if header.frame_index != pos:
                out.append(
                    Violation(pos, R_FRAME_INDEX, f"header says frame {header.frame_index}")
                )
            if header.layer_id == LayerId.BASE:
                if base_seen:
                    out.append(Violation(pos, R_LAYER_ORDER, "duplicate base layer"))
                if prev_layer == LayerId.ENHANCED:
                    out.append(Violation(pos, R_LAYER_ORDER, "base layer after enhanced"))
                base_seen = True
                if header.frame_type == FrameType.INTER and pos % gop == 0:
                    out.append(Violation(pos, R_CLOSED_GOP, "INTER base frame at GOP start"))
                if header.frame_type == FrameType.KEY and header.base_ref_offset != 0:
                    out.append(Violation(pos, R_CLOSED_GOP, "KEY frame with nonzero reference"))
            else:
                if prev_layer == LayerId.ENHANCED:
                    # A second enhanced layer can only predict from the
                    # enhanced layer below it, which the schema forbids.
                    out.append(
                        Violation(pos, R_TEMPORAL_IN_ENH, "enhanced layer stacked on enhanced")
                    )
                elif not base_seen:
                    out.append(Violation(pos, R_LAYER_ORDER, "enhanced layer without base"))
                off = header.base_ref_offset
                if off >= config.ref_window:
                    out.append(
                        Violation(pos, R_REF_WINDOW, f"base_ref_offset {off} >= ref_window")
                    )
                target = pos - off
                if target < 0 or target < (pos // gop) * gop:
                    out.append(
                        Violation(
                            pos, R_CLOSED_GOP, f"base reference {target} crosses GOP boundary"
                        )
                    )
            _check_layer_tiles(out, pos, layer, config)
            prev_layer = header.layer_id
    return out


# --- byte accounting ---------------------------------------------------------


def frame_byte_sizes(bitstream: Bitstream) -> list[FrameSizes]:
    """Serialized byte count of every frame, split by layer.

    Totals sum to the serialized file size minus the fixed sequence header.
    """
    report = validate_structure(bitstream)
    if report:
        raise InvalidStructureError(f"{len(report)} structural violation(s)")
    sizes = []
    for pos, frame in enumerate(bitstream.frames):
        delim = frame.delimiter_count * UNIT_HEADER_SIZE
        meta = sum(UNIT_HEADER_SIZE + len(m) for m in frame.metadata)
        per_layer: dict[LayerId, int] = {}
        for layer in frame.layers:
            n = UNIT_HEADER_SIZE + len(_frame_header_payload(layer.header))
            for group in layer.tile_groups:
                n += UNIT_HEADER_SIZE + len(_tile_group_payload(group))
            per_layer[layer.header.layer_id] = per_layer.get(layer.header.layer_id, 0) + n
        sizes.append(FrameSizes(pos, delim, meta, per_layer))
    return sizes
