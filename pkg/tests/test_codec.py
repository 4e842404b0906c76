"""Mock codec: resampling, run-length coding, layered encode/decode, rates."""

import math
import random
import struct

import numpy as np
import pytest

from svbs.codec import (
    MIN_ZERO_RUN,
    PSNR_INF,
    RasterFrame,
    TrackResolution,
    VideoSource,
    decode_frame,
    downsample,
    encode_svc,
    encode_track,
    generate_content,
    psnr,
    rate_records,
    rle_compress,
    rle_decompress,
    upsample_nearest,
)
from svbs.config import SequenceConfig
from svbs.container import (
    Frame,
    FrameType,
    LayerId,
    frame_byte_sizes,
    serialize,
    validate_structure,
)
from svbs.errors import BadDimensionsError, CorruptRleError


def small_config(**overrides) -> SequenceConfig:
    kw = dict(width=64, height=32, tile_cols=2, tile_rows=2, gop_size=4)
    kw.update(overrides)
    return SequenceConfig(**kw)


def random_frame(rng: np.random.Generator, w: int, h: int) -> RasterFrame:
    return RasterFrame(w, h, rng.integers(0, 256, size=(h, w), dtype=np.uint8))


class TestResampling:
    def test_downsample_matches_per_block_oracle(self):
        rng = np.random.default_rng(3)
        for factor in (2, 4):
            frame = random_frame(rng, 16, 8)
            out = downsample(frame, factor)
            for by in range(frame.height // factor):
                for bx in range(frame.width // factor):
                    block = frame.samples[
                        by * factor : (by + 1) * factor, bx * factor : (bx + 1) * factor
                    ]
                    mean = block.astype(int).sum() / (factor * factor)
                    expect = math.floor(mean + 0.5)
                    assert out.samples[by, bx] == expect

    def test_downsample_rounds_half_up(self):
        frame = RasterFrame(2, 2, np.array([[0, 1], [0, 1]], dtype=np.uint8))
        assert downsample(frame, 2).samples[0, 0] == 1  # mean 0.5 rounds up

    def test_downsample_rejects_bad_factor(self):
        frame = RasterFrame(6, 6, np.zeros((6, 6), dtype=np.uint8))
        with pytest.raises(BadDimensionsError):
            downsample(frame, 4)

    def test_upsample_then_downsample_identity(self):
        rng = np.random.default_rng(4)
        frame = random_frame(rng, 8, 6)
        up = upsample_nearest(frame, 3)
        assert up.width == 24 and up.height == 18
        assert downsample(up, 3) == frame

    def test_upsample_replicates_pixels(self):
        frame = RasterFrame(2, 1, np.array([[7, 9]], dtype=np.uint8))
        up = upsample_nearest(frame, 2)
        assert up.samples.tolist() == [[7, 7, 9, 9], [7, 7, 9, 9]]


class TestRle:
    def test_empty_input(self):
        assert rle_compress(b"") == b""
        assert rle_decompress(b"") == b""

    def test_long_zero_run_is_five_bytes(self):
        data = b"\x00" * 65536
        packed = rle_compress(data)
        assert len(packed) == 5
        assert rle_decompress(packed) == data

    def test_short_zero_runs_fold_into_literals(self):
        data = b"\x01" + b"\x00" * (MIN_ZERO_RUN - 1) + b"\x02"
        packed = rle_compress(data)
        run_type, length = struct.unpack_from("<BI", packed, 0)
        assert (run_type, length) == (1, len(data))
        assert rle_decompress(packed) == data

    def test_random_round_trip_and_bound(self):
        rng = random.Random(11)
        for _ in range(20):
            data = rng.randbytes(4096)
            packed = rle_compress(data)
            assert rle_decompress(packed) == data
            assert len(packed) <= len(data) + 5

    def test_mixed_content(self):
        data = b"\x05" * 10 + b"\x00" * 100 + b"\x09" * 3
        packed = rle_compress(data)
        assert rle_decompress(packed) == data
        assert len(packed) < len(data)

    def test_corrupt_inputs(self):
        with pytest.raises(CorruptRleError):
            rle_decompress(b"\x01\x01\x00")  # truncated record header
        with pytest.raises(CorruptRleError):
            rle_decompress(struct.pack("<BI", 1, 10) + b"ab")  # literal overrun
        with pytest.raises(CorruptRleError):
            rle_decompress(struct.pack("<BI", 7, 1))  # unknown run type


class TestContent:
    def test_deterministic(self):
        config = small_config()
        a = generate_content(9, config, 3)
        b = generate_content(9, config, 3)
        assert a.frames == b.frames

    def test_seed_changes_content(self):
        config = small_config()
        a = generate_content(1, config, 1)
        b = generate_content(2, config, 1)
        assert a.frames[0] != b.frames[0]

    def test_temporal_change_sparser_than_downscale_loss(self):
        # Premise of the layering: consecutive frames differ on few pixels,
        # while downscale/upscale loses detail on most pixels.
        config = SequenceConfig(width=128, height=64, tile_cols=2, tile_rows=2)
        source = generate_content(3, config, 2)
        a, b = source.frames
        temporal = np.count_nonzero(a.samples != b.samples)
        lossy = upsample_nearest(downsample(a, 2), 2)
        spatial = np.count_nonzero(a.samples != lossy.samples)
        assert temporal < spatial


class TestSvcEncoder:
    def test_output_validates_and_round_trips(self):
        source = generate_content(1, small_config(), 8)
        stream = encode_svc(source)
        assert validate_structure(stream) == []
        assert len(stream.frames) == 8

    def test_layer_structure(self):
        config = small_config()
        stream = encode_svc(generate_content(1, config, 4))
        for pos, frame in enumerate(stream.frames):
            base, enh = frame.layers
            assert base.header.layer_id == LayerId.BASE
            assert enh.header.layer_id == LayerId.ENHANCED
            key = pos % config.gop_size == 0
            assert base.header.frame_type == (FrameType.KEY if key else FrameType.INTER)
            assert enh.header.frame_type == FrameType.INTER
            assert len(enh.tile_groups) == config.tile_count

    def test_static_source_base_inter_is_one_zero_run(self):
        config = small_config()
        img = generate_content(1, config, 1).frames[0]
        source = VideoSource(config=config, frames=(img, img, img), seed=0)
        stream = encode_svc(source)
        for frame in stream.frames[1:]:
            base = frame.layers[0]
            assert base.header.frame_type == FrameType.INTER
            payload = base.tile_groups[0].tiles[0].coded_payload
            assert len(payload) == 5  # single zero-run record

    def test_key_frames_cost_more_than_inter(self):
        config = small_config(gop_size=4)
        stream = encode_svc(generate_content(2, config, 8))
        key_bytes, inter_bytes = [], []
        for pos, sizes in enumerate(frame_byte_sizes(stream)):
            base = stream.frames[pos].layers[0]
            bucket = key_bytes if base.header.frame_type == FrameType.KEY else inter_bytes
            bucket.append(sizes.layer_bytes[LayerId.BASE])
        assert np.mean(key_bytes) > np.mean(inter_bytes)

    def test_wider_ref_window_never_costs_more(self):
        config1 = small_config(gop_size=4, ref_window=1)
        config3 = small_config(gop_size=4, ref_window=3)
        n1 = len(serialize(encode_svc(generate_content(2, config1, 8))))
        n3 = len(serialize(encode_svc(generate_content(2, config3, 8))))
        # The offset search includes 0, so more candidates can only help.
        # Wire cost is identical per frame apart from payload sizes.
        assert n3 <= n1

    def test_ref_offsets_stay_inside_gop(self):
        config = small_config(gop_size=4, ref_window=3)
        stream = encode_svc(generate_content(2, config, 8))
        for pos, frame in enumerate(stream.frames):
            off = frame.layers[1].header.base_ref_offset
            assert 0 <= off < config.ref_window
            assert pos - off >= (pos // config.gop_size) * config.gop_size

    def test_tiled_base_costs_at_least_single_tile(self):
        source_s = generate_content(2, small_config(base_single_tile=True), 4)
        source_t = generate_content(2, small_config(base_single_tile=False), 4)
        n_single = len(serialize(encode_svc(source_s)))
        n_tiled = len(serialize(encode_svc(source_t)))
        assert n_single <= n_tiled


class TestTrackEncoder:
    def test_full_track_validates(self):
        source = generate_content(1, small_config(), 6)
        stream = encode_track(source, 3, TrackResolution.FULL)
        assert validate_structure(stream) == []
        assert stream.config.base_single_tile is False
        assert stream.config.gop_size == 3

    def test_base_track_is_downscaled_single_tile(self):
        config = small_config()
        stream = encode_track(generate_content(1, config, 4), 2, TrackResolution.BASE)
        assert validate_structure(stream) == []
        assert stream.config.width == config.base_width
        assert stream.config.tile_count == 1

    def test_smaller_gop_never_cheaper(self):
        source = generate_content(2, small_config(gop_size=30), 30)
        sizes = {
            gop: len(serialize(encode_track(source, gop, TrackResolution.FULL)))
            for gop in (3, 5, 30)
        }
        assert sizes[3] >= sizes[5] >= sizes[30]


class TestDecode:
    def test_all_tiles_is_lossless(self):
        config = small_config(ref_window=2)
        source = generate_content(4, config, 6)
        stream = encode_svc(source)
        for i in (0, 3, 5):
            out = decode_frame(stream, i, set(range(config.tile_count)))
            assert out == source.frames[i]

    def test_no_tiles_is_upscaled_base(self):
        config = small_config()
        source = generate_content(4, config, 2)
        stream = encode_svc(source)
        out = decode_frame(stream, 1, set())
        expect = upsample_nearest(downsample(source.frames[1], config.scale_factor), 2)
        assert out == expect

    def test_partial_nonadjacent_tiles(self):
        config = SequenceConfig(width=160, height=96, tile_cols=4, tile_rows=3, gop_size=4)
        source = generate_content(6, config, 3)
        stream = encode_svc(source)
        received = {4, 6, 7, 9}
        out = decode_frame(stream, 2, received)
        base_up = upsample_nearest(downsample(source.frames[2], 2), 2)
        tw, th = config.tile_width, config.tile_height
        for t in range(config.tile_count):
            col, row = config.tile_position(t)
            region = (slice(row * th, (row + 1) * th), slice(col * tw, (col + 1) * tw))
            want = source.frames[2] if t in received else base_up
            assert np.array_equal(out.samples[region], want.samples[region])

    def test_base_only_stream_decodes(self):
        config = small_config()
        source = generate_content(1, config, 3)
        stream = encode_svc(source)
        stripped = stream.__class__(
            config=config,
            frames=tuple(Frame(layers=(f.layers[0],)) for f in stream.frames),
        )
        assert validate_structure(stripped) == []
        out = decode_frame(stripped, 2, set(range(config.tile_count)))
        expect = upsample_nearest(downsample(source.frames[2], 2), 2)
        assert out == expect


class TestMetrics:
    def test_psnr_identical_is_infinite(self):
        frame = generate_content(1, small_config(), 1).frames[0]
        assert psnr(frame, frame) == PSNR_INF

    def test_psnr_known_value(self):
        a = RasterFrame(4, 4, np.zeros((4, 4), dtype=np.uint8))
        b = RasterFrame(4, 4, np.ones((4, 4), dtype=np.uint8))
        assert psnr(a, b) == pytest.approx(10 * math.log10(255.0 * 255.0), abs=1e-9)

    def test_psnr_dimension_mismatch(self):
        a = RasterFrame(4, 4, np.zeros((4, 4), dtype=np.uint8))
        b = RasterFrame(4, 2, np.zeros((2, 4), dtype=np.uint8))
        with pytest.raises(BadDimensionsError):
            psnr(a, b)

    def test_rate_records_match_byte_accounting(self):
        stream = encode_svc(generate_content(1, small_config(), 4))
        sizes = frame_byte_sizes(stream)
        per_layer: dict[tuple[int, LayerId], int] = {}
        for rec in rate_records(stream):
            key = (rec.frame_index, rec.layer_id)
            per_layer[key] = per_layer.get(key, 0) + rec.n_bytes
        for pos, s in enumerate(sizes):
            for layer_id, n in s.layer_bytes.items():
                assert per_layer[(pos, layer_id)] == n
