"""Viewport frustum sampling, sphere-to-frame projections, tile selection."""

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from svbs.config import SequenceConfig
from svbs.errors import BadConfigError, BadStepError, TooLargeError
from svbs.geometry import (
    Projection,
    ProjectionKind,
    Viewport,
    project_cubemap,
    project_erp,
    read_viewport_trace,
    select_tiles,
    tile_coverage_oracle,
    viewport_directions,
    write_viewport_trace,
)

ERP_CONFIG = SequenceConfig(width=768, height=384, tile_cols=6, tile_rows=4)
ERP_PROJ = Projection(ProjectionKind.ERP, 768, 384)
CUBE_CONFIG = SequenceConfig(width=768, height=512, tile_cols=6, tile_rows=4)
CUBE_PROJ = Projection(ProjectionKind.CUBEMAP_3x2, 768, 512)


def random_viewport(rng: random.Random) -> Viewport:
    return Viewport.from_degrees(
        rng.uniform(-180.0, 180.0),
        rng.uniform(-60.0, 60.0),
        rng.uniform(60.0, 120.0),
        rng.uniform(45.0, 90.0),
    )


class TestViewport:
    def test_yaw_wraps(self):
        vp = Viewport.from_degrees(270.0, 0.0, 90.0, 90.0)
        assert vp.yaw == pytest.approx(math.radians(-90.0))

    def test_bad_angles_rejected(self):
        with pytest.raises(BadConfigError):
            Viewport.from_degrees(0, 100, 90, 90)
        with pytest.raises(BadConfigError):
            Viewport.from_degrees(0, 0, 0, 90)
        with pytest.raises(BadConfigError):
            Viewport.from_degrees(0, 0, 90, 200)

    def test_cubemap_aspect_enforced(self):
        with pytest.raises(BadConfigError):
            Projection(ProjectionKind.CUBEMAP_3x2, 768, 384)


class TestDirections:
    def test_minimal_grid_is_nine_rays(self):
        vp = Viewport.from_degrees(10, 5, 20, 20)
        dirs = viewport_directions(vp, math.radians(10))
        assert dirs.shape == (9, 3)

    def test_rays_are_unit_length(self):
        vp = random_viewport(random.Random(1))
        dirs = viewport_directions(vp, math.radians(5))
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)

    def test_center_ray_matches_pose(self):
        vp = Viewport.from_degrees(40, 20, 90, 60)
        dirs = viewport_directions(vp, math.radians(30))
        expect = np.array(
            [
                math.cos(vp.pitch) * math.cos(vp.yaw),
                math.cos(vp.pitch) * math.sin(vp.yaw),
                math.sin(vp.pitch),
            ]
        )
        assert any(np.allclose(d, expect, atol=1e-12) for d in dirs)

    def test_bad_step_rejected(self):
        vp = Viewport.from_degrees(0, 0, 90, 60)
        with pytest.raises(BadStepError):
            viewport_directions(vp, math.radians(31))
        with pytest.raises(BadStepError):
            viewport_directions(vp, 0.0)


class TestErpProjection:
    def test_cardinal_directions(self):
        assert project_erp((1, 0, 0), 768, 384) == pytest.approx((384.0, 192.0))
        assert project_erp((0, 1, 0), 768, 384) == pytest.approx((576.0, 192.0))
        assert project_erp((-1, 0, 0), 768, 384) == pytest.approx((0.0, 192.0))

    def test_poles_clamp_into_frame(self):
        u, v = project_erp((0, 0, 1), 768, 384)
        assert v == pytest.approx(0.0)
        u, v = project_erp((0, 0, -1), 768, 384)
        assert 0 <= v < 384


class TestCubemapProjection:
    def test_face_centers(self):
        s = 768 / 3.0
        # front at cell (1,0), right at (2,0), top at (2,1)
        assert project_cubemap((1, 0, 0), 768, 512) == pytest.approx((1.5 * s, 0.5 * s))
        assert project_cubemap((0, 1, 0), 768, 512) == pytest.approx((2.5 * s, 0.5 * s))
        assert project_cubemap((0, 0, 1), 768, 512) == pytest.approx((2.5 * s, 1.5 * s))
        assert project_cubemap((-1, 0, 0), 768, 512) == pytest.approx((1.5 * s, 1.5 * s))
        assert project_cubemap((0, -1, 0), 768, 512) == pytest.approx((0.5 * s, 0.5 * s))
        assert project_cubemap((0, 0, -1), 768, 512) == pytest.approx((0.5 * s, 1.5 * s))

    def test_bad_aspect_rejected(self):
        with pytest.raises(BadConfigError):
            project_cubemap((1, 0, 0), 768, 384)

    @given(
        st.floats(-179.9, 179.9),
        st.floats(-89.0, 89.0),
        st.sampled_from([ProjectionKind.ERP, ProjectionKind.CUBEMAP_3x2]),
    )
    @settings(max_examples=200, deadline=None)
    def test_project_unproject_round_trip(self, lon_deg, lat_deg, kind):
        # A direction's projected pixel must unproject to a nearby direction:
        # within the angular diagonal of one pixel.
        from svbs.geometry import _project, _unproject

        proj = ERP_PROJ if kind == ProjectionKind.ERP else CUBE_PROJ
        lon, lat = math.radians(lon_deg), math.radians(lat_deg)
        d = np.array([[math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]])
        u, v = _project(d, proj)
        back = _unproject(u, v, proj)[0]
        angle = math.acos(float(np.clip(np.dot(back, d[0]), -1.0, 1.0)))
        assert angle <= 2 * math.pi / proj.width * 3


class TestSelectTiles:
    def test_equatorial_viewport_covers_one_sixth(self):
        vp = Viewport.from_degrees(0, 0, 90, 90)
        tiles = select_tiles(vp, ERP_PROJ, ERP_CONFIG)
        assert tiles == {8, 9, 14, 15}
        assert len(tiles) / ERP_CONFIG.tile_count == pytest.approx(1 / 6)

    def test_seam_crossing_is_noncontiguous_columns(self):
        vp = Viewport.from_degrees(180, 0, 90, 90)
        tiles = select_tiles(vp, ERP_PROJ, ERP_CONFIG)
        cols = sorted({t % 6 for t in tiles})
        assert cols == [0, 5]

    def test_full_sphere_selects_everything(self):
        vp = Viewport.from_degrees(0, 0, 360, 180)
        assert select_tiles(vp, ERP_PROJ, ERP_CONFIG, math.radians(2)) == set(range(24))

    def test_yaw_periodicity(self):
        for yaw in (-170, -35, 80):
            a = select_tiles(Viewport.from_degrees(yaw, 10, 80, 60), ERP_PROJ, ERP_CONFIG)
            b = select_tiles(
                Viewport.from_degrees(yaw + 360, 10, 80, 60), ERP_PROJ, ERP_CONFIG
            )
            assert a == b

    def test_subset_of_oracle_at_coarse_step(self):
        rng = random.Random(7)
        for _ in range(10):
            vp = random_viewport(rng)
            for proj, config in ((ERP_PROJ, ERP_CONFIG), (CUBE_PROJ, CUBE_CONFIG)):
                fast = select_tiles(vp, proj, config, math.radians(4))
                oracle = tile_coverage_oracle(vp, proj, config)
                assert fast <= oracle

    def test_matches_oracle_at_fine_step(self):
        rng = random.Random(8)
        for _ in range(5):
            vp = random_viewport(rng)
            for proj, config in ((ERP_PROJ, ERP_CONFIG), (CUBE_PROJ, CUBE_CONFIG)):
                assert select_tiles(vp, proj, config) == tile_coverage_oracle(
                    vp, proj, config
                )

    def test_projection_must_match_config(self):
        vp = Viewport.from_degrees(0, 0, 90, 90)
        with pytest.raises(BadConfigError):
            select_tiles(vp, CUBE_PROJ, ERP_CONFIG)

    def test_oracle_pixel_budget(self):
        config = SequenceConfig(width=2048, height=1024)
        proj = Projection(ProjectionKind.ERP, 2048, 1024)
        with pytest.raises(TooLargeError):
            tile_coverage_oracle(Viewport.from_degrees(0, 0, 90, 90), proj, config)


class TestTraces:
    def test_write_read_round_trip(self, tmp_path):
        samples = [
            (0.0, Viewport.from_degrees(0, 0, 90, 90)),
            (250.0, Viewport.from_degrees(-120, 30, 100, 70)),
        ]
        path = tmp_path / "trace.jsonl"
        write_viewport_trace(path, samples)
        back = read_viewport_trace(path)
        assert len(back) == 2
        for (t0, v0), (t1, v1) in zip(samples, back):
            assert t0 == t1
            assert v0.yaw == pytest.approx(v1.yaw)
            assert v0.pitch == pytest.approx(v1.pitch)
            assert v0.h_fov == pytest.approx(v1.h_fov)
            assert v0.v_fov == pytest.approx(v1.v_fov)

    def test_blank_lines_ignored(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        write_viewport_trace(path, [(0.0, Viewport.from_degrees(0, 0, 90, 90))])
        path.write_text(path.read_text() + "\n\n")
        assert len(read_viewport_trace(path)) == 1
