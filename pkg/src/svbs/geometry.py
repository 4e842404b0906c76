"""Spherical viewport to tile-set mapping for ERP and 3x2 cube-map frames.

Conventions: x-forward, z-up, right-handed; yaw rotates about z, pitch about
the rotated y axis (yaw-then-pitch, no roll).  The FOV frustum is defined by
independent horizontal/vertical angular bounds in viewport-local coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .config import SequenceConfig
from .errors import BadConfigError, BadStepError, TooLargeError

TWO_PI = 2.0 * math.pi
_EDGE_TOL = 1e-12

# Desk-scale ceiling for the brute-force oracle.
ORACLE_PIXEL_BUDGET = 2_000_000

DEFAULT_STEP_RAD = math.radians(0.25)


class ProjectionKind(Enum):
    ERP = "erp"
    CUBEMAP_3x2 = "cubemap"


@dataclass(frozen=True)
class Viewport:
    """Spherical FOV descriptor; angles in radians."""

    yaw: float
    pitch: float
    h_fov: float
    v_fov: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", _wrap_angle(self.yaw))
        if not -math.pi / 2 <= self.pitch <= math.pi / 2:
            raise BadConfigError("pitch outside [-pi/2, pi/2]")
        if not 0 < self.h_fov <= TWO_PI:
            raise BadConfigError("h_fov outside (0, 2*pi]")
        if not 0 < self.v_fov <= math.pi:
            raise BadConfigError("v_fov outside (0, pi]")

    @classmethod
    def from_degrees(cls, yaw: float, pitch: float, h_fov: float, v_fov: float) -> "Viewport":
        return cls(
            math.radians(yaw), math.radians(pitch), math.radians(h_fov), math.radians(v_fov)
        )


@dataclass(frozen=True)
class Projection:
    kind: ProjectionKind
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise BadConfigError("projection dimensions must be positive")
        if self.kind == ProjectionKind.CUBEMAP_3x2 and self.width * 2 != self.height * 3:
            raise BadConfigError("3x2 cube map needs width*2 == height*3 (square faces)")


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % TWO_PI - math.pi


def _rotation(viewport: Viewport) -> np.ndarray:
    cy, sy = math.cos(viewport.yaw), math.sin(viewport.yaw)
    cp, sp = math.cos(viewport.pitch), math.sin(viewport.pitch)
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    # Ry(-pitch): positive pitch raises the view toward +z.
    ry = np.array([[cp, 0.0, -sp], [0.0, 1.0, 0.0], [sp, 0.0, cp]])
    return rz @ ry


def _local_dirs(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    return np.stack([cb * ca, cb * sa, sb], axis=-1)


def _axis_offsets(half: float, step: float) -> np.ndarray:
    n = int(math.floor(half / step + 1e-9))
    vals = [i * step for i in range(n + 1)]
    if vals[-1] < half - 1e-12:
        vals.append(half)
    pos = np.array(vals)
    return np.concatenate([-pos[:0:-1], pos])


def viewport_directions(viewport: Viewport, step: float) -> np.ndarray:
    """Unit rays on the FOV angular grid, corners and center guaranteed.

    Returns an (N, 3) array in world coordinates.
    """
    if not 0 < step <= min(viewport.h_fov, viewport.v_fov) / 2:
        raise BadStepError("step must be in (0, min(h_fov, v_fov)/2]")
    alphas = _axis_offsets(viewport.h_fov / 2, step)
    betas = _axis_offsets(viewport.v_fov / 2, step)
    aa, bb = np.meshgrid(alphas, betas)
    local = _local_dirs(aa.ravel(), bb.ravel())
    return local @ _rotation(viewport).T


def _frustum_mask(viewport: Viewport, dirs: np.ndarray) -> np.ndarray:
    """Membership of world directions in the viewport's angular bounds."""
    local = dirs @ _rotation(viewport)
    alpha = np.arctan2(local[:, 1], local[:, 0])
    beta = np.arcsin(np.clip(local[:, 2], -1.0, 1.0))
    return (np.abs(alpha) <= viewport.h_fov / 2 + _EDGE_TOL) & (
        np.abs(beta) <= viewport.v_fov / 2 + _EDGE_TOL
    )


# --- forward projections -----------------------------------------------------


def _project_erp(dirs: np.ndarray, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    lon = np.arctan2(dirs[:, 1], dirs[:, 0])
    lat = np.arcsin(np.clip(dirs[:, 2], -1.0, 1.0))
    u = (lon / TWO_PI + 0.5) * width % width
    v = np.clip((0.5 - lat / math.pi) * height, 0.0, np.nextafter(float(height), 0.0))
    return u, v


# Face order and packing: top row left/front/right, bottom row bottom/back/top.
_FACE_LEFT, _FACE_FRONT, _FACE_RIGHT, _FACE_BOTTOM, _FACE_BACK, _FACE_TOP = range(6)
_FACE_CELL = {
    _FACE_LEFT: (0, 0),
    _FACE_FRONT: (1, 0),
    _FACE_RIGHT: (2, 0),
    _FACE_BOTTOM: (0, 1),
    _FACE_BACK: (1, 1),
    _FACE_TOP: (2, 1),
}
_CELL_FACE = {cell: face for face, cell in _FACE_CELL.items()}
_FACE_COL = np.array([_FACE_CELL[f][0] for f in range(6)])
_FACE_ROW = np.array([_FACE_CELL[f][1] for f in range(6)])


def _cubemap_faces(dirs: np.ndarray) -> np.ndarray:
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    ax, ay, az = np.abs(x), np.abs(y), np.abs(z)
    dominant = np.argmax(np.stack([ax, ay, az], axis=0), axis=0)
    faces = np.empty(len(dirs), dtype=np.int64)
    faces[(dominant == 0) & (x >= 0)] = _FACE_FRONT
    faces[(dominant == 0) & (x < 0)] = _FACE_BACK
    faces[(dominant == 1) & (y >= 0)] = _FACE_RIGHT
    faces[(dominant == 1) & (y < 0)] = _FACE_LEFT
    faces[(dominant == 2) & (z >= 0)] = _FACE_TOP
    faces[(dominant == 2) & (z < 0)] = _FACE_BOTTOM
    return faces


def _project_cubemap(
    dirs: np.ndarray, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    s = width / 3.0
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    faces = _cubemap_faces(dirs)
    a = np.empty(len(dirs))
    b = np.empty(len(dirs))
    for face, (a_expr, b_expr) in {
        _FACE_FRONT: (lambda x, y, z: y / x, lambda x, y, z: -z / x),
        _FACE_BACK: (lambda x, y, z: y / x, lambda x, y, z: z / x),
        _FACE_RIGHT: (lambda x, y, z: -x / y, lambda x, y, z: -z / y),
        _FACE_LEFT: (lambda x, y, z: -x / y, lambda x, y, z: z / y),
        _FACE_TOP: (lambda x, y, z: y / z, lambda x, y, z: x / z),
        _FACE_BOTTOM: (lambda x, y, z: -y / z, lambda x, y, z: x / z),
    }.items():
        m = faces == face
        if m.any():
            a[m] = a_expr(x[m], y[m], z[m])
            b[m] = b_expr(x[m], y[m], z[m])
    fa = np.clip((a + 1.0) / 2.0, 0.0, np.nextafter(1.0, 0.0))
    fb = np.clip((b + 1.0) / 2.0, 0.0, np.nextafter(1.0, 0.0))
    return (_FACE_COL[faces] + fa) * s, (_FACE_ROW[faces] + fb) * s


def project_erp(direction, width: int, height: int) -> tuple[float, float]:
    """Pixel coordinates of one unit direction in an ERP frame."""
    u, v = _project_erp(np.asarray(direction, dtype=np.float64).reshape(1, 3), width, height)
    return float(u[0]), float(v[0])


def project_cubemap(direction, width: int, height: int) -> tuple[float, float]:
    """Pixel coordinates of one unit direction in a 3x2 cube-map frame."""
    if width * 2 != height * 3:
        raise BadConfigError("3x2 cube map needs width*2 == height*3")
    u, v = _project_cubemap(
        np.asarray(direction, dtype=np.float64).reshape(1, 3), width, height
    )
    return float(u[0]), float(v[0])


def _project(dirs: np.ndarray, projection: Projection) -> tuple[np.ndarray, np.ndarray]:
    if projection.kind == ProjectionKind.ERP:
        return _project_erp(dirs, projection.width, projection.height)
    return _project_cubemap(dirs, projection.width, projection.height)


# --- inverse projections (pixel centers to directions) -----------------------


def _unproject_erp(u: np.ndarray, v: np.ndarray, width: int, height: int) -> np.ndarray:
    lon = (u / width - 0.5) * TWO_PI
    lat = (0.5 - v / height) * math.pi
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def _unproject_cubemap(u: np.ndarray, v: np.ndarray, width: int, height: int) -> np.ndarray:
    s = width / 3.0
    cols = np.minimum((u / s).astype(np.int64), 2)
    rows = np.minimum((v / s).astype(np.int64), 1)
    a = (u - cols * s) / s * 2.0 - 1.0
    b = (v - rows * s) / s * 2.0 - 1.0
    dirs = np.empty((len(u), 3))
    for (col, row), face in _CELL_FACE.items():
        m = (cols == col) & (rows == row)
        if not m.any():
            continue
        am, bm = a[m], b[m]
        one = np.ones_like(am)
        if face == _FACE_FRONT:
            d = np.stack([one, am, -bm], axis=-1)
        elif face == _FACE_BACK:
            d = np.stack([-one, -am, -bm], axis=-1)
        elif face == _FACE_RIGHT:
            d = np.stack([-am, one, -bm], axis=-1)
        elif face == _FACE_LEFT:
            d = np.stack([am, -one, -bm], axis=-1)
        elif face == _FACE_TOP:
            d = np.stack([bm, am, one], axis=-1)
        else:  # _FACE_BOTTOM
            d = np.stack([-bm, am, -one], axis=-1)
        dirs[m] = d
    return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def _unproject(u: np.ndarray, v: np.ndarray, projection: Projection) -> np.ndarray:
    if projection.kind == ProjectionKind.ERP:
        return _unproject_erp(u, v, projection.width, projection.height)
    return _unproject_cubemap(u, v, projection.width, projection.height)


@lru_cache(maxsize=8)
def _pixel_center_directions(kind: ProjectionKind, width: int, height: int) -> np.ndarray:
    projection = Projection(kind, width, height)
    ys, xs = np.mgrid[0:height, 0:width]
    u = xs.ravel().astype(np.float64) + 0.5
    v = ys.ravel().astype(np.float64) + 0.5
    return _unproject(u, v, projection)


# --- tile selection ----------------------------------------------------------


def _tiles_of_pixels(
    px: np.ndarray, py: np.ndarray, config: SequenceConfig
) -> set[int]:
    cols = np.minimum(px // config.tile_width, config.tile_cols - 1)
    rows = np.minimum(py // config.tile_height, config.tile_rows - 1)
    return set(np.unique(rows * config.tile_cols + cols).astype(int).tolist())


def _check_projection(projection: Projection, config: SequenceConfig) -> None:
    if (projection.width, projection.height) != (config.width, config.height):
        raise BadConfigError("projection frame dimensions must match the stream config")


def select_tiles(
    viewport: Viewport,
    projection: Projection,
    config: SequenceConfig,
    step: float = DEFAULT_STEP_RAD,
) -> set[int]:
    """Tiles touched by the viewport, found by sampling rays on an angular
    grid and keeping every hit pixel whose center lies inside the frustum.

    The pixel-center recheck keeps the result a subset of the brute-force
    coverage oracle at any step; refining the step only adds tiles.
    """
    _check_projection(projection, config)
    dirs = viewport_directions(viewport, step)
    u, v = _project(dirs, projection)
    px = np.floor(u).astype(np.int64)
    py = np.floor(v).astype(np.int64)
    # Dedupe before the recheck: boundary pixels are rechecked once.
    flat = np.unique(py * projection.width + px)
    px = flat % projection.width
    py = flat // projection.width
    centers = _unproject(px + 0.5, py + 0.5, projection)
    keep = _frustum_mask(viewport, centers)
    return _tiles_of_pixels(px[keep], py[keep], config)


def tile_coverage_oracle(
    viewport: Viewport, projection: Projection, config: SequenceConfig
) -> set[int]:
    """Brute force: test every pixel center of the frame against the frustum."""
    _check_projection(projection, config)
    if projection.width * projection.height > ORACLE_PIXEL_BUDGET:
        raise TooLargeError(
            f"{projection.width}x{projection.height} exceeds the oracle pixel budget"
        )
    dirs = _pixel_center_directions(projection.kind, projection.width, projection.height)
    mask = _frustum_mask(viewport, dirs)
    idx = np.nonzero(mask)[0]
    px = idx % projection.width
    py = idx // projection.width
    return _tiles_of_pixels(px, py, config)


# --- viewport traces ---------------------------------------------------------


def write_viewport_trace(path, samples: list[tuple[float, Viewport]]) -> None:
    """JSON lines: one {"t_ms", "yaw_deg", "pitch_deg", "h_fov_deg",
    "v_fov_deg"} object per line."""
    with open(path, "w") as fh:
        for t_ms, vp in samples:
            fh.write(
                json.dumps(
                    {
                        "t_ms": t_ms,
                        "yaw_deg": math.degrees(vp.yaw),
                        "pitch_deg": math.degrees(vp.pitch),
                        "h_fov_deg": math.degrees(vp.h_fov),
                        "v_fov_deg": math.degrees(vp.v_fov),
                    }
                )
                + "\n"
            )


def read_viewport_trace(path) -> list[tuple[float, Viewport]]:
    samples = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            samples.append(
                (
                    float(obj["t_ms"]),
                    Viewport.from_degrees(
                        obj["yaw_deg"], obj["pitch_deg"], obj["h_fov_deg"], obj["v_fov_deg"]
                    ),
                )
            )
    return samples
