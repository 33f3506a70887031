"""Manhattan layout representation and forward renderers (corner/boundary
maps, ceiling-view floor plan, semantic labels, depth)."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import cv2
import numpy as np

from . import geometry as geo
from . import polygon as pg
from .errors import InvalidLayout

CEILING, FLOOR, WALL = 0, 1, 2

CAMERA_HEIGHT = 1.6
SMOOTH_DILATION = 3
SMOOTH_SIGMA = 20.0


@dataclass(frozen=True)
class ManhattanLayout:
    """Rectilinear ceiling-view plan (counter-clockwise ``(x, z)`` corners in
    meters, camera at the origin) plus camera-to-floor and camera-to-ceiling
    distances.

    ``yaw`` rotates the whole room about the vertical axis relative to the
    panorama; it is zero for aligned panoramas and only changes under
    horizontal-rotation augmentation.
    """

    plan: np.ndarray
    cam_to_floor: float
    cam_to_ceiling: float
    yaw: float = 0.0

    def __post_init__(self):
        plan = np.array(self.plan, dtype=float).reshape(-1, 2)
        plan.setflags(write=False)
        object.__setattr__(self, "plan", plan)
        object.__setattr__(self, "cam_to_floor", float(self.cam_to_floor))
        object.__setattr__(self, "cam_to_ceiling", float(self.cam_to_ceiling))
        object.__setattr__(self, "yaw", float(self.yaw))

    @property
    def height(self) -> float:
        return self.cam_to_floor + self.cam_to_ceiling

    @property
    def n_corners(self) -> int:
        return len(self.plan)

    def problems(self):
        out = pg.rectilinear_problems(self.plan, tol=1e-9 * max(1.0, np.abs(self.plan).max(initial=1.0)))
        if out:
            return out
        if not (np.isfinite(self.cam_to_floor) and self.cam_to_floor > 0):
            out.append("cam_to_floor must be positive")
        if not (np.isfinite(self.cam_to_ceiling) and self.cam_to_ceiling > 0):
            out.append("cam_to_ceiling must be positive")
        if pg.signed_area(self.plan) <= 0:
            out.append("plan must be counter-clockwise")
        if not pg.contains(self.plan, np.zeros(2)):
            out.append("camera (origin) must lie strictly inside the plan")
        elif wall_distances(self.plan, np.array([0.0])).min() <= 0:
            out.append("camera (origin) must lie strictly inside the plan")
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise InvalidLayout("; ".join(problems))
        return self

    def is_valid(self) -> bool:
        return not self.problems()

    def world_plan(self):
        """Plan corners rotated by ``yaw`` into panorama coordinates."""
        if self.yaw == 0.0:
            return self.plan
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        x, z = self.plan[:, 0], self.plan[:, 1]
        return np.stack([x * c + z * s, -x * s + z * c], axis=-1)

    def wall_axes(self):
        """Per edge ``i`` (corner ``i`` to ``i+1``): 0 when the wall has fixed
        x, 1 when it has fixed z."""
        d = np.roll(self.plan, -1, axis=0) - self.plan
        return np.where(np.abs(d[:, 0]) < np.abs(d[:, 1]), 0, 1)

    def wall_values(self):
        axes = self.wall_axes()
        return self.plan[np.arange(self.n_corners), axes]

    def scaled(self, k: float) -> "ManhattanLayout":
        return ManhattanLayout(self.plan * k, self.cam_to_floor * k, self.cam_to_ceiling * k, self.yaw)

    def to_dict(self):
        d = {
            "plan": self.plan.tolist(),
            "cam_to_floor": self.cam_to_floor,
            "cam_to_ceiling": self.cam_to_ceiling,
        }
        if self.yaw:
            d["yaw"] = self.yaw
        return d

    @classmethod
    def from_dict(cls, d, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
        if "plan" in d:
            return cls(d["plan"], d["cam_to_floor"], d["cam_to_ceiling"], d.get("yaw", 0.0))
        if "corners_uv" in d:
            return layout_from_corners_uv(d["corners_uv"], d["height"], W, H)
        raise InvalidLayout("layout JSON needs 'plan' or 'corners_uv'")

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str):
        return cls.from_dict(json.loads(text))


def layout_from_walls(axes, values, cam_to_floor, cam_to_ceiling, yaw=0.0) -> ManhattanLayout:
    """Build a layout from a cyclic wall list. Wall ``i`` is ``x = values[i]``
    (axis 0) or ``z = values[i]`` (axis 1); corner ``i`` joins walls ``i-1``
    and ``i``."""
    axes = np.asarray(axes)
    values = np.asarray(values, dtype=float)
    prev_axes = np.roll(axes, 1)
    prev_vals = np.roll(values, 1)
    x = np.where(axes == 0, values, prev_vals)
    z = np.where(axes == 1, values, prev_vals)
    if np.any(axes == prev_axes):
        raise InvalidLayout("consecutive walls must be perpendicular")
    return ManhattanLayout(np.stack([x, z], axis=-1), cam_to_floor, cam_to_ceiling, yaw)


def layout_from_corners_uv(corners_uv, height, W=geo.DEFAULT_W, H=geo.DEFAULT_H) -> ManhattanLayout:
    """Convert ``[[u, v], ...]`` ceiling/floor corner pairs (ceiling first in
    each pair) into a plan, using camera height 1.6 and total layout height
    ``height``."""
    uv = np.asarray(corners_uv, dtype=float).reshape(-1, 2, 2)
    floor_phi = geo.v_to_elevation(uv[:, 1, 1], H)
    theta = geo.u_to_azimuth(uv[:, 1, 0], W)
    d = CAMERA_HEIGHT / np.tan(-floor_phi)
    plan = np.stack([d * np.sin(theta), d * np.cos(theta)], axis=-1)
    if pg.signed_area(plan) < 0:
        plan = plan[::-1]
    return ManhattanLayout(plan, CAMERA_HEIGHT, height - CAMERA_HEIGHT)


@dataclass
class CornerSet2D:
    """Ceiling/floor corner pairs in equirect pixels, ``uv`` of shape
    ``(n, 2, 2)`` with ``uv[i, 0]`` the ceiling and ``uv[i, 1]`` the floor
    corner."""

    uv: np.ndarray

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=float).reshape(-1, 2, 2)

    def __len__(self):
        return len(self.uv)

    @property
    def columns(self):
        return self.uv[:, 1, 0]

    def sorted(self) -> "CornerSet2D":
        return CornerSet2D(self.uv[np.argsort(self.columns, kind="stable")])

    def flat(self):
        return self.uv.reshape(-1, 2)


@dataclass
class DepthMap:
    depth: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=float)
        if self.valid is None:
            self.valid = np.isfinite(self.depth) & (self.depth > 0)
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.depth) & (self.depth > 0)

    @property
    def shape(self):
        return self.depth.shape


def wall_distances(plan, theta, return_index=False):
    """Horizontal distance from the origin to the first wall along each
    azimuth ``theta`` (same frame as ``plan``)."""
    plan = np.asarray(plan, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d = np.stack([np.sin(theta), np.cos(theta)], axis=-1).reshape(-1, 1, 2)
    a = plan[None]
    e = (np.roll(plan, -1, axis=0) - plan)[None]
    denom = d[..., 0] * e[..., 1] - d[..., 1] * e[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (a[..., 0] * e[..., 1] - a[..., 1] * e[..., 0]) / denom
        s = (a[..., 0] * d[..., 1] - a[..., 1] * d[..., 0]) / denom
    ok = (np.abs(denom) > 1e-15) & (s >= -1e-12) & (s <= 1 + 1e-12) & (t > 0)
    t = np.where(ok, t, np.inf)
    idx = np.argmin(t, axis=1)
    dist = t[np.arange(len(t)), idx].reshape(theta.shape)
    if return_index:
        return dist, idx.reshape(theta.shape)
    return dist


def project_points(pts3, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    u, v = geo.direction_to_pixel(geo.normalize(pts3), W, H)
    return np.stack([u, v], axis=-1)


def project_corners(layout: ManhattanLayout, W=geo.DEFAULT_W, H=geo.DEFAULT_H) -> CornerSet2D:
    wp = layout.world_plan()
    n = len(wp)
    top = np.stack([wp[:, 0], np.full(n, layout.cam_to_ceiling), wp[:, 1]], axis=-1)
    bot = np.stack([wp[:, 0], np.full(n, -layout.cam_to_floor), wp[:, 1]], axis=-1)
    return CornerSet2D(np.stack([project_points(top, W, H), project_points(bot, W, H)], axis=1))


def _wrap_angle(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def wall_curve_samples(a, b, y, W=geo.DEFAULT_W, H=geo.DEFAULT_H, step_px=0.1):
    """Pixel coordinates of the horizontal edge from plan point ``a`` to ``b``
    at height ``y``, sampled uniformly in azimuth every ``step_px`` columns."""
    ta = np.arctan2(a[0], a[1])
    span = _wrap_angle(np.arctan2(b[0], b[1]) - ta)
    n = max(int(np.ceil(abs(span) / (2 * np.pi / W) / step_px)), 1) + 1
    theta = ta + span * np.linspace(0.0, 1.0, n)
    d = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    e = np.asarray(b, float) - np.asarray(a, float)
    denom = d[:, 0] * e[1] - d[:, 1] * e[0]
    t = (a[0] * e[1] - a[1] * e[0]) / denom
    pts = np.stack([t * d[:, 0], np.full(n, y), t * d[:, 1]], axis=-1)
    return project_points(pts, W, H)


def _iround(x):
    # round half up, so .5 positions always land on the same side
    return np.floor(np.asarray(x) + 0.5).astype(int)


def _splat(img, uv, value=1.0):
    H, W = img.shape
    u = _iround(uv[:, 0]) % W
    v = np.clip(_iround(uv[:, 1]), 0, H - 1)
    img[v, u] = value


def smooth_map(m, dilation=SMOOTH_DILATION, sigma=SMOOTH_SIGMA):
    """Dilate, Gaussian-blur (wrapping horizontally, clamping vertically) and
    rescale each channel so its peak is 1. Filtering runs in float32."""
    m = np.asarray(m, dtype=float)
    single = m.ndim == 2
    chans = m[None] if single else m
    out = np.empty_like(chans)
    footprint = np.ones((dilation, dilation), np.uint8)
    pd = dilation // 2
    for i, c in enumerate(chans):
        c = c.astype(np.float32)
        if pd:
            c = cv2.dilate(_wrap_pad(c, pd), footprint, borderType=cv2.BORDER_REPLICATE)[:, pd:-pd]
        c = blur_wrap(c, sigma)
        peak = c.max()
        out[i] = c / peak if peak > 0 else c
    return out[0] if single else out


def _wrap_pad(c, p):
    return np.pad(c, ((0, 0), (p, p)), mode="wrap")


def blur_wrap(c, sigma):
    """Gaussian blur of a 2-D map with horizontal wrap and vertical clamp."""
    c = np.asarray(c, dtype=float)
    if sigma <= 0:
        return c.copy()
    r = int(4.0 * sigma + 0.5)
    k = cv2.getGaussianKernel(2 * r + 1, sigma).astype(np.float32)
    out = cv2.sepFilter2D(_wrap_pad(c.astype(np.float32), r), -1, k, k, borderType=cv2.BORDER_REPLICATE)
    return out[:, r:-r].astype(float)


def render_boundary_map(layout: ManhattanLayout, W=geo.DEFAULT_W, H=geo.DEFAULT_H, smooth=False):
    """Three channels: wall-wall, ceiling-wall and wall-floor boundaries,
    occluded ones included."""
    m = np.zeros((3, H, W))
    wp = layout.world_plan()
    n = len(wp)
    cs = project_corners(layout, W, H).uv
    for i in range(n):
        (uc, vc), (_, vf) = cs[i]
        rows = np.arange(_iround(vc), _iround(vf) + 1)
        m[0, np.clip(rows, 0, H - 1), _iround(uc) % W] = 1.0
        a, b = wp[i], wp[(i + 1) % n]
        _splat(m[1], wall_curve_samples(a, b, layout.cam_to_ceiling, W, H))
        _splat(m[2], wall_curve_samples(a, b, -layout.cam_to_floor, W, H))
    return smooth_map(m) if smooth else m


def render_corner_map(layout: ManhattanLayout, W=geo.DEFAULT_W, H=geo.DEFAULT_H, smooth=False):
    m = np.zeros((H, W))
    _splat(m, project_corners(layout, W, H).flat())
    return smooth_map(m) if smooth else m


def render_floor_plan(layout: ManhattanLayout, cfg: geo.PerspectiveConfig | None = None):
    """Ceiling-view interior mask at the ceiling plane.

    Returns ``(mask, clipped)``; ``clipped`` is True when a plan corner falls
    outside the raster.
    """
    cfg = cfg or geo.PerspectiveConfig()
    if cfg.direction != "ceiling":
        cfg = geo.PerspectiveConfig(cfg.fov, cfg.w, "ceiling")
    px = geo.plan_to_perspective(layout.world_plan(), cfg, layout.cam_to_ceiling)
    clipped = bool(np.any(px < -0.5) or np.any(px > cfg.w - 0.5))
    return pg.rasterize(px, cfg.w, cfg.w).astype(float), clipped


def _column_hits(layout, W, H):
    theta = geo.column_azimuths(W)
    d = wall_distances(layout.world_plan(), theta)
    phi = geo.row_elevations(H)[:, None]
    return d[None, :], phi


def render_semantics(layout: ManhattanLayout, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    d, phi = _column_hits(layout, W, H)
    tan = np.tan(phi)
    sem = np.full((H, W), WALL, dtype=np.uint8)
    sem[(tan * d > layout.cam_to_ceiling) & (phi > 0)] = CEILING
    sem[(-tan * d > layout.cam_to_floor) & (phi < 0)] = FLOOR
    return sem


def render_depth(layout: ManhattanLayout, W=geo.DEFAULT_W, H=geo.DEFAULT_H, mode="ray") -> DepthMap:
    """Per-pixel distance to the first layout surface.

    ``mode="ray"`` gives Euclidean ray length; ``mode="planar"`` gives the
    perpendicular distance from the camera to the plane that was hit.
    """
    if mode not in ("ray", "planar"):
        raise ValueError(f"unknown depth mode {mode!r}")
    d, phi = _column_hits(layout, W, H)
    sem = render_semantics(layout, W, H)
    sin, cos = np.sin(phi), np.cos(phi)
    if mode == "ray":
        wall = d / cos
        with np.errstate(divide="ignore"):
            ceil = layout.cam_to_ceiling / sin
            floor = -layout.cam_to_floor / sin
    else:
        plan = layout.world_plan()
        theta = geo.column_azimuths(W)
        _, idx = wall_distances(plan, theta, return_index=True)
        e = np.roll(plan, -1, axis=0) - plan
        nrm = np.stack([e[:, 1], -e[:, 0]], axis=-1)
        nrm /= np.linalg.norm(nrm, axis=-1, keepdims=True)
        offs = np.abs(np.sum(nrm * plan, axis=-1))
        wall = np.broadcast_to(offs[idx][None, :], (H, W))
        ceil = np.full((H, W), layout.cam_to_ceiling)
        floor = np.full((H, W), layout.cam_to_floor)
    depth = np.where(sem == CEILING, ceil, np.where(sem == FLOOR, floor, wall))
    depth = np.broadcast_to(depth, (H, W)).astype(float)
    return DepthMap(depth, np.ones((H, W), dtype=bool))


def rescale_to_camera_height(layout: ManhattanLayout, target=CAMERA_HEIGHT) -> ManhattanLayout:
    return layout.scaled(target / layout.cam_to_floor)
