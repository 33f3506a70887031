"""Projective transforms between the viewing sphere, equirectangular images,
ceiling/floor perspective views and the room frame.

Frame convention: y is up, z is the forward axis and x completes a
right-handed frame. Azimuth ``theta = atan2(x, z)`` is zero at the image
center column and grows to the right.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

DEFAULT_W = 1024
DEFAULT_H = 512

_SNAP = 1e-9


def normalize(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def sphere_to_equirect(s):
    """Map unit directions ``(..., 3)`` to normalized coordinates ``(px, py)``
    in ``[-1, 1]``. At the poles ``px`` is 0."""
    s = np.asarray(s, dtype=float)
    sx, sy, sz = s[..., 0], s[..., 1], s[..., 2]
    px = np.arctan2(sx, sz) / np.pi
    py = np.arcsin(np.clip(sy, -1.0, 1.0)) / (0.5 * np.pi)
    return px, py


def equirect_to_sphere(px, py):
    theta = np.pi * np.asarray(px, dtype=float)
    phi = 0.5 * np.pi * np.asarray(py, dtype=float)
    c = np.cos(phi)
    return np.stack([c * np.sin(theta), np.sin(phi), c * np.cos(theta)], axis=-1)


def norm_to_pixel(px, py, W=DEFAULT_W, H=DEFAULT_H):
    u = (np.asarray(px) + 1.0) * W / 2.0 - 0.5
    v = (1.0 - np.asarray(py)) * H / 2.0 - 0.5
    return u, v


def pixel_to_norm(u, v, W=DEFAULT_W, H=DEFAULT_H):
    px = 2.0 * (np.asarray(u) + 0.5) / W - 1.0
    py = 1.0 - 2.0 * (np.asarray(v) + 0.5) / H
    return px, py


def direction_to_pixel(s, W=DEFAULT_W, H=DEFAULT_H):
    return norm_to_pixel(*sphere_to_equirect(s), W, H)


def pixel_to_direction(u, v, W=DEFAULT_W, H=DEFAULT_H):
    return equirect_to_sphere(*pixel_to_norm(u, v, W, H))


def pixel_grid_directions(W=DEFAULT_W, H=DEFAULT_H):
    """Unit directions of all pixel centers, shape ``(H, W, 3)``."""
    v, u = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    return pixel_to_direction(u, v, W, H)


def column_azimuths(W=DEFAULT_W):
    return np.pi * (2.0 * (np.arange(W) + 0.5) / W - 1.0)


def row_elevations(H=DEFAULT_H):
    return 0.5 * np.pi * (1.0 - 2.0 * (np.arange(H) + 0.5) / H)


def azimuth_to_u(theta, W=DEFAULT_W):
    return (np.asarray(theta) / np.pi + 1.0) * W / 2.0 - 0.5


def elevation_to_v(phi, H=DEFAULT_H):
    return (1.0 - np.asarray(phi) / (0.5 * np.pi)) * H / 2.0 - 0.5


def u_to_azimuth(u, W=DEFAULT_W):
    return np.pi * (2.0 * (np.asarray(u) + 0.5) / W - 1.0)


def v_to_elevation(v, H=DEFAULT_H):
    return 0.5 * np.pi * (1.0 - 2.0 * (np.asarray(v) + 0.5) / H)


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def yaw_matrix(yaw):
    """Rotation about the up axis that adds ``yaw`` to every azimuth."""
    return rot_y(yaw)


def is_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(np.allclose(R @ R.T, np.eye(3), atol=tol) and abs(np.linalg.det(R) - 1.0) < tol)


def _snap(x):
    r = np.round(x)
    return np.where(np.abs(x - r) < _SNAP, r, x)


def sample_equirect(img, u, v):
    """Bilinear lookup at fractional pixel coordinates with horizontal
    wrap-around and vertical clamping. ``img`` is ``(H, W)`` or ``(H, W, C)``."""
    img = np.asarray(img)
    H, W = img.shape[:2]
    u = _snap(np.asarray(u, dtype=float))
    v = np.clip(_snap(np.asarray(v, dtype=float)), 0.0, H - 1.0)
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    u0 = u0.astype(np.int64) % W
    u1 = (u0 + 1) % W
    v0 = v0.astype(np.int64)
    v1 = np.minimum(v0 + 1, H - 1)
    if img.ndim == 3:
        fu = fu[..., None]
        fv = fv[..., None]
    top = img[v0, u0] * (1.0 - fu) + img[v0, u1] * fu
    bot = img[v1, u0] * (1.0 - fu) + img[v1, u1] * fu
    return top * (1.0 - fv) + bot * fv


@dataclass(frozen=True)
class PerspectiveConfig:
    """Pinhole view pointing at the zenith (``ceiling``) or nadir (``floor``)."""

    fov: float = 160.0
    w: int = 512
    direction: str = "ceiling"

    def __post_init__(self):
        if not (0.0 < self.fov < 180.0):
            raise ValueError(f"fov must lie in (0, 180), got {self.fov}")
        if self.w < 2:
            raise ValueError(f"output size must be >= 2, got {self.w}")
        if self.direction not in ("ceiling", "floor"):
            raise ValueError(f"direction must be 'ceiling' or 'floor', got {self.direction!r}")

    @property
    def focal(self) -> float:
        return 0.5 * self.w / np.tan(np.deg2rad(0.5 * self.fov))

    @property
    def rotation(self):
        # camera (x right, y down, z optical axis) -> room frame
        return rot_x(-0.5 * np.pi) if self.direction == "ceiling" else rot_x(0.5 * np.pi)


def perspective_rays(cfg: PerspectiveConfig, xy=None):
    """Room-frame unit rays for perspective pixel coordinates ``xy`` (``(..., 2)``,
    column/row with pixel centers on integers). Defaults to the full ``w x w`` grid."""
    if xy is None:
        r, c = np.meshgrid(np.arange(cfg.w, dtype=float), np.arange(cfg.w, dtype=float), indexing="ij")
        xy = np.stack([c, r], axis=-1)
    xy = np.asarray(xy, dtype=float)
    half = 0.5 * cfg.w
    p = np.stack(
        [xy[..., 0] + 0.5 - half, xy[..., 1] + 0.5 - half, np.full(xy.shape[:-1], cfg.focal)],
        axis=-1,
    )
    return normalize(p @ cfg.rotation.T)


def p2e_lookup(cfg: PerspectiveConfig, plan_xy):
    """Normalized equirect coordinates ``(px, py)`` seen by perspective pixel(s)."""
    return sphere_to_equirect(perspective_rays(cfg, plan_xy))


@functools.lru_cache(maxsize=16)
def _e2p_table(cfg: PerspectiveConfig, W_img: int, H_img: int):
    """Bilinear gather indices and weights for ``e2p_project``; the table is
    read-only and shared between calls with the same view and pano size."""
    px, py = p2e_lookup(cfg, None)
    u, v = norm_to_pixel(px, py, W_img, H_img)
    u = _snap(u)
    v = np.clip(_snap(v), 0.0, H_img - 1.0)
    u0, v0 = np.floor(u), np.floor(v)
    fu, fv = u - u0, v - v0
    u0 = u0.astype(np.int64) % W_img
    v0 = v0.astype(np.int64)
    idx = np.stack([v0 * W_img + u0, v0 * W_img + (u0 + 1) % W_img,
                    np.minimum(v0 + 1, H_img - 1) * W_img + u0,
                    np.minimum(v0 + 1, H_img - 1) * W_img + (u0 + 1) % W_img])
    wts = np.stack([(1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv])
    idx.setflags(write=False)
    wts.setflags(write=False)
    return idx, wts


def e2p_project(pano, cfg: PerspectiveConfig):
    """Resample an equirectangular raster into a ``w x w`` perspective view."""
    pano = np.asarray(pano, dtype=float)
    H_img, W_img = pano.shape[:2]
    idx, wts = _e2p_table(cfg, W_img, H_img)
    flat = pano.reshape(H_img * W_img, *pano.shape[2:])
    vals = flat[idx]
    if pano.ndim == 3:
        return np.einsum("k...c,k...->...c", vals, wts)
    return (vals * wts).sum(axis=0)


def rotate_panorama(pano, R):
    """Output pixel at direction ``s`` samples the input at ``R.T @ s``."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R):
        raise ValueError("R must be a proper rotation (orthonormal, det=+1)")
    pano = np.asarray(pano)
    H, W = pano.shape[:2]
    s = pixel_grid_directions(W, H) @ R  # row-vector form of R.T @ s
    u, v = direction_to_pixel(s, W, H)
    return sample_equirect(pano, u, v)


def perspective_scale(cfg: PerspectiveConfig, plane_distance: float) -> float:
    """Pixels per meter on a horizontal plane ``plane_distance`` from the camera."""
    return cfg.focal / plane_distance


def plan_to_perspective(xz, cfg: PerspectiveConfig, plane_distance: float):
    """Room plan coordinates ``(x, z)`` on a horizontal plane to perspective
    pixel coordinates (column, row). Ceiling views put +z at the top."""
    xz = np.asarray(xz, dtype=float)
    k = perspective_scale(cfg, plane_distance)
    half = 0.5 * cfg.w
    col = xz[..., 0] * k + half - 0.5
    if cfg.direction == "ceiling":
        row = -xz[..., 1] * k + half - 0.5
    else:
        row = xz[..., 1] * k + half - 0.5
    return np.stack([col, row], axis=-1)


def perspective_to_plan(xy, cfg: PerspectiveConfig, plane_distance: float):
    xy = np.asarray(xy, dtype=float)
    k = perspective_scale(cfg, plane_distance)
    half = 0.5 * cfg.w
    x = (xy[..., 0] + 0.5 - half) / k
    z = (xy[..., 1] + 0.5 - half) / k
    if cfg.direction == "ceiling":
        z = -z
    return np.stack([x, z], axis=-1)


def geodesic_angle(R1, R2) -> float:
    """Angle in radians of the relative rotation ``R1.T @ R2``."""
    c = (np.trace(np.asarray(R1).T @ np.asarray(R2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))
