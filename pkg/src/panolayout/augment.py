"""Augmentations that transform a panorama and its layout consistently:
stretching along the room axes, horizontal rotation, left-right flipping and
a luminance (gamma) change."""
from __future__ import annotations

import numpy as np

from . import geometry as geo
from . import layout as lm

DEFAULT_KX = 1.0
DEFAULT_KZ = 2.0


def _to_room(s, yaw):
    """Panorama-frame directions (..., 3) into the room's plan frame."""
    if yaw == 0.0:
        return s
    c, si = np.cos(yaw), np.sin(yaw)
    x, y, z = s[..., 0], s[..., 1], s[..., 2]
    return np.stack([x * c - z * si, y, x * si + z * c], axis=-1)


def _from_room(s, yaw):
    return _to_room(s, -yaw)


def stretch(pano, layout: lm.ManhattanLayout, fx: float, fz: float, supersample: int = 2):
    """Stretch the room by ``fx`` along its x axis and ``fz`` along its z axis.

    The layout's plan corners scale exactly; heights are unchanged. Each
    output pixel looks along ``s`` and samples the input panorama along
    ``normalize(s_x / fx, s_y, s_z / fz)`` (in the room frame), the direction
    that saw the same surface point before stretching. Every output pixel
    averages ``supersample**2`` bilinear samples so thin structures survive
    where the warp shrinks the image.
    """
    if fx <= 0 or fz <= 0:
        raise ValueError("stretch factors must be positive")
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    pano = np.asarray(pano)
    H, W = pano.shape[:2]
    new = lm.ManhattanLayout(layout.plan * [fx, fz], layout.cam_to_floor, layout.cam_to_ceiling, layout.yaw)
    if fx == 1.0 and fz == 1.0:
        return pano.copy(), new
    src = pano.astype(float)
    v, u = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    out = 0.0
    for dv in offs:
        for du in offs:
            s = _to_room(geo.pixel_to_direction(u + du, v + dv, W, H), layout.yaw)
            s = geo.normalize(s / np.array([fx, 1.0, fz]))
            su, sv = geo.direction_to_pixel(_from_room(s, layout.yaw), W, H)
            out = out + geo.sample_equirect(src, su, sv)
    out = out / supersample**2
    return out.astype(pano.dtype) if pano.dtype.kind == "f" else out, new


def sample_stretch_factors(rng, kx=DEFAULT_KX, kz=DEFAULT_KZ):
    """Factors drawn log-uniformly from ``[1/k, k]`` per axis."""
    if kx < 1 or kz < 1:
        raise ValueError("maximum stretch factors must be >= 1")
    fx = float(np.exp(rng.uniform(-np.log(kx), np.log(kx)))) if kx > 1 else 1.0
    fz = float(np.exp(rng.uniform(-np.log(kz), np.log(kz)))) if kz > 1 else 1.0
    return fx, fz


def random_stretch(pano, layout: lm.ManhattanLayout, kx=DEFAULT_KX, kz=DEFAULT_KZ, seed=None):
    """Stretch by factors drawn with :func:`sample_stretch_factors`."""
    fx, fz = sample_stretch_factors(np.random.default_rng(seed), kx, kz)
    return stretch(pano, layout, fx, fz)


def _wrap(a):
    return float((a + np.pi) % (2 * np.pi) - np.pi)


def pano_rotate(pano, layout: lm.ManhattanLayout, k: int):
    """Shift the panorama ``k`` columns to the right (exact circular shift);
    the room turns by the matching yaw."""
    pano = np.asarray(pano)
    W = pano.shape[1]
    k = int(k)
    yaw = _wrap(layout.yaw + 2 * np.pi * (k % W) / W) if k % W else layout.yaw
    new = lm.ManhattanLayout(layout.plan, layout.cam_to_floor, layout.cam_to_ceiling, yaw)
    return np.roll(pano, k, axis=1), new


def pano_flip(pano, layout: lm.ManhattanLayout):
    """Mirror the panorama left-right; the plan is mirrored in x with its
    corner order reversed so it stays counter-clockwise."""
    pano = np.asarray(pano)
    plan = layout.plan * [-1.0, 1.0]
    plan = plan[::-1]
    new = lm.ManhattanLayout(plan, layout.cam_to_floor, layout.cam_to_ceiling, -layout.yaw if layout.yaw else 0.0)
    return pano[:, ::-1].copy(), new


def luminance(pano, gamma: float):
    """Power-law brightness change on a ``[0, 1]`` image."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return np.clip(np.clip(np.asarray(pano, dtype=float), 0.0, 1.0) ** gamma, 0.0, 1.0)


def random_luminance(pano, seed=None, max_log_gamma=np.log(1.5)):
    g = float(np.exp(np.random.default_rng(seed).uniform(-max_log_gamma, max_log_gamma)))
    return luminance(pano, g)
