"""Shared test helpers and independent oracles.

The oracles deliberately avoid the library's own geometry code: containment
uses a winding-number rule (the library uses even-odd crossings), volumes are
estimated by Monte-Carlo sampling, plan overlaps by a scanline winding
raster or shapely, and depth metrics by plain Python loops.
"""
import functools
import math

import numpy as np
from scipy import ndimage
from shapely.geometry import Polygon

from panolayout import synth


@functools.lru_cache(maxsize=None)
def room(seed, n_corners):
    """Cached synthetic room; layouts are immutable so sharing is safe."""
    return synth.sample_layout(seed, n_corners)


def winding_contains(poly, pts):
    """Winding-number point-in-polygon test for points ``(N, 2)``."""
    poly = np.asarray(poly, dtype=float)
    px, py = pts[:, 0:1], pts[:, 1:2]
    x0, y0 = poly[:, 0], poly[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    # horizontal edges never cross a scan ray
    keep = y0 != y1
    x0, y0, x1, y1 = x0[keep], y0[keep], x1[keep], y1[keep]
    side = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
    up = (y0 <= py) & (y1 > py) & (side > 0)
    down = (y0 > py) & (y1 <= py) & (side < 0)
    return (up.sum(axis=1) - down.sum(axis=1)) != 0


def at_camera_height(layout, target=1.6):
    k = target / layout.cam_to_floor
    return np.asarray(layout.plan) * k, layout.cam_to_floor * k, layout.cam_to_ceiling * k


def mc_iou3d(a, b, n=1_000_000, seed=0, chunk=250_000):
    """Volumetric IoU (percent) of two layouts by uniform sampling of their
    joint bounding box after scaling both to a 1.6 camera height."""
    pa, fa, ca = at_camera_height(a)
    pb, fb, cb = at_camera_height(b)
    lo = np.minimum(pa.min(axis=0), pb.min(axis=0))
    hi = np.maximum(pa.max(axis=0), pb.max(axis=0))
    ylo, yhi = -max(fa, fb), max(ca, cb)
    rng = np.random.default_rng(seed)
    inter = union = 0
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        xz = rng.uniform(lo, hi, size=(m, 2))
        y = rng.uniform(ylo, yhi, size=m)
        ina = winding_contains(pa, xz) & (y >= -fa) & (y <= ca)
        inb = winding_contains(pb, xz) & (y >= -fb) & (y <= cb)
        inter += int(np.count_nonzero(ina & inb))
        union += int(np.count_nonzero(ina | inb))
    return 100.0 * inter / union


def winding_raster(poly, xs, zs):
    """Nonzero-winding mask of ``poly`` sampled at the grid ``zs x xs``.

    Each edge adds its signed crossing to every row whose sample height it
    spans, at the first column right of the crossing; a running sum along the
    row then gives the winding number at every sample.
    """
    poly = np.asarray(poly, dtype=float)
    acc = np.zeros((len(zs), len(xs) + 1), dtype=np.int32)
    for (x0, z0), (x1, z1) in zip(poly, np.roll(poly, -1, axis=0)):
        if z0 == z1:
            continue
        sign = 1 if z1 > z0 else -1
        lo, hi = min(z0, z1), max(z0, z1)
        rows = np.flatnonzero((zs >= lo) & (zs < hi))
        xc = x0 + (zs[rows] - z0) * (x1 - x0) / (z1 - z0)
        cols = np.searchsorted(xs, xc, side="left")
        np.add.at(acc, (rows, cols), sign)
    return np.cumsum(acc, axis=1)[:, :-1] != 0


def raster_iou2d(a, b, res=2048):
    """Plan IoU (percent) by pixel-center sampling on a ``res x res`` grid
    spanning both polygons."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.minimum(a.min(axis=0), b.min(axis=0))
    hi = np.maximum(a.max(axis=0), b.max(axis=0))
    xs = lo[0] + (np.arange(res) + 0.5) * (hi[0] - lo[0]) / res
    zs = lo[1] + (np.arange(res) + 0.5) * (hi[1] - lo[1]) / res
    ina, inb = winding_raster(a, xs, zs), winding_raster(b, xs, zs)
    return 100.0 * np.count_nonzero(ina & inb) / np.count_nonzero(ina | inb)


def shapely_iou(a, b):
    pa, pb = Polygon(np.asarray(a)), Polygon(np.asarray(b))
    return 100.0 * pa.intersection(pb).area / pa.union(pb).area


def loop_rmse(pred, gt, valid):
    total, count = 0.0, 0
    for p, g, ok in zip(np.ravel(pred).tolist(), np.ravel(gt).tolist(), np.ravel(valid).tolist()):
        if ok:
            total += (p - g) ** 2
            count += 1
    return math.sqrt(total / count)


def loop_delta1(pred, gt, valid, threshold=1.25):
    hits, count = 0, 0
    for p, g, ok in zip(np.ravel(pred).tolist(), np.ravel(gt).tolist(), np.ravel(valid).tolist()):
        if ok:
            count += 1
            if max(p / g, g / p) < threshold:
                hits += 1
    return hits / count


def chessboard_reach(a, b):
    """Largest chessboard distance from a True pixel of ``a`` to the nearest
    True pixel of ``b``, wrapping horizontally (0 when ``a`` is empty)."""
    if not a.any():
        return 0
    if not b.any():
        return np.inf
    W = b.shape[1]
    tiled = np.concatenate([b, b, b], axis=1)
    dist = ndimage.distance_transform_cdt(~tiled, metric="chessboard")[:, W:2 * W]
    return int(dist[a].max())


def psnr(a, b, peak=1.0):
    mse = float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))
    return np.inf if mse == 0 else 10.0 * math.log10(peak * peak / mse)
