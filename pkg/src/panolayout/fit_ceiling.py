"""Floor-plan fitting in the ceiling view.

The panorama floor-ceiling map is split into ceiling and floor perspective
views (the floor view rescaled so both describe the ceiling plane), fused
with the ceiling-view floor-plan map, thresholded, traced, simplified and
regularized onto an axis-aligned grid before extruding by the room height.

Plan pixels are converted to meters assuming the ceiling lies 1.6 above the
camera, so ``H`` must be given in the same units.
"""
from __future__ import annotations

import cv2
import numpy as np
from scipy import ndimage

from . import geometry as geo
from . import layout as lm
from . import polygon as pg
from .errors import DegenerateHeight, EmptyRegion, InvalidLayout, NonRectilinear

CEILING_DISTANCE = 1.6
THRESHOLD = 0.5
DP_EPSILON = 3.0
MERGE_RADIUS = 5.0
COVERAGE = 0.5
DIAGONAL_DEG = 20.0
MAX_DIAGONAL_SHARE = 0.5


def _ceiling_cfg(cfg):
    cfg = cfg or geo.PerspectiveConfig()
    return geo.PerspectiveConfig(cfg.fov, cfg.w, "ceiling")


def _floor_cfg(cfg):
    return geo.PerspectiveConfig(cfg.fov, cfg.w, "floor")


def floor_scale(H: float) -> float:
    """Ratio between the floor-view and ceiling-view pixel scales."""
    if H <= CEILING_DISTANCE + 1e-3:
        raise DegenerateHeight(f"layout height {H} must exceed {CEILING_DISTANCE}")
    return CEILING_DISTANCE / (H - CEILING_DISTANCE)


def rescale_about_center(img, factor):
    """Output pixel ``p`` samples the input at ``center + (p - center) * factor``
    (bilinear, zero outside)."""
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    c = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    return ndimage.affine_transform(img, np.diag([factor, factor]), offset=c - factor * c,
                                    order=1, mode="constant", cval=0.0)


def split_and_project_fc(M_FC, H, cfg: geo.PerspectiveConfig | None = None):
    """Ceiling-view projections ``(M^C, M^F)`` of the floor-ceiling map.

    The floor view is mirrored so +z points up like the ceiling view, then
    rescaled so that floor-plane geometry lands where the ceiling-plane
    geometry above it does.
    """
    cfg = _ceiling_cfg(cfg)
    s = floor_scale(H)
    M_C = geo.e2p_project(M_FC, cfg)
    M_F = geo.e2p_project(M_FC, _floor_cfg(cfg))[::-1]
    return M_C, rescale_about_center(M_F, s)


def fuse_floor_plan(M_FP, M_C, M_F):
    M_FP, M_C, M_F = (np.asarray(m, dtype=float) for m in (M_FP, M_C, M_F))
    if not (M_FP.shape == M_C.shape == M_F.shape):
        raise ValueError(f"shape mismatch: {M_FP.shape}, {M_C.shape}, {M_F.shape}")
    return 0.5 * M_FP + 0.25 * M_C + 0.25 * M_F


def extract_region(fused, threshold=THRESHOLD):
    """Largest 4-connected component above ``threshold`` and its bounding
    rectangle ``(row0, col0, row1, col1)`` (inclusive pixel indices)."""
    binary = np.asarray(fused) > threshold
    labels, n = ndimage.label(binary)
    if n == 0:
        raise EmptyRegion("no pixel exceeds the threshold")
    sizes = ndimage.sum_labels(binary, labels, index=np.arange(1, n + 1))
    mask = labels == (int(np.argmax(sizes)) + 1)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return mask, (int(rows[0]), int(cols[0]), int(rows[-1]), int(cols[-1]))


def trace_boundary(mask):
    """Outer boundary pixel centers ``(col, row)`` of the largest blob, in
    tracing order."""
    m = np.ascontiguousarray(mask, dtype=np.uint8)
    contours, _ = cv2.findContours(m, cv2.RETR_EXTERNAL, cv2.CHAIN_APPROX_NONE)
    if not contours:
        raise EmptyRegion("mask is empty")
    c = max(contours, key=len)
    return c.reshape(-1, 2).astype(float)


def _dp_open(pts, eps):
    """Indices kept by Douglas-Peucker on an open polyline."""
    keep = np.zeros(len(pts), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(pts) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        a, b = pts[i], pts[j]
        seg = b - a
        L = np.hypot(*seg)
        mid = pts[i + 1:j]
        if L < 1e-12:
            d = np.hypot(*(mid - a).T)
        else:
            d = np.abs(seg[0] * (mid[:, 1] - a[1]) - seg[1] * (mid[:, 0] - a[0])) / L
        k = int(np.argmax(d))
        if d[k] > eps:
            keep[i + 1 + k] = True
            stack.append((i, i + 1 + k))
            stack.append((i + 1 + k, j))
    return np.flatnonzero(keep)


def _farthest_pair(pts):
    hull = cv2.convexHull(pts.astype(np.float32), returnPoints=False).ravel()
    if len(hull) < 2:
        return 0, 0
    h = pts[hull]
    d = np.sum((h[:, None] - h[None]) ** 2, axis=-1)
    i, j = np.unravel_index(int(np.argmax(d)), d.shape)
    return int(min(hull[i], hull[j])), int(max(hull[i], hull[j]))


def simplify_closed(loop, epsilon=DP_EPSILON):
    """Closed-loop Douglas-Peucker anchored at the two farthest-apart points."""
    pts = np.asarray(loop, dtype=float)
    if len(pts) < 3:
        return pts.copy()
    i, j = _farthest_pair(pts)
    if i == j:
        return pts[:1].copy()
    first = pts[i:j + 1]
    second = np.concatenate([pts[j:], pts[:i + 1]])
    k1 = _dp_open(first, epsilon)
    k2 = _dp_open(second, epsilon)
    out = np.concatenate([first[k1[:-1]], second[k2[:-1]]])
    return out


def trace_and_simplify(mask, epsilon=DP_EPSILON):
    return simplify_closed(trace_boundary(mask), epsilon)


def _cluster_1d(values, weights, radius):
    order = np.argsort(values)
    v, w = np.asarray(values, float)[order], np.asarray(weights, float)[order]
    centers = []
    start = 0
    for k in range(1, len(v) + 1):
        if k == len(v) or v[k] - v[k - 1] > radius:
            ww = w[start:k]
            centers.append(float(np.sum(v[start:k] * ww) / ww.sum()) if ww.sum() > 0 else float(v[start:k].mean()))
            start = k
    return np.array(centers)


def _coverage(mask, xs, ys):
    """Fraction of mask pixels among the pixel centers inside each grid cell."""
    integral = np.pad(np.cumsum(np.cumsum(mask.astype(np.int64), 0), 1), ((1, 0), (1, 0)))
    h, w = mask.shape
    cx = np.clip(np.floor(xs).astype(int) + 1, 0, w)  # first center strictly beyond the line
    cy = np.clip(np.floor(ys).astype(int) + 1, 0, h)
    cov = np.zeros((len(ys) - 1, len(xs) - 1))
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            r0, r1, c0, c1 = cy[j], cy[j + 1], cx[i], cx[i + 1]
            n = (r1 - r0) * (c1 - c0)
            if n <= 0:
                continue
            s = integral[r1, c1] - integral[r0, c1] - integral[r1, c0] + integral[r0, c0]
            cov[j, i] = s / n
    return cov


def _edge_position(mask, p, d, normal, axis, window=4, prob=None):
    """Coordinate of the region boundary crossed by the simplified edge from
    ``p`` along ``d``, measured on its middle rows (or columns).

    ``axis`` 0 means the edge is vertical (fixed column). Each row across the
    edge contributes the count of inside pixels in a small window, which puts
    the edge on a pixel border; with ``prob`` the count becomes the summed
    probability, which resolves sub-pixel positions of soft edges."""
    h, w = mask.shape
    other = 1 - axis
    lo, hi = sorted((p[other], p[other] + d[other]))
    trim = 0.2 * (hi - lo)
    idx = np.arange(int(np.ceil(lo + trim)), int(np.floor(hi - trim)) + 1)
    idx = idx[(idx >= 0) & (idx < (h if axis == 0 else w))]
    fallback = p[axis] + 0.5 * d[axis] + 0.5 * np.sign(normal[axis])
    if len(idx) == 0:
        return fallback
    x0 = int(np.floor(p[axis] + 0.5 * d[axis] + 0.5)) - window
    cols = np.arange(x0, x0 + 2 * window + 1)
    valid = (cols >= 0) & (cols < (w if axis == 0 else h))
    src = mask if prob is None else np.clip(prob, 0.0, 1.0)
    sub = src[np.ix_(idx, cols[valid])] if axis == 0 else src[np.ix_(cols[valid], idx)].T
    count = sub.sum(axis=1)
    if normal[axis] > 0:  # inside on the low side
        pos = cols[valid][0] - 0.5 + count
    else:
        pos = cols[valid][-1] + 0.5 - count
    return float(np.median(pos))


def regularize_manhattan(polyline, mask, bounds=None, merge_radius=MERGE_RADIUS, cuboid=False,
                         camera_px=None, prob=None):
    """Axis-aligned plan polygon ``(col, row)`` in ceiling-view pixels.

    Edge lines of the simplified boundary are clustered into horizontal and
    vertical grid lines; grid cells mostly covered by ``mask`` form the plan.
    With ``cuboid`` the bounding rectangle is returned instead.
    """
    mask = np.asarray(mask, dtype=bool)
    if bounds is None:
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        if len(rows) == 0:
            raise EmptyRegion("mask is empty")
        bounds = (rows[0], cols[0], rows[-1], cols[-1])
    r0, c0, r1, c1 = bounds
    rect = np.array([[c0 - 0.5, r0 - 0.5], [c1 + 0.5, r0 - 0.5], [c1 + 0.5, r1 + 0.5], [c0 - 0.5, r1 + 0.5]])
    if cuboid:
        return rect
    poly = np.asarray(polyline, dtype=float)
    if len(poly) < 4:
        raise NonRectilinear(f"polyline has only {len(poly)} vertices")
    d = np.roll(poly, -1, axis=0) - poly
    length = np.hypot(d[:, 0], d[:, 1])
    angle = np.degrees(np.arctan2(np.minimum(np.abs(d[:, 0]), np.abs(d[:, 1])),
                                  np.maximum(np.abs(d[:, 0]), np.abs(d[:, 1]))))
    if length[angle > DIAGONAL_DEG].sum() > MAX_DIAGONAL_SHARE * length.sum():
        raise NonRectilinear("boundary is dominated by diagonal edges")
    horizontal = np.abs(d[:, 0]) >= np.abs(d[:, 1])
    # traced points are pixel centers; the region edge lies half a pixel outward
    orient = 1.0 if pg.signed_area(poly) > 0 else -1.0
    normal = orient * np.stack([d[:, 1], -d[:, 0]], axis=-1) / np.maximum(length, 1e-12)[:, None]
    x_vals = np.array([_edge_position(mask, poly[i], d[i], normal[i], 0, prob=prob) for i in np.flatnonzero(~horizontal)])
    y_vals = np.array([_edge_position(mask, poly[i], d[i], normal[i], 1, prob=prob) for i in np.flatnonzero(horizontal)])
    big = length.sum()
    xs = _cluster_1d(np.concatenate([x_vals, rect[:2, 0]]),
                     np.concatenate([length[~horizontal], [big, big]]), merge_radius)
    ys = _cluster_1d(np.concatenate([y_vals, rect[1:3, 1]]),
                     np.concatenate([length[horizontal], [big, big]]), merge_radius)
    if len(xs) < 2 or len(ys) < 2:
        raise NonRectilinear("fewer than two grid lines along an axis")
    occ = _coverage(mask, xs, ys) > COVERAGE
    occ = ndimage.binary_fill_holes(occ)
    _, n = ndimage.label(occ)
    if n != 1:
        raise NonRectilinear(f"cell union has {n} components")
    if camera_px is None:
        camera_px = ((mask.shape[1] - 1) / 2.0, (mask.shape[0] - 1) / 2.0)
    try:
        plan = pg.cells_to_polygon(occ, xs, ys)
    except ValueError as exc:
        raise NonRectilinear(str(exc)) from exc
    if not pg.contains(plan, np.asarray(camera_px, dtype=float)):
        raise NonRectilinear("cell union excludes the camera")
    return plan


def extrude(plan_px, H, cfg: geo.PerspectiveConfig | None = None) -> lm.ManhattanLayout:
    """Metric layout from a ceiling-view pixel polygon, with the ceiling 1.6
    above the camera and the floor ``H - 1.6`` below it."""
    cfg = _ceiling_cfg(cfg)
    floor_scale(H)
    plan = geo.perspective_to_plan(np.asarray(plan_px, dtype=float), cfg, CEILING_DISTANCE)
    if pg.signed_area(plan) < 0:
        plan = plan[::-1]
    lay = lm.ManhattanLayout(plan, H - CEILING_DISTANCE, CEILING_DISTANCE)
    try:
        return lay.validate()
    except InvalidLayout as exc:
        raise NonRectilinear(f"extruded plan is not a valid layout: {exc}") from exc


def fit(M_FC, M_FP, H, cfg: geo.PerspectiveConfig | None = None, cuboid=False,
        epsilon=DP_EPSILON, merge_radius=MERGE_RADIUS) -> lm.ManhattanLayout:
    """Complete ceiling-view fit. ``H`` is the room height measured with the
    ceiling 1.6 above the camera."""
    cfg = _ceiling_cfg(cfg)
    M_C, M_F = split_and_project_fc(M_FC, H, cfg)
    fused = fuse_floor_plan(M_FP, M_C, M_F)
    mask, bounds = extract_region(fused)
    poly = None if cuboid else trace_and_simplify(mask, epsilon)
    plan_px = regularize_manhattan(poly, mask, bounds, merge_radius, cuboid=cuboid, prob=fused)
    return extrude(plan_px, H, cfg)


def height_in_ceiling_units(layout: lm.ManhattanLayout) -> float:
    """Room height rescaled so that the ceiling is 1.6 above the camera."""
    return layout.height * CEILING_DISTANCE / layout.cam_to_ceiling
