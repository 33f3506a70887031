"""Layout fitting from per-column predictions (ceiling/floor boundary rows and
wall-wall corner probability).

The room height comes from averaging column-wise ceiling heights, boundary
points are lifted into the ceiling view, walls are voted per segment between
corner columns and snapped to the Manhattan axes, and parallel neighbouring
walls get a hallucinated connecting wall where a corner is hidden.

All lengths are in units where the camera sits 1.6 above the floor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from . import layout as lm
from .errors import InfeasibleLayout, InvalidLayout, TooFewCorners
from .synth import ColumnPrediction

CORNER_THRESHOLD = 0.5
MIN_PEAK_SEPARATION = 20
INLIER_DISTANCE = 0.16
CORNER_MARGIN = 3
MERGE_DISTANCE = 0.3


@dataclass
class Wall:
    """Axis-aligned wall line ``x = value`` (axis 0) or ``z = value`` (axis 1)
    with the plan-space extent of its supporting points."""

    axis: int
    value: float
    start: np.ndarray
    end: np.ndarray
    support: int = 0

    @property
    def direction(self):
        return np.array([0.0, 1.0]) if self.axis == 0 else np.array([1.0, 0.0])


def estimate_height(cols: ColumnPrediction, H=geo.DEFAULT_H) -> float:
    """Floor-to-ceiling height with the camera 1.6 above the floor."""
    phi_c = geo.v_to_elevation(cols.ceiling_v, H)
    phi_f = geo.v_to_elevation(cols.floor_v, H)
    ok = (phi_c > 0) & (phi_f < 0)
    if not ok.any():
        raise InvalidLayout("no column has a ceiling boundary above and a floor boundary below the horizon")
    d = lm.CAMERA_HEIGHT / np.tan(-phi_f[ok])
    return lm.CAMERA_HEIGHT + float(np.mean(d * np.tan(phi_c[ok])))


def circular_peaks(signal, threshold, min_separation):
    """Columns of local maxima above ``threshold``, greedily thinned so any
    two kept peaks are at least ``min_separation`` apart around the circle.
    Returned in increasing column order."""
    s = np.asarray(signal, dtype=float)
    W = len(s)
    left, right = np.roll(s, 1), np.roll(s, -1)
    cand = np.flatnonzero((s > threshold) & (s >= left) & (s >= right) & ((s > left) | (s > right)))
    order = cand[np.argsort(-s[cand], kind="stable")]
    kept = []
    for c in order:
        if all(min(abs(c - k), W - abs(c - k)) >= min_separation for k in kept):
            kept.append(int(c))
    return np.array(sorted(kept), dtype=int)


def corner_columns(cols: ColumnPrediction, threshold=CORNER_THRESHOLD, min_separation=MIN_PEAK_SEPARATION):
    return circular_peaks(cols.corner_prob, threshold, min_separation)


def _lift(cols: ColumnPrediction, height, H):
    """Plan points under every column from the ceiling and the floor boundary,
    shape ``(W, 2, 2)``."""
    theta = geo.column_azimuths(cols.W)
    phi_c = geo.v_to_elevation(cols.ceiling_v, H)
    phi_f = geo.v_to_elevation(cols.floor_v, H)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_c = (height - lm.CAMERA_HEIGHT) / np.tan(phi_c)
        d_f = lm.CAMERA_HEIGHT / np.tan(-phi_f)
    d = np.stack([d_c, d_f], axis=-1)
    d = np.where((d > 0) & np.isfinite(d), d, np.nan)
    dirs = np.stack([np.sin(theta), np.cos(theta)], axis=-1)
    return d[..., None] * dirs[:, None, :]


def project_boundary_points(cols: ColumnPrediction, height, H=geo.DEFAULT_H, corners=None,
                            min_corners=4, margin=CORNER_MARGIN):
    """Lift ceiling and floor boundary points into the plan and split them
    into groups between consecutive corner columns.

    Each group is an ``(m, 2)`` array ordered by azimuth, ceiling and floor
    points of the same column adjacent. Columns within ``margin`` of a
    corner column are left out (at most a quarter of each span).
    """
    if height <= lm.CAMERA_HEIGHT:
        raise InvalidLayout(f"layout height {height} must exceed the camera height")
    W = cols.W
    corners = corner_columns(cols) if corners is None else np.sort(np.asarray(corners, dtype=int))
    if len(corners) < min_corners:
        raise TooFewCorners(f"found {len(corners)} corner columns, need {min_corners}")
    pts = _lift(cols, height, H)
    if len(corners) == 0:
        spans = [(0, W)]
    else:
        spans = [(corners[i], corners[(i + 1) % len(corners)] + (W if i == len(corners) - 1 else 0))
                 for i in range(len(corners))]
    groups = []
    for a, b in spans:
        if len(corners):
            m = min(margin, (b - a) // 4)
            idx = np.arange(a + m + 1, b - m) % W
        else:
            idx = np.arange(a, b)
        g = pts[idx].reshape(-1, 2)
        groups.append(g[np.all(np.isfinite(g), axis=1)])
    return groups


def _best_axis_line(pts, inlier_distance):
    """Vote among the principal-component line and the two axis lines through
    the point median; return ``(axis, value, inlier mask)`` of the snapped
    winner."""
    c = np.median(pts, axis=0)
    cands = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    if len(pts) >= 2:
        centered = pts - pts.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        cands.insert(0, vt[0])
    best = None
    for v in cands:
        base = pts.mean(axis=0) if v is cands[0] and len(cands) == 3 else c
        dist = np.abs((pts[:, 0] - base[0]) * v[1] - (pts[:, 1] - base[1]) * v[0])
        score = int(np.count_nonzero(dist <= inlier_distance))
        if best is None or score > best[0]:
            best = (score, v, dist <= inlier_distance)
    _, v, inl = best
    axis = 1 if abs(v[0]) >= abs(v[1]) else 0
    coord = pts[:, axis]
    sel = coord[inl] if inl.any() else coord
    value = float(np.median(sel))
    inl = np.abs(coord - value) <= inlier_distance
    if inl.any():
        value = float(coord[inl].mean())
        inl = np.abs(coord - value) <= inlier_distance
    return axis, value, inl


def _make_wall(pts, axis, value, inl):
    sup = pts[inl] if inl.any() else pts
    a, b = sup[0].copy(), sup[-1].copy()
    a[axis] = value
    b[axis] = value
    return Wall(axis, value, a, b, int(np.count_nonzero(inl)))


def _split_walls(pts, inlier_distance, min_points, depth):
    axis, value, inl = _best_axis_line(pts, inlier_distance)
    m = len(pts)
    one = np.count_nonzero(inl)
    if depth <= 0 or one >= 0.85 * m or m < 2 * min_points:
        return [_make_wall(pts, axis, value, inl)]
    step = max(2, 2 * (m // 120))
    best = None
    for k in range(min_points - min_points % 2, m - min_points + 1, step):
        left = _best_axis_line(pts[:k], inlier_distance)
        right = _best_axis_line(pts[k:], inlier_distance)
        score = np.count_nonzero(left[2]) + np.count_nonzero(right[2])
        if best is None or score > best[0]:
            best = (score, k)
    if best is None or best[0] - one < 0.1 * m:
        return [_make_wall(pts, axis, value, inl)]
    k = best[1]
    return (_split_walls(pts[:k], inlier_distance, min_points, depth - 1)
            + _split_walls(pts[k:], inlier_distance, min_points, depth - 1))


def fit_walls(groups, inlier_distance=INLIER_DISTANCE, split=True, min_points=16):
    """One snapped wall per group (several when ``split`` and a group clearly
    holds more than one wall, e.g. after a missed corner). Groups with fewer
    than two points are skipped."""
    walls = []
    for g in groups:
        g = np.asarray(g, dtype=float).reshape(-1, 2)
        if len(g) < 2:
            continue
        if split:
            walls.extend(_split_walls(g, inlier_distance, min_points, depth=4))
        else:
            walls.append(_make_wall(g, *_best_axis_line(g, inlier_distance)))
    return walls


def _merge_collinear(walls, tol):
    walls = list(walls)
    changed = True
    while changed and len(walls) > 1:
        changed = False
        for i in range(len(walls)):
            a, b = walls[i], walls[(i + 1) % len(walls)]
            if a.axis == b.axis and abs(a.value - b.value) <= tol and len(walls) > 1:
                wa, wb = max(a.support, 1), max(b.support, 1)
                value = (a.value * wa + b.value * wb) / (wa + wb)
                start, end = a.start.copy(), b.end.copy()
                start[a.axis] = value
                end[a.axis] = value
                merged = Wall(a.axis, value, start, end, a.support + b.support)
                j = (i + 1) % len(walls)
                walls[i] = merged
                del walls[j]
                changed = True
                break
    return walls


def hallucinate_occluded(walls, height, cam_to_floor=lm.CAMERA_HEIGHT, merge_distance=MERGE_DISTANCE):
    """Close a cyclic azimuth-ordered wall list into a layout.

    Where two consecutive walls are parallel, the hidden connecting wall is
    inserted perpendicular to them through the end of the nearer wall next to
    the gap.
    """
    walls = _merge_collinear([w for w in walls if w is not None], merge_distance)
    if len(walls) < 2:
        raise InfeasibleLayout(f"only {len(walls)} distinct walls")
    closed = []
    n = len(walls)
    for i in range(n):
        a, b = walls[i], walls[(i + 1) % n]
        closed.append(a)
        if a.axis == b.axis:
            near_end = a.end if abs(a.value) <= abs(b.value) else b.start
            axis = 1 - a.axis
            p = near_end.copy()
            closed.append(Wall(axis, float(p[axis]), p, p.copy(), 0))
    axes = np.array([w.axis for w in closed])
    values = np.array([w.value for w in closed])
    if len(closed) < 4 or np.any(axes == np.roll(axes, 1)):
        raise InfeasibleLayout("walls do not alternate between the two axes")
    cam_to_ceiling = height - cam_to_floor
    try:
        # walls are in increasing azimuth, which is clockwise seen from above
        lay = lm.layout_from_walls(axes[::-1], values[::-1], cam_to_floor, cam_to_ceiling)
        plan = np.roll(lay.plan, 1, axis=0)
        lay = lm.ManhattanLayout(plan, cam_to_floor, cam_to_ceiling)
        lay.validate()
    except InvalidLayout as exc:
        raise InfeasibleLayout(f"fitted walls do not form a valid layout: {exc}") from exc
    return lay


def fit(cols: ColumnPrediction, H=geo.DEFAULT_H, min_corners=0) -> lm.ManhattanLayout:
    """Full column-based fit; the returned layout has ``cam_to_floor == 1.6``.

    ``min_corners`` defaults to zero because walls whose corner peak was
    missed are recovered by splitting groups.
    """
    height = estimate_height(cols, H)
    if height <= lm.CAMERA_HEIGHT + 1e-3:
        raise InfeasibleLayout(f"estimated height {height:.3f} leaves no room above the camera")
    groups = project_boundary_points(cols, height, H, min_corners=min_corners)
    walls = fit_walls(groups)
    return hallucinate_occluded(walls, height)
