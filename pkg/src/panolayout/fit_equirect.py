"""Layout fitting on equirectangular corner and boundary maps.

Corner columns are picked from the row-summed corner map, the layout is
initialised from the corner heights plus per-column boundary rows (reusing
the column fitter, which also fills in occluded corners), and then refined by
stochastic finite-difference gradient ascent on a score that averages the
corner map at the projected corners and the ceiling/floor boundary channels
along the projected wall edges.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import fit_columns as fc
from . import geometry as geo
from . import layout as lm
from . import polygon as pg
from .errors import InfeasibleInit, InfeasibleLayout, InvalidLayout, TooFewCorners
from .synth import ColumnPrediction

MIN_PEAK_DISTANCE = 20
PEAK_LEVEL = 0.3
PEAK_HALF_WIDTH = 8
PROFILE_SIGMA = 2.0
# smoothed boundary curves bend towards each other near corners
INIT_CORNER_MARGIN = 25


@dataclass(frozen=True)
class ScoreWeights:
    w_junc: float = 1.0
    w_ceil: float = 1.0
    w_floor: float = 1.0

    def __post_init__(self):
        w = (self.w_junc, self.w_ceil, self.w_floor)
        if any(x < 0 for x in w) or not any(x > 0 for x in w):
            raise ValueError(f"weights must be non-negative and not all zero, got {w}")


@dataclass(frozen=True)
class FitParams:
    """Gradient-ascent settings; lengths are in image pixels."""

    step: float = 2.0
    max_iter: int = 80
    # coordinates differentiated per iteration
    batch: int = 4
    eps: float = 1e-6
    h: float = 0.5
    min_step: float = 0.125
    seed: int = 0
    # stop after this many parameter-counts of idle coordinate updates (0: never)
    patience: int = 0

    def __post_init__(self):
        if self.patience < 0:
            raise ValueError("patience must be non-negative")
        if min(self.step, self.max_iter, self.batch, self.eps, self.h, self.min_step) <= 0:
            raise ValueError("all fit parameters must be positive")


def _quadratic_peak(profile, k, half_width, circular=False):
    """Sub-sample peak location near index ``k`` from a least-squares
    parabola over ``k +- half_width``; falls back to ``k`` when the fit is
    not concave or leaves the window."""
    n = len(profile)
    offs = np.arange(-half_width, half_width + 1)
    idx = k + offs
    if circular:
        idx = idx % n
    else:
        ok = (idx >= 0) & (idx < n)
        offs, idx = offs[ok], idx[ok]
    if len(offs) < 3:
        return float(k)
    a, b, _ = np.polyfit(offs, profile[idx], 2)
    if a >= 0:
        return float(k)
    x = -b / (2 * a)
    return float(k + x) if abs(x) <= half_width else float(k)


def extract_corner_candidates(m_C, min_distance=MIN_PEAK_DISTANCE, level=PEAK_LEVEL,
                              half_width=PEAK_HALF_WIDTH) -> lm.CornerSet2D:
    """Corner pairs from a corner probability map.

    Column responses are row sums; columns are local maxima at least
    ``min_distance`` apart whose response exceeds the median by ``level``
    times the median-to-max range. In each column the strongest peak of the
    upper and lower half give the ceiling and floor corner. Positions are
    refined by least-squares parabolas over ``+-half_width`` samples of the
    lightly smoothed profiles, which keeps flat noisy peaks stable.
    """
    m_C = np.asarray(m_C, dtype=float)
    H, W = m_C.shape
    resp = ndimage.gaussian_filter1d(m_C.sum(axis=0), PROFILE_SIGMA, mode="wrap")
    top, med = resp.max(), np.median(resp)
    if top <= 0 or top - med <= 1e-12:
        raise TooFewCorners("corner map has no peaks")
    cols = fc.circular_peaks(resp, med + level * (top - med), min_distance)
    if len(cols) < 4:
        raise TooFewCorners(f"found {len(cols)} corner columns, need 4")
    half = H // 2
    out = []
    for c in cols:
        u = _quadratic_peak(resp, c, half_width, circular=True) % W
        col = ndimage.gaussian_filter1d(m_C[:, c], PROFILE_SIGMA, mode="nearest")
        pair = []
        for lo, hi in ((0, half), (half, H)):
            r = lo + int(np.argmax(col[lo:hi]))
            pair.append([u, _quadratic_peak(col, r, half_width)])
        out.append(pair)
    return lm.CornerSet2D(np.array(out))


def boundary_rows(m_E, half_width=PEAK_HALF_WIDTH):
    """Per-column ceiling-wall and wall-floor rows: the strongest response
    of the (lightly smoothed) ceiling channel in the upper half and floor
    channel in the lower half, refined by least-squares parabolas."""
    m_E = np.asarray(m_E, dtype=float)
    _, H, W = m_E.shape
    half = H // 2
    rows = []
    offs = np.arange(-half_width, half_width + 1)
    # least-squares parabola through equally spaced samples, as linear filters
    V = np.vander(offs, 3)
    coef = np.linalg.pinv(V)
    for ch, lo, hi in ((1, 0, half), (2, half, H)):
        m = ndimage.gaussian_filter(m_E[ch], PROFILE_SIGMA, mode=("nearest", "wrap"))
        r = lo + np.argmax(m[lo:hi], axis=0)
        idx = np.clip(r[None, :] + offs[:, None], 0, H - 1)
        samples = m[idx, np.arange(W)[None, :]]
        a, b, _ = coef @ samples
        with np.errstate(divide="ignore", invalid="ignore"):
            x = np.where(a < 0, -b / (2 * a), 0.0)
        x = np.where(np.abs(x) <= half_width, x, 0.0)
        rows.append(r + x)
    return rows[0], rows[1]


def corner_heights(corners: lm.CornerSet2D, H=geo.DEFAULT_H):
    """Ceiling height of each corner pair for a camera one unit above the floor."""
    uv = corners.uv
    phi_c = geo.v_to_elevation(uv[:, 0, 1], H)
    phi_f = geo.v_to_elevation(uv[:, 1, 1], H)
    ok = (phi_f < 0) & (phi_c > 0)
    d = 1.0 / np.tan(-phi_f[ok])
    return d * np.tan(phi_c[ok])


def lift_corners(corners: lm.CornerSet2D, cam_to_ceiling, H=geo.DEFAULT_H):
    """Plan position of each corner pair for a camera one unit above the
    floor, averaging the floor-corner and ceiling-corner estimates."""
    uv = corners.uv
    theta = geo.u_to_azimuth(uv[:, 1, 0], H * 2)
    phi_c = geo.v_to_elevation(uv[:, 0, 1], H)
    phi_f = geo.v_to_elevation(uv[:, 1, 1], H)
    d = 0.5 * (1.0 / np.tan(-phi_f) + cam_to_ceiling / np.tan(phi_c))
    return np.stack([d * np.sin(theta), d * np.cos(theta)], axis=-1)


def init_layout(corners: lm.CornerSet2D, m_E, H=geo.DEFAULT_H, max_skew_deg=20.0) -> lm.ManhattanLayout:
    """Manhattan layout with unit camera-to-floor distance.

    Corner pairs are lifted to the plan with the ceiling at the mean corner
    height. Each pair of neighbouring corners gives a wall snapped to the
    nearer axis. When the two corners are far from axis-aligned (a corner
    was missed) the walls in between are voted from the boundary rows of the
    ``m_E`` map instead. Parallel neighbouring walls are then completed with
    the hidden connecting wall as in the column fitter.
    """
    if len(corners) < 4:
        raise TooFewCorners(f"{len(corners)} corner columns, need 4")
    hc = corner_heights(corners, H)
    if len(hc) == 0 or not np.isfinite(hc).all() or hc.mean() <= 0:
        raise InfeasibleInit("corner pairs do not straddle the horizon")
    hc = float(hc.mean())
    m_E = np.asarray(m_E, dtype=float)
    W = m_E.shape[2]
    corners = corners.sorted()
    pts = lift_corners(corners, hc, H) * lm.CAMERA_HEIGHT
    height = lm.CAMERA_HEIGHT * (1.0 + hc)
    ceiling_v, floor_v = boundary_rows(m_E)
    cols = ColumnPrediction(ceiling_v, floor_v, np.zeros(W))
    cc = np.floor(corners.columns + 0.5).astype(int) % W
    n = len(pts)
    walls = []
    try:
        for i in range(n):
            a, b = pts[i], pts[(i + 1) % n]
            d = np.abs(b - a)
            skew = np.degrees(np.arctan2(d.min(), d.max()))
            if skew <= max_skew_deg:
                axis = 0 if d[0] < d[1] else 1
                value = 0.5 * (a[axis] + b[axis])
                start, end = a.copy(), b.copy()
                start[axis] = end[axis] = value
                walls.append(fc.Wall(axis, value, start, end, 2))
            else:
                group = fc.project_boundary_points(cols, height, H, corners=[cc[i], cc[(i + 1) % n]],
                                                   min_corners=0, margin=INIT_CORNER_MARGIN)
                span = group[0] if cc[i] < cc[(i + 1) % n] or n == 1 else group[-1]
                walls.extend(fc.fit_walls([span]))
        lay = fc.hallucinate_occluded(walls, height)
    except (InfeasibleLayout, InvalidLayout) as exc:
        raise InfeasibleInit(str(exc)) from exc
    return lay.scaled(1.0 / lay.cam_to_floor)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _edge_index(counts: tuple):
    """Wall index and fractional azimuth position of every edge sample."""
    counts = np.asarray(counts)
    idx = np.repeat(np.arange(len(counts)), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    frac = (np.arange(len(idx)) - starts[idx] + 0.5) / counts[idx]
    idx.setflags(write=False)
    frac.setflags(write=False)
    return idx, frac


def _edge_rays(wp, counts):
    """Azimuth and horizontal distance of the samples along every wall of
    plan ``wp``; wall ``i`` gets ``counts[i]`` samples uniform in azimuth."""
    idx, frac = _edge_index(tuple(int(c) for c in counts))
    nxt = np.concatenate([wp[1:], wp[:1]])
    ta = np.arctan2(wp[:, 0], wp[:, 1])
    span = lm._wrap_angle(np.arctan2(nxt[:, 0], nxt[:, 1]) - ta)
    theta = ta[idx] + span[idx] * frac
    sx, sz = np.sin(theta), np.cos(theta)
    a = wp[idx]
    e = (nxt - wp)[idx]
    denom = sx * e[:, 1] - sz * e[:, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (a[:, 0] * e[:, 1] - a[:, 1] * e[:, 0]) / denom
    return theta, t


def edge_sample_counts(layout: lm.ManhattanLayout, W=geo.DEFAULT_W):
    """Samples per wall for 1-pixel steps in azimuth."""
    wp = layout.world_plan()
    th = np.arctan2(wp[:, 0], wp[:, 1])
    span = np.abs(lm._wrap_angle(np.roll(th, -1) - th))
    return np.maximum(np.ceil(span / (2 * np.pi / W)).astype(int), 1)


def score_layout(layout: lm.ManhattanLayout, m_C, m_E, w: ScoreWeights = ScoreWeights(), counts=None) -> float:
    """Weighted sum of the mean corner response at projected corners and the
    mean ceiling/floor boundary responses along projected wall edges.

    ``counts`` fixes the number of samples per wall (defaults to one per
    pixel of azimuth).
    """
    m_C = np.asarray(m_C, dtype=float)
    m_E = np.asarray(m_E, dtype=float)
    counts = edge_sample_counts(layout, m_C.shape[1]) if counts is None else counts
    return _score(layout.world_plan(), layout.cam_to_ceiling, layout.cam_to_floor, m_C, m_E, w, counts)


def _score(wp, hc, hf, m_C, m_E, w, counts):
    H, W = m_C.shape
    s = 0.0
    if w.w_junc:
        th = np.arctan2(wp[:, 0], wp[:, 1])
        r = np.hypot(wp[:, 0], wp[:, 1])
        u = np.tile(geo.azimuth_to_u(th, W), 2)
        v = geo.elevation_to_v(np.concatenate([np.arctan2(hc, r), -np.arctan2(hf, r)]), H)
        s += w.w_junc * float(geo.sample_equirect(m_C, u, v).mean())
    if w.w_ceil or w.w_floor:
        theta, t = _edge_rays(wp, counts)
        u = geo.azimuth_to_u(theta, W)
        if w.w_ceil:
            v = geo.elevation_to_v(np.arctan2(hc, t), H)
            s += w.w_ceil * float(geo.sample_equirect(m_E[1], u, v).mean())
        if w.w_floor:
            v = geo.elevation_to_v(-np.arctan2(hf, t), H)
            s += w.w_floor * float(geo.sample_equirect(m_E[2], u, v).mean())
    return s


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

class _Problem:
    """Score as a function of wall coordinates and ceiling distance, both
    rescaled so a unit change moves the projection by about one pixel."""

    def __init__(self, L0: lm.ManhattanLayout, m_C, m_E, w):
        self.m_C = np.asarray(m_C, dtype=float)
        self.m_E = np.asarray(m_E, dtype=float)
        self.w = w
        self.H, self.W = self.m_C.shape
        self.axes = L0.wall_axes()
        self.hf = L0.cam_to_floor
        self.yaw = L0.yaw
        self.counts = edge_sample_counts(L0, self.W)
        n = L0.n_corners
        self._fixed = self.axes  # coordinate each wall pins
        self._free = 1 - self.axes
        d = np.roll(L0.plan, -1, axis=0) - L0.plan
        self._signs = np.sign(d[np.arange(n), self._free])
        x0 = np.concatenate([L0.wall_values(), [L0.cam_to_ceiling]])
        self.scale = self._pixel_scale(x0)
        self.y0 = x0 * self.scale

    def _plan(self, x):
        vals = x[:-1]
        prev = np.concatenate([vals[-1:], vals[:-1]])
        px = np.where(self.axes == 0, vals, prev)
        pz = np.where(self.axes == 1, vals, prev)
        return np.stack([px, pz], axis=-1)

    def _world(self, plan):
        if self.yaw == 0.0:
            return plan
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        return np.stack([plan[:, 0] * c + plan[:, 1] * s, -plan[:, 0] * s + plan[:, 1] * c], axis=-1)

    def layout(self, y):
        x = y / self.scale
        return lm.ManhattanLayout(self._plan(x), self.hf, x[-1], self.yaw)

    def _pixel_scale(self, x0):
        def corners(x):
            return lm.project_corners(lm.ManhattanLayout(self._plan(x), self.hf, x[-1], self.yaw),
                                      self.W, self.H).flat()

        base = corners(x0)
        delta = 1e-4 * max(np.abs(x0).max(), 1.0)
        out = np.empty_like(x0)
        for i in range(len(x0)):
            x = x0.copy()
            x[i] += delta
            out[i] = max(np.abs(corners(x) - base).max() / delta, 1e-3)
        return out

    def valid(self, y):
        """Same edge directions as the start, ceiling above the camera,
        camera inside and no self-intersection."""
        x = y / self.scale
        if not x[-1] > 0:
            return False
        plan = self._plan(x)
        d = np.concatenate([plan[1:], plan[:1]]) - plan
        along = d[np.arange(len(plan)), self._free]
        if np.any(np.sign(along) != self._signs) or np.any(np.abs(along) < 1e-9):
            return False
        return bool(pg.contains(plan, np.zeros(2))) and pg.axis_aligned_is_simple(plan)

    def score(self, y):
        x = y / self.scale
        return _score(self._world(self._plan(x)), x[-1], self.hf, self.m_C, self.m_E, self.w, self.counts)


def refine_layout(L0: lm.ManhattanLayout, m_C, m_E, w: ScoreWeights = ScoreWeights(),
                  p: FitParams = FitParams(), history=None) -> lm.ManhattanLayout:
    """Stochastic gradient ascent from ``L0``; returns the best layout seen.

    Each iteration estimates central differences for ``p.batch`` random
    parameters and takes a normalised step of ``p.step`` pixels, halving it
    until the score improves on a valid layout. ``history`` (a list) receives
    the best-so-far score after every iteration.
    """
    prob = _Problem(L0, m_C, m_E, w)
    rng = np.random.default_rng(p.seed)
    y = prob.y0.copy()
    best = prob.score(y)
    if history is not None:
        history.append(best)
    dim = len(y)
    k = min(p.batch, dim)
    idle = 0
    for _ in range(p.max_iter):
        idx = rng.choice(dim, size=k, replace=False)
        g = np.zeros(dim)
        for i in idx:
            e = np.zeros(dim)
            e[i] = p.h
            fp = prob.score(y + e) if prob.valid(y + e) else best
            fm = prob.score(y - e) if prob.valid(y - e) else best
            g[i] = (fp - fm) / (2 * p.h)
        gn = np.linalg.norm(g)
        moved = False
        if gn > p.eps:
            step = p.step
            while step >= p.min_step:
                cand = y + step * g / gn
                if prob.valid(cand):
                    s = prob.score(cand)
                    if s > best + p.eps * step:
                        y, best, moved = cand, s, True
                        break
                step *= 0.5
        if history is not None:
            history.append(best)
        # every coordinate had a chance without any improvement: converged
        idle = 0 if moved else idle + 1
        if p.patience and idle * k >= p.patience * dim:
            break
    return prob.layout(y)


def finite_difference_gradient(layout, m_C, m_E, w=ScoreWeights(), h=0.5, order=2):
    """Gradient of the score in the refinement's pixel-scaled parameters
    (central differences of order 2 or 4)."""
    prob = _Problem(layout, m_C, m_E, w)
    y = prob.y0
    g = np.zeros(len(y))
    for i in range(len(y)):
        e = np.zeros(len(y))
        e[i] = h
        if order == 2:
            g[i] = (prob.score(y + e) - prob.score(y - e)) / (2 * h)
        elif order == 4:
            g[i] = (-prob.score(y + 2 * e) + 8 * prob.score(y + e) - 8 * prob.score(y - e)
                    + prob.score(y - 2 * e)) / (12 * h)
        else:
            raise ValueError("order must be 2 or 4")
    return g


def fit(m_E, m_C, w: ScoreWeights = ScoreWeights(), p: FitParams = FitParams()) -> lm.ManhattanLayout:
    """Corner extraction, initialisation and refinement in one call."""
    H = np.asarray(m_C).shape[0]
    corners = extract_corner_candidates(m_C)
    L0 = init_layout(corners, m_E, H)
    return refine_layout(L0, m_C, m_E, w, p)
