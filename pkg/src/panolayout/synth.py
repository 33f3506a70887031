"""Synthetic stand-in for the layout networks: random Manhattan rooms and
noisy prediction maps in the three output formats (equirect boundary/corner
maps, floor-ceiling + floor-plan maps, per-column vectors)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import geometry as geo
from . import layout as lm
from . import polygon as pg
from .errors import SamplingExhausted

MAX_REJECTIONS = 100_000

# share of rooms per corner-count bucket in the MatterportLayout statistics
BUCKET_PROPORTIONS = {"4": 0.52, "6": 0.22, "8": 0.13, "10+": 0.13}


@dataclass(frozen=True)
class NoiseSpec:
    """Corruption applied to clean prediction maps.

    ``peak_jitter`` moves corner peaks and boundary curves by at most that many
    pixels, ``dropout_prob`` removes whole corner columns, ``blur_sigma`` is an
    extra Gaussian blur and ``additive_sigma`` is truncated Gaussian noise on
    probability maps. Column boundary rows only receive jitter and blur.
    """

    blur_sigma: float = 0.0
    additive_sigma: float = 0.0
    peak_jitter: float = 0.0
    dropout_prob: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.blur_sigma < 0 or self.additive_sigma < 0 or self.peak_jitter < 0:
            raise ValueError("noise magnitudes must be non-negative")
        if not (0.0 <= self.dropout_prob <= 1.0):
            raise ValueError("dropout_prob must lie in [0, 1]")

    @property
    def is_zero(self) -> bool:
        return not (self.blur_sigma or self.additive_sigma or self.peak_jitter or self.dropout_prob)

    def rng(self, stream: int):
        return np.random.default_rng([self.rng_seed, stream])


@dataclass
class ColumnPrediction:
    ceiling_v: np.ndarray
    floor_v: np.ndarray
    corner_prob: np.ndarray

    def __post_init__(self):
        self.ceiling_v = np.asarray(self.ceiling_v, dtype=float)
        self.floor_v = np.asarray(self.floor_v, dtype=float)
        self.corner_prob = np.asarray(self.corner_prob, dtype=float)

    @property
    def W(self):
        return len(self.ceiling_v)

    def to_dict(self):
        return {
            "ceiling_v": self.ceiling_v.tolist(),
            "floor_v": self.floor_v.tolist(),
            "corner_prob": self.corner_prob.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["ceiling_v"], d["floor_v"], d["corner_prob"])


# ---------------------------------------------------------------------------
# room sampling
# ---------------------------------------------------------------------------

def _cut_corner(poly, i, a, b):
    """Remove an ``a`` x ``b`` rectangle at convex vertex ``i``."""
    p, v, q = poly[i - 1], poly[i], poly[(i + 1) % len(poly)]
    u1 = (v - p) / np.linalg.norm(v - p)
    u2 = (q - v) / np.linalg.norm(q - v)
    A = v - a * u1
    new = [A, A + b * u2, v + b * u2]
    return np.concatenate([poly[:i], new, poly[i + 1:]])


def _min_edge(poly):
    return np.linalg.norm(np.roll(poly, -1, axis=0) - poly, axis=1).min()


def _kernel_box(poly, margin):
    """Axis-aligned box of points seeing the whole (counter-clockwise,
    rectilinear) polygon from at least ``margin`` inside every wall line, or
    None when empty."""
    lo = poly.min(axis=0).copy()
    hi = poly.max(axis=0).copy()
    e = np.roll(poly, -1, axis=0) - poly
    for p, d in zip(poly, e):
        if abs(d[1]) < 1e-12:  # runs along x: interior is to the left
            if d[0] > 0:
                lo[1] = max(lo[1], p[1] + margin)
            else:
                hi[1] = min(hi[1], p[1] - margin)
        else:
            if d[1] > 0:
                hi[0] = min(hi[0], p[0] - margin)
            else:
                lo[0] = max(lo[0], p[0] + margin)
    if np.any(hi <= lo):
        return None
    return lo, hi


def _clear_of_walls(plan, margin):
    """Origin inside ``plan`` and at least ``margin`` from every edge."""
    if not pg.contains(plan, np.zeros(2)):
        return False
    a = plan
    b = np.roll(plan, -1, axis=0)
    e = b - a
    t = np.clip(-np.sum(a * e, axis=1) / np.sum(e * e, axis=1), 0.0, 1.0)
    closest = a + t[:, None] * e
    return bool(np.hypot(closest[:, 0], closest[:, 1]).min() >= margin)


def _azimuth_gap(plan):
    th = np.sort(np.arctan2(plan[:, 0], plan[:, 1]))
    gaps = np.diff(np.concatenate([th, th[:1] + 2 * np.pi]))
    return gaps.min()


def sample_layout(
    rng_seed,
    n_corners=4,
    size_range=(4.5, 9.0),
    cam_to_floor_range=(1.3, 1.8),
    cam_to_ceiling_range=(0.8, 1.3),
    grid=0.5,
    jitter=0.15,
    min_wall=None,
    wall_margin=0.4,
    min_corner_sep_deg=None,
    max_view_fov=160.0,
    view_margin=0.9,
    camera_tries=20,
    full_view=None,
) -> lm.ManhattanLayout:
    """Random rectilinear room with ``n_corners`` corners.

    Shapes come from cutting grid-sized rectangles off convex corners of a
    grid-aligned box (the first four cuts take distinct box corners, later
    ones produce staircases), with every wall at least ``min_wall`` long after
    the grid lines are jittered. The camera is placed uniformly inside the
    room, at least ``wall_margin`` from the walls, such that the plan fits a
    ``max_view_fov`` ceiling view and adjacent corner columns stay
    ``min_corner_sep_deg`` apart (18 degrees up to 12 corners, 2 beyond).
    With ``full_view`` (the default up to 12 corners) the camera must also see
    every wall, so no corner is occluded.
    """
    if n_corners < 4 or n_corners % 2:
        raise ValueError(f"n_corners must be even and >= 4, got {n_corners}")
    rng = np.random.default_rng(rng_seed)
    n_cuts = (n_corners - 4) // 2
    half_tan = np.tan(np.deg2rad(0.5 * max_view_fov))
    if min_corner_sep_deg is None:
        min_corner_sep_deg = 18.0 if n_corners <= 12 else 2.0
    if min_wall is None:
        min_wall = 1.0 if n_corners <= 12 else 0.5
    if full_view is None:
        full_view = n_corners <= 12
    # shortest pre-jitter edge that still clears min_wall after jitter
    piece = np.ceil((min_wall + 2 * jitter) / grid - 1e-9) * grid
    for _ in range(MAX_REJECTIONS):
        sx, sz = np.round(rng.uniform(*size_range, size=2) / grid) * grid
        poly = np.array([[0, 0], [sx, 0], [sx, sz], [0, sz]], dtype=float)
        corners = {(0.0, 0.0), (sx, 0.0), (sx, sz), (0.0, sz)}
        used = set()
        ok = True
        for k in range(n_cuts):
            cand = []
            for i in range(len(poly)):
                a = poly[i] - poly[i - 1]
                b = poly[(i + 1) % len(poly)] - poly[i]
                if a[0] * b[1] - a[1] * b[0] <= 0:
                    continue
                if np.linalg.norm(a) < 2 * piece or np.linalg.norm(b) < 2 * piece:
                    continue
                # first cuts take distinct original box corners
                if k < 4 and tuple(poly[i]) not in corners - used:
                    continue
                cand.append(i)
            if not cand:
                ok = False
                break
            i = int(rng.choice(cand))
            used.add(tuple(poly[i]))
            la = np.linalg.norm(poly[i] - poly[i - 1])
            lb = np.linalg.norm(poly[(i + 1) % len(poly)] - poly[i])
            a = piece + grid * rng.integers(0, int(round((la - 2 * piece) / grid)) + 1)
            b = piece + grid * rng.integers(0, int(round((lb - 2 * piece) / grid)) + 1)
            poly = _cut_corner(poly, i, a, b)
        if not ok or len(poly) != n_corners or pg.rectilinear_problems(poly):
            continue
        # jitter every grid line off the grid
        xs = np.unique(poly[:, 0])
        zs = np.unique(poly[:, 1])
        dx = dict(zip(xs, rng.uniform(-jitter, jitter, len(xs))))
        dz = dict(zip(zs, rng.uniform(-jitter, jitter, len(zs))))
        poly = np.array([[x + dx[x], z + dz[z]] for x, z in poly])
        if pg.rectilinear_problems(poly) or _min_edge(poly) < min_wall:
            continue
        if pg.signed_area(poly) < 0:
            poly = poly[::-1]
        if full_view:
            box = _kernel_box(poly, wall_margin)
            if box is None:
                continue
        else:
            box = (poly.min(axis=0) + wall_margin, poly.max(axis=0) - wall_margin)
        for _ in range(camera_tries):
            cam = rng.uniform(*box)
            plan = poly - cam
            if not full_view and not _clear_of_walls(plan, wall_margin):
                continue
            if _azimuth_gap(plan) < np.deg2rad(min_corner_sep_deg):
                continue
            hf = rng.uniform(*cam_to_floor_range)
            hc = rng.uniform(*cam_to_ceiling_range)
            if np.abs(plan).max() > view_margin * half_tan * hc:
                continue
            layout = lm.ManhattanLayout(plan, hf, hc)
            if layout.is_valid():
                return layout
    raise SamplingExhausted(f"no valid {n_corners}-corner room after {MAX_REJECTIONS} attempts")


def bucket_of(n_corners: int) -> str:
    return str(n_corners) if n_corners < 10 else "10+"


# ---------------------------------------------------------------------------
# prediction-map synthesis
# ---------------------------------------------------------------------------

def _smooth_profile(rng, W, amplitude):
    """Random smooth periodic profile with ``max |p| <= amplitude``."""
    if amplitude <= 0:
        return np.zeros(W)
    t = 2 * np.pi * np.arange(W) / W
    p = np.zeros(W)
    for k in range(1, 6):
        p += rng.normal() / k * np.sin(k * t + rng.uniform(0, 2 * np.pi))
    return p / np.abs(p).max() * amplitude * rng.uniform(0.5, 1.0)


def _additive(rng, m, sigma):
    if sigma <= 0:
        return m
    noise = np.clip(rng.normal(0.0, sigma, size=m.shape), -4 * sigma, 4 * sigma)
    return np.clip(m + noise, 0.0, 1.0)


def _blur(m, sigma, axes_2d=True):
    if sigma <= 0:
        return m
    if m.ndim == 3:
        return np.stack([_blur(c, sigma) for c in m])
    out = lm.blur_wrap(m, sigma) if m.ndim == 2 else ndimage.gaussian_filter1d(m, sigma, mode="wrap")
    peak = out.max()
    return out / peak * m.max() if peak > 0 else out


def _shift_columns(m, dv):
    """Move each column of ``m`` down by ``dv[u]`` pixels (linear interpolation)."""
    H, W = m.shape
    rows = np.arange(H, dtype=float)[:, None] - dv[None, :]
    cols = np.broadcast_to(np.arange(W, dtype=float), (H, W))
    return geo.sample_equirect(m, cols, rows)


def _shift_rows(m, du):
    """Move each row of ``m`` right by ``du[v]`` pixels, wrapping around."""
    H, W = m.shape
    cols = np.arange(W, dtype=float)[None, :] - du[:, None]
    rows = np.broadcast_to(np.arange(H, dtype=float)[:, None], (H, W))
    return geo.sample_equirect(m, cols, rows)


def synth_equirect_maps(layout: lm.ManhattanLayout, noise: NoiseSpec = NoiseSpec(),
                        W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    """Noisy smoothed boundary map (3, H, W) and corner map (H, W)."""
    rng = noise.rng(1)
    m_E = lm.render_boundary_map(layout, W, H, smooth=False)
    corners = lm.project_corners(layout, W, H).uv.copy()
    keep = rng.uniform(size=len(corners)) >= noise.dropout_prob
    if noise.peak_jitter > 0:
        corners += rng.uniform(-noise.peak_jitter, noise.peak_jitter, size=corners.shape)
        dv = _smooth_profile(rng, W, noise.peak_jitter)
        m_E[1] = np.minimum(_shift_columns(m_E[1], dv), 1.0)
        dv = _smooth_profile(rng, W, noise.peak_jitter)
        m_E[2] = np.minimum(_shift_columns(m_E[2], dv), 1.0)
        du = _smooth_profile(rng, H, noise.peak_jitter)
        m_E[0] = np.minimum(_shift_rows(m_E[0], du), 1.0)
    m_C = np.zeros((H, W))
    if keep.any():
        lm._splat(m_C, corners[keep].reshape(-1, 2))
    m_E = lm.smooth_map(m_E)
    m_C = lm.smooth_map(m_C)
    m_E = _additive(rng, _blur(m_E, noise.blur_sigma), noise.additive_sigma)
    m_C = _additive(rng, _blur(m_C, noise.blur_sigma), noise.additive_sigma)
    return m_E, m_C


def synth_ceiling_maps(layout: lm.ManhattanLayout, noise: NoiseSpec = NoiseSpec(),
                       cfg: geo.PerspectiveConfig | None = None, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    """Floor-ceiling map (H, W) in the panorama and floor-plan map (w, w) in
    the ceiling view."""
    rng = noise.rng(2)
    cfg = cfg or geo.PerspectiveConfig()
    M_FC = (lm.render_semantics(layout, W, H) != lm.WALL).astype(float)
    M_FP, _ = lm.render_floor_plan(layout, cfg)
    M_FC = _additive(rng, _blur(M_FC, noise.blur_sigma), noise.additive_sigma)
    M_FP = _additive(rng, _blur_plain(M_FP, noise.blur_sigma), noise.additive_sigma)
    return M_FC, M_FP


def _blur_plain(m, sigma):
    if sigma <= 0:
        return m
    return ndimage.gaussian_filter(m, sigma, mode="nearest")


CORNER_PROB_SIGMA = 20.0


def synth_columns(layout: lm.ManhattanLayout, noise: NoiseSpec = NoiseSpec(),
                  W=geo.DEFAULT_W, H=geo.DEFAULT_H) -> ColumnPrediction:
    """Per-column visible ceiling/floor boundary rows and corner probability."""
    rng = noise.rng(3)
    theta = geo.column_azimuths(W)
    d = lm.wall_distances(layout.world_plan(), theta)
    ceiling_v = geo.elevation_to_v(np.arctan2(layout.cam_to_ceiling, d), H)
    floor_v = geo.elevation_to_v(-np.arctan2(layout.cam_to_floor, d), H)
    cols = lm.project_corners(layout, W, H).columns.copy()
    keep = rng.uniform(size=len(cols)) >= noise.dropout_prob
    if noise.peak_jitter > 0:
        cols += rng.uniform(-noise.peak_jitter, noise.peak_jitter, size=cols.shape)
        ceiling_v = ceiling_v + _smooth_profile(rng, W, noise.peak_jitter)
        floor_v = floor_v + _smooth_profile(rng, W, noise.peak_jitter)
    u = np.arange(W, dtype=float)
    prob = np.zeros(W)
    for c in cols[keep]:
        du = np.abs(u - c)
        du = np.minimum(du, W - du)
        prob = np.maximum(prob, np.exp(-0.5 * (du / CORNER_PROB_SIGMA) ** 2))
    if noise.blur_sigma > 0:
        ceiling_v = ndimage.gaussian_filter1d(ceiling_v, noise.blur_sigma, mode="wrap")
        floor_v = ndimage.gaussian_filter1d(floor_v, noise.blur_sigma, mode="wrap")
        prob = _blur(prob, noise.blur_sigma)
    prob = _additive(rng, prob, noise.additive_sigma)
    floor_v = np.maximum(floor_v, ceiling_v + 1.0)
    return ColumnPrediction(ceiling_v, floor_v, prob)
