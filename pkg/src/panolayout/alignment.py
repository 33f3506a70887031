"""Manhattan frame estimation and panorama alignment.

Line segments live on the viewing sphere as great-circle arcs. Each segment
votes for every direction on its great circle (all candidate vanishing
directions it is consistent with); the strongest mutually orthogonal triple
of accumulator cells gives the Manhattan frame, which is refined by least
squares over the member segments and re-orthogonalised.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .errors import FrameNotFound

BIN_DEG = 2.0
ORTHO_TOL_DEG = 5.0
MIN_VOTES = 3
MEMBER_TOL_DEG = 2.0
ARC_MARGIN_DEG = 3.0

VIEW_YAWS_DEG = tuple(range(0, 360, 60))
VIEW_PITCHES_DEG = (35.0, -35.0)
VIEW_FOV_DEG = 90.0
VIEW_SIZE = 320
MIN_SEGMENT_PX = 30
CANNY_LOW, CANNY_HIGH = 50, 150
HOUGH_THRESHOLD = 30
HOUGH_MAX_GAP = 3


@dataclass
class LineSegment:
    """Great-circle arc between two unit directions on the viewing sphere."""

    p0: np.ndarray
    p1: np.ndarray
    view: int | None = None

    def __post_init__(self):
        self.p0 = geo.normalize(np.asarray(self.p0, dtype=float))
        self.p1 = geo.normalize(np.asarray(self.p1, dtype=float))
        if np.dot(self.p0, self.p1) < -1 + 1e-9:
            raise ValueError("segment endpoints must not be antipodal")

    @property
    def normal(self):
        n = np.cross(self.p0, self.p1)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            raise ValueError("degenerate segment")
        return n / norm

    @property
    def angle(self) -> float:
        return float(np.arccos(np.clip(np.dot(self.p0, self.p1), -1.0, 1.0)))

    def samples(self, step_rad):
        """Points along the arc, at least every ``step_rad`` radians."""
        ang = self.angle
        n = max(int(np.ceil(ang / step_rad)), 1) + 1
        t = np.linspace(0.0, 1.0, n)
        if ang < 1e-12:
            return np.repeat(self.p0[None], n, axis=0)
        s = np.sin(ang)
        return (np.sin((1 - t) * ang)[:, None] * self.p0 + np.sin(t * ang)[:, None] * self.p1) / s

    def to_dict(self):
        return {"p0": self.p0.tolist(), "p1": self.p1.tolist()}


@dataclass
class ManhattanFrame:
    """Orthonormal, right-handed axes (rows of ``axes``: x, y, z) with y the
    axis closest to world up."""

    axes: np.ndarray = field(default_factory=lambda: np.eye(3))
    votes: tuple = (0, 0, 0)

    def __post_init__(self):
        self.axes = np.asarray(self.axes, dtype=float).reshape(3, 3)

    @property
    def rotation(self):
        """Rotation taking canonical axes to the frame axes (axes as columns)."""
        return self.axes.T.copy()

    def is_orthonormal(self, tol=1e-6) -> bool:
        return geo.is_rotation(self.rotation, tol)


def save_segments(segments, path):
    Path(path).write_text(json.dumps([s.to_dict() for s in segments]))


def load_segments(path):
    data = json.loads(Path(path).read_text())
    return [LineSegment(d["p0"], d["p1"]) for d in data]


# ---------------------------------------------------------------------------
# detection
# ---------------------------------------------------------------------------

def _gray(pano):
    img = np.asarray(pano, dtype=float)
    if img.ndim == 3:
        img = img[..., :3].mean(axis=-1)
    if img.max(initial=0.0) > 1.0:
        img = img / 255.0
    return np.clip(img, 0.0, 1.0)


def _view_rotation(yaw_deg, pitch_deg):
    return geo.rot_y(np.deg2rad(yaw_deg)) @ geo.rot_x(-np.deg2rad(pitch_deg))


def _view_rays(R, size, fov_deg):
    f = 0.5 * size / np.tan(np.deg2rad(0.5 * fov_deg))
    r, c = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float), indexing="ij")
    return _pixel_rays(R, np.stack([c, r], axis=-1), size, f)


def _pixel_rays(R, xy, size, f):
    # image x to the right, image y down; the camera looks along +z
    half = 0.5 * size
    p = np.stack([xy[..., 0] + 0.5 - half, -(xy[..., 1] + 0.5 - half), np.full(xy.shape[:-1], f)], axis=-1)
    return geo.normalize(p @ R.T)


def detect_segments_naive(pano, min_length=MIN_SEGMENT_PX, size=VIEW_SIZE):
    """Straight edges found in twelve overlapping perspective views (Canny
    edges linked by the probabilistic Hough transform), lifted to the sphere."""
    gray = _gray(pano)
    if np.ptp(gray) < 1e-6:
        return []
    H, W = gray.shape
    f = 0.5 * size / np.tan(np.deg2rad(0.5 * VIEW_FOV_DEG))
    out = []
    view = 0
    for pitch in VIEW_PITCHES_DEG:
        for yaw in VIEW_YAWS_DEG:
            R = _view_rotation(yaw, pitch)
            u, v = geo.direction_to_pixel(_view_rays(R, size, VIEW_FOV_DEG), W, H)
            img = geo.sample_equirect(gray, u, v)
            img8 = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
            edges = cv2.Canny(img8, CANNY_LOW, CANNY_HIGH)
            lines = cv2.HoughLinesP(edges, 1, np.pi / 180, HOUGH_THRESHOLD,
                                    minLineLength=min_length, maxLineGap=HOUGH_MAX_GAP)
            if lines is not None:
                for x0, y0, x1, y1 in lines.reshape(-1, 4):
                    ends = _pixel_rays(R, np.array([[x0, y0], [x1, y1]], dtype=float), size, f)
                    if np.dot(ends[0], ends[1]) < 1 - 1e-9:
                        out.append(LineSegment(ends[0], ends[1], view))
            view += 1
    return out


# ---------------------------------------------------------------------------
# voting
# ---------------------------------------------------------------------------

def hemisphere_bins(bin_deg=BIN_DEG):
    """Roughly uniform cell centres on the upper hemisphere (``y >= 0``) with
    spacing close to ``bin_deg``."""
    step = np.deg2rad(bin_deg)
    n_full = int(np.ceil(4 * np.pi / step**2))
    i = np.arange(n_full) + 0.5
    y = 1 - 2 * i / n_full
    r = np.sqrt(1 - y**2)
    phi = np.pi * (3 - np.sqrt(5)) * i
    pts = np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=-1)
    return pts[pts[:, 1] >= 0]


class _Accumulator:
    def __init__(self, bin_deg):
        self.bins = hemisphere_bins(bin_deg)
        self.tree = cKDTree(np.concatenate([self.bins, -self.bins]))
        self.n = len(self.bins)
        self.step = np.deg2rad(bin_deg) / 3

    def cell(self, d):
        _, i = self.tree.query(d)
        return np.asarray(i) % self.n

    def vote(self, segments, arc_margin=np.deg2rad(ARC_MARGIN_DEG)):
        """Each segment adds one vote to every cell its great circle crosses,
        except along the segment itself (widened by ``arc_margin``): the
        vanishing direction of a line never lies on its visible part, while
        room corners where several segments end do."""
        acc = np.zeros(self.n, dtype=int)
        t = np.linspace(0, 2 * np.pi, int(np.ceil(2 * np.pi / self.step)), endpoint=False)
        for s in segments:
            nrm = s.normal
            a = geo.normalize(np.cross(nrm, [1.0, 0, 0] if abs(nrm[0]) < 0.9 else [0, 1.0, 0]))
            b = np.cross(nrm, a)
            circle = np.cos(t)[:, None] * a + np.sin(t)[:, None] * b
            to0 = np.arccos(np.clip(circle @ s.p0, -1.0, 1.0))
            to1 = np.arccos(np.clip(circle @ s.p1, -1.0, 1.0))
            on_arc = to0 + to1 <= s.angle + 2 * arc_margin
            # the antipodal arc maps to the same projective cells
            on_arc |= (np.pi - to0) + (np.pi - to1) <= s.angle + 2 * arc_margin
            np.add.at(acc, np.unique(self.cell(circle[~on_arc])), 1)
        return acc


def _refine(direction, normals, tol):
    """Least-squares direction orthogonal to the normals of member segments."""
    member = np.abs(normals @ direction) < np.sin(tol)
    if member.sum() < 2:
        return direction
    _, _, vt = np.linalg.svd(normals[member])
    d = vt[-1]
    return d if d @ direction >= 0 else -d


def _order_axes(M):
    """Rows of ``M`` as (x, y, z): y closest to up, x closest to +x, z = x cross y."""
    iy = int(np.argmax(np.abs(M[:, 1])))
    y = M[iy] * np.sign(M[iy, 1])
    rest = [i for i in range(3) if i != iy]
    ix = max(rest, key=lambda i: abs(M[i, 0]))
    x = M[ix] * (np.sign(M[ix, 0]) or 1.0)
    z = np.cross(x, y)
    return np.stack([x, y, z]), (iy, ix)


def vote_vanishing_directions(segments, bin_deg=BIN_DEG, ortho_tol_deg=ORTHO_TOL_DEG,
                              min_votes=MIN_VOTES) -> ManhattanFrame:
    """Manhattan frame from great-circle Hough voting.

    The top accumulator cell is paired with every orthogonal cell (within
    ``ortho_tol_deg``) whose completing third direction also has support;
    the triple with the most total votes wins (ties go to the lower cell
    index). Every direction must collect at least ``min_votes``.
    """
    segments = [s for s in segments if s.angle > 1e-9]
    if len(segments) < 3:
        raise FrameNotFound(f"{len(segments)} segments, need at least 3")
    acc_obj = _Accumulator(bin_deg)
    acc = acc_obj.vote(segments)
    bins = acc_obj.bins
    i1 = int(np.argmax(acc))
    d1 = bins[i1]
    tol = np.sin(np.deg2rad(ortho_tol_deg))
    normals = np.array([s.normal for s in segments])
    # segments explained by the first direction do not vote for the other two:
    # every great circle through d1 also crosses its orthogonal circle, which
    # would otherwise pile spurious votes onto the directions of wall corners
    rest = [s for s, n in zip(segments, normals) if abs(n @ d1) >= tol]
    acc2 = acc_obj.vote(rest) if rest else np.zeros_like(acc)
    cand = np.flatnonzero((np.abs(bins @ d1) < tol) & (acc2 >= min_votes))
    best = None
    for i2 in cand:
        d3 = np.cross(d1, bins[i2])
        d3 /= np.linalg.norm(d3)
        near = np.flatnonzero(np.abs(bins @ d3) > np.cos(np.deg2rad(ortho_tol_deg)))
        near = near[(np.abs(bins[near] @ d1) < tol) & (np.abs(bins[near] @ bins[i2]) < tol)]
        if near.size == 0:
            continue
        i3 = int(near[np.argmax(acc2[near])])
        total = acc[i1] + acc2[i2] + acc2[i3]
        if acc2[i3] >= min_votes and (best is None or total > best[0]):
            best = (total, int(i2), i3)
    if acc[i1] < min_votes or best is None:
        raise FrameNotFound("no orthogonal triple of vanishing directions with enough votes")
    _, i2, i3 = best
    mtol = np.deg2rad(MEMBER_TOL_DEG)
    D = np.stack([_refine(bins[i], normals, mtol) for i in (i1, i2, i3)])
    U, _, Vt = np.linalg.svd(D)
    D = U @ Vt
    axes, (iy, ix) = _order_axes(D)
    iz = 3 - iy - ix
    counts = (int(acc[i1]), int(acc2[i2]), int(acc2[i3]))
    votes = (counts[ix], counts[iy], counts[iz])
    return ManhattanFrame(axes, votes)


# ---------------------------------------------------------------------------
# alignment and line maps
# ---------------------------------------------------------------------------

def align_panorama(pano, frame: ManhattanFrame):
    """Rotate the panorama so the frame axes become the canonical axes.
    Returns ``(aligned, R)`` with ``R`` the applied rotation."""
    R = frame.rotation.T
    if np.allclose(R, np.eye(3), atol=1e-12):
        return np.asarray(pano).copy(), np.eye(3)
    return geo.rotate_panorama(pano, R), R


def classify_segment(segment: LineSegment, frame: ManhattanFrame) -> int:
    """Index of the frame axis the segment points towards (the axis lying
    closest to its great circle).

    A segment lying on an axis direction has two axes on its circle; the
    one under the segment itself is where the line sits, not where it
    recedes to, so closeness to the arc midpoint is lightly penalised.
    """
    mid = geo.normalize(segment.p0 + segment.p1)
    cost = np.abs(frame.axes @ segment.normal) + 0.05 * np.abs(frame.axes @ mid)
    return int(np.argmin(cost))


def rasterize_line_map(segments, frame: ManhattanFrame | None = None, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    """Binary ``(3, H, W)`` map, one channel per frame axis (x, y, z), with
    each segment drawn as a 1-pixel great-circle polyline."""
    frame = frame or ManhattanFrame()
    m = np.zeros((3, H, W))
    step = 0.25 * np.pi / H  # a quarter pixel of elevation
    for s in segments:
        if s.angle <= 1e-12:
            continue
        ch = classify_segment(s, frame)
        u, v = geo.direction_to_pixel(s.samples(step), W, H)
        ui = np.floor(u + 0.5).astype(int) % W
        vi = np.clip(np.floor(v + 0.5).astype(int), 0, H - 1)
        m[ch, vi, ui] = 1.0
    return m
