"""Layout evaluation: corner and pixel errors, 2D/3D IoU, depth rmse and
delta_1, ground-truth depth masking, training losses and the corner-count
confusion matrix.

Percent-valued metrics are returned in ``[0, 100]``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from . import layout as lm
from . import polygon as pg
from .errors import CountMismatch
from .synth import bucket_of

BUCKETS = ("4", "6", "8", "10+")
DEPTH_MASK_THRESHOLD = 0.15
DELTA1_RATIO = 1.25
LOG_CLAMP = 1e-7
LAYOUTNET_WEIGHTS = (1.0, 1.0)  # boundary, corner
DULANET_HEIGHT_WEIGHT = 0.5


# ---------------------------------------------------------------------------
# image-space errors
# ---------------------------------------------------------------------------

def _as_corners(c) -> lm.CornerSet2D:
    return c if isinstance(c, lm.CornerSet2D) else lm.CornerSet2D(c)


def corner_error(pred, gt, W=geo.DEFAULT_W, H=geo.DEFAULT_H, wrap=True) -> float:
    """Mean L2 distance between matched corners as a percentage of the image
    diagonal.

    Both sets are ordered by column and matched under the cyclic shift that
    minimises the total distance. With ``wrap`` horizontal offsets are taken
    around the panorama seam.
    """
    p, g = _as_corners(pred).sorted(), _as_corners(gt).sorted()
    if len(p) != len(g):
        raise CountMismatch(f"{len(p)} predicted corners vs {len(g)} ground-truth corners")
    if len(g) == 0:
        return 0.0
    best = np.inf
    for k in range(len(g)):
        d = np.roll(p.uv, k, axis=0) - g.uv
        if wrap:
            du = np.abs(d[..., 0]) % W
            d = np.stack([np.minimum(du, W - du), d[..., 1]], axis=-1)
        best = min(best, float(np.linalg.norm(d, axis=-1).mean()))
    return float(100.0 * best / np.hypot(W, H))


def pixel_error(pred: lm.ManhattanLayout, gt: lm.ManhattanLayout, W=geo.DEFAULT_W, H=geo.DEFAULT_H) -> float:
    """Percentage of pixels whose wall/ceiling/floor label differs."""
    a = lm.render_semantics(pred, W, H)
    b = lm.render_semantics(gt, W, H)
    return 100.0 * float(np.mean(a != b))


# ---------------------------------------------------------------------------
# plan and volume overlap
# ---------------------------------------------------------------------------

def _grid_cells(a, b):
    """Cell areas and inside flags of two rectilinear polygons on the grid of
    their combined vertex coordinates."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    xs = np.unique(np.concatenate([a[:, 0], b[:, 0]]))
    zs = np.unique(np.concatenate([a[:, 1], b[:, 1]]))
    cx = 0.5 * (xs[1:] + xs[:-1])
    cz = 0.5 * (zs[1:] + zs[:-1])
    centers = np.stack(np.meshgrid(cx, cz, indexing="ij"), axis=-1).reshape(-1, 2)
    areas = np.outer(np.diff(xs), np.diff(zs)).ravel()
    return areas, pg.contains(a, centers), pg.contains(b, centers)


def plan_overlap(a, b):
    """``(intersection area, area a, area b)`` of two rectilinear polygons."""
    areas, ia, ib = _grid_cells(a, b)
    return float(areas[ia & ib].sum()), float(areas[ia].sum()), float(areas[ib].sum())


def iou2d(pred_plan, gt_plan) -> float:
    """Exact plan IoU of two rectilinear polygons in percent."""
    inter, a, b = plan_overlap(pred_plan, gt_plan)
    union = a + b - inter
    return 100.0 * inter / union if union > 0 else 0.0


def iou3d(pred: lm.ManhattanLayout, gt: lm.ManhattanLayout) -> float:
    """Volumetric IoU in percent after scaling both layouts so the camera is
    1.6 above the floor."""
    p = lm.rescale_to_camera_height(pred)
    g = lm.rescale_to_camera_height(gt)
    inter, a, b = plan_overlap(p.plan, g.plan)
    lo = max(-p.cam_to_floor, -g.cam_to_floor)
    hi = min(p.cam_to_ceiling, g.cam_to_ceiling)
    vi = inter * max(hi - lo, 0.0)
    va = a * p.height
    vb = b * g.height
    union = va + vb - vi
    return 100.0 * vi / union if union > 0 else 0.0


# ---------------------------------------------------------------------------
# depth
# ---------------------------------------------------------------------------

def _depth_pair(pred, gt):
    p = pred.depth if isinstance(pred, lm.DepthMap) else np.asarray(pred, dtype=float)
    g = gt if isinstance(gt, lm.DepthMap) else lm.DepthMap(gt)
    if p.shape != g.depth.shape:
        raise ValueError(f"depth shapes differ: {p.shape} vs {g.depth.shape}")
    return p[g.valid], g.depth[g.valid]


def depth_rmse(pred, gt) -> float:
    """Root mean squared depth error over the ground truth's valid pixels."""
    p, g = _depth_pair(pred, gt)
    if g.size == 0:
        raise ValueError("ground truth has no valid pixels")
    return float(np.sqrt(np.mean((p - g) ** 2)))


def depth_delta1(pred, gt, ratio=DELTA1_RATIO) -> float:
    """Fraction of valid pixels whose depth ratio (either way round) is below
    ``ratio``."""
    p, g = _depth_pair(pred, gt)
    if g.size == 0:
        raise ValueError("ground truth has no valid pixels")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.maximum(p / g, g / p)
    return float(np.mean(r < ratio))


def mask_gt_depth(gt_depth, layout: lm.ManhattanLayout, threshold=DEPTH_MASK_THRESHOLD,
                  mode="ray") -> lm.DepthMap:
    """Invalidate ground-truth pixels farther than ``threshold`` meters from
    the depth rendered from ``layout`` with the camera 1.6 above the floor."""
    gt = gt_depth if isinstance(gt_depth, lm.DepthMap) else lm.DepthMap(gt_depth)
    H, W = gt.shape
    rendered = lm.render_depth(lm.rescale_to_camera_height(layout), W, H, mode=mode).depth
    keep = np.abs(gt.depth - rendered) <= threshold
    return lm.DepthMap(gt.depth.copy(), gt.valid & keep)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def bce(pred, target, clamp=LOG_CLAMP) -> float:
    """Mean binary cross entropy per element with clamped probabilities."""
    p = np.clip(np.asarray(pred, dtype=float), clamp, 1.0 - clamp)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log(1.0 - p)))


def l1(pred, target) -> float:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return float(np.mean(np.abs(p - t)))


def losses(pred: dict, gt: dict, alpha=LAYOUTNET_WEIGHTS[0], beta=LAYOUTNET_WEIGHTS[1],
           gamma=DULANET_HEIGHT_WEIGHT) -> dict:
    """Training losses for whichever prediction families are present.

    Recognised keys: ``m_E``/``m_C`` (boundary and corner maps),
    ``M_FC``/``M_FP``/``H`` (floor-ceiling map, floor plan, layout height),
    ``ceiling_v``/``floor_v``/``corner_prob`` (per-column outputs). Returns a
    dict with ``layoutnet``, ``dulanet`` and ``horizonnet`` totals plus their
    individual terms.
    """
    out = {}
    if {"m_E", "m_C"} <= pred.keys() & gt.keys():
        out["layoutnet_boundary"] = bce(pred["m_E"], gt["m_E"])
        out["layoutnet_corner"] = bce(pred["m_C"], gt["m_C"])
        out["layoutnet"] = alpha * out["layoutnet_boundary"] + beta * out["layoutnet_corner"]
    if {"M_FC", "M_FP", "H"} <= pred.keys() & gt.keys():
        out["dulanet_fc"] = bce(pred["M_FC"], gt["M_FC"])
        out["dulanet_fp"] = bce(pred["M_FP"], gt["M_FP"])
        out["dulanet_height"] = l1(pred["H"], gt["H"])
        out["dulanet"] = out["dulanet_fc"] + out["dulanet_fp"] + gamma * out["dulanet_height"]
    if {"ceiling_v", "floor_v", "corner_prob"} <= pred.keys() & gt.keys():
        b_pred = np.stack([pred["ceiling_v"], pred["floor_v"]])
        b_gt = np.stack([gt["ceiling_v"], gt["floor_v"]])
        out["horizonnet_boundary"] = l1(b_pred, b_gt)
        out["horizonnet_corner"] = bce(pred["corner_prob"], gt["corner_prob"])
        out["horizonnet"] = out["horizonnet_boundary"] + out["horizonnet_corner"]
    if not out:
        raise ValueError("no complete set of prediction/target keys")
    return out


# ---------------------------------------------------------------------------
# corner-count confusion
# ---------------------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    """Rows are true corner-count buckets, columns predicted buckets.
    ``failed`` counts images per true bucket for which no layout came out."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=int))
    failed: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=int))

    def add(self, n_true: int, n_pred: int | None):
        i = BUCKETS.index(bucket_of(n_true))
        if n_pred is None:
            self.failed[i] += 1
        else:
            self.counts[i, BUCKETS.index(bucket_of(n_pred))] += 1

    def row_totals(self):
        return self.counts.sum(axis=1) + self.failed

    def normalized(self):
        """Row-normalised proportions (rows with no images stay zero)."""
        tot = self.row_totals()[:, None].astype(float)
        return np.divide(self.counts, tot, out=np.zeros(self.counts.shape), where=tot > 0)

    def to_dict(self):
        return {"buckets": list(BUCKETS), "counts": self.counts.tolist(), "failed": self.failed.tolist()}

    def format(self) -> str:
        """Text table: one row per true bucket with predicted-bucket
        proportions and the image count."""
        norm = self.normalized()
        head = "true\\pred " + " ".join(f"{b:>6}" for b in BUCKETS) + "   failed      n"
        lines = [head]
        tot = self.row_totals()
        for i, b in enumerate(BUCKETS):
            cells = " ".join(f"{v:6.2f}" for v in norm[i])
            lines.append(f"{b:>9} {cells} {self.failed[i]:8d} {tot[i]:6d}")
        return "\n".join(lines)


def confusion_matrix(pred_layouts, gt_layouts) -> ConfusionMatrix:
    """Bucketed corner-count confusion; ``None`` predictions count as failures."""
    pred_layouts = list(pred_layouts)
    gt_layouts = list(gt_layouts)
    if len(pred_layouts) != len(gt_layouts):
        raise ValueError("prediction and ground-truth lists differ in length")
    cm = ConfusionMatrix()
    for p, g in zip(pred_layouts, gt_layouts):
        cm.add(g.n_corners, None if p is None else p.n_corners)
    return cm


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

METRIC_KEYS = ("corner_error", "pixel_error", "iou2d", "iou3d", "rmse", "delta1")


def evaluate_pair(pred: lm.ManhattanLayout | None, gt: lm.ManhattanLayout, gt_depth=None,
                  W=geo.DEFAULT_W, H=geo.DEFAULT_H) -> dict:
    """All six metrics for one image. Corner error is NaN when corner counts
    differ; every metric is NaN when there is no prediction. Without a
    measured depth map the ground-truth depth is rendered from ``gt``."""
    rec = {"n_true": gt.n_corners, "n_pred": None if pred is None else pred.n_corners}
    if pred is None:
        rec.update({k: float("nan") for k in METRIC_KEYS})
        return rec
    try:
        rec["corner_error"] = corner_error(lm.project_corners(pred, W, H), lm.project_corners(gt, W, H), W, H)
    except CountMismatch:
        rec["corner_error"] = float("nan")
    rec["pixel_error"] = pixel_error(pred, gt, W, H)
    p16, g16 = lm.rescale_to_camera_height(pred), lm.rescale_to_camera_height(gt)
    rec["iou2d"] = iou2d(p16.plan, g16.plan)
    rec["iou3d"] = iou3d(pred, gt)
    if gt_depth is None:
        gt_depth = lm.render_depth(g16, W, H)
    dh, dw = gt_depth.shape
    pd = lm.render_depth(p16, dw, dh)
    rec["rmse"] = depth_rmse(pd, gt_depth)
    rec["delta1"] = depth_delta1(pd, gt_depth)
    return rec


def _nanmean(vals):
    v = np.asarray([x for x in vals if x is not None], dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else float("nan")


@dataclass
class EvalReport:
    """Per-image records, bucket and overall means, and the corner-count
    confusion matrix."""

    records: list = field(default_factory=list)
    confusion: ConfusionMatrix = field(default_factory=ConfusionMatrix)

    def add(self, name: str, pred, gt, gt_depth=None, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
        rec = {"name": name, **evaluate_pair(pred, gt, gt_depth, W, H)}
        self.records.append(rec)
        self.confusion.add(gt.n_corners, rec["n_pred"])
        return rec

    def aggregates(self) -> dict:
        groups = {"overall": self.records}
        for b in BUCKETS:
            groups[b] = [r for r in self.records if bucket_of(r["n_true"]) == b]
        return {
            g: {"count": len(rs), **{k: _nanmean(r[k] for r in rs) for k in METRIC_KEYS}}
            for g, rs in groups.items()
        }

    def to_dict(self):
        return {"records": self.records, "aggregates": self.aggregates(), "confusion": self.confusion.to_dict()}

    def to_json(self, **kw) -> str:
        def clean(x):
            if isinstance(x, float) and not np.isfinite(x):
                return None
            if isinstance(x, dict):
                return {k: clean(v) for k, v in x.items()}
            if isinstance(x, list):
                return [clean(v) for v in x]
            return x

        return json.dumps(clean(self.to_dict()), **kw)

    def to_csv(self) -> str:
        """One row per image, then one row per corner-count bucket and an
        overall row (``name`` is ``mean:<bucket>``)."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["name", "bucket", "n_true", "n_pred", "count", *METRIC_KEYS])

        def fmt(x):
            return "" if x is None or not np.isfinite(x) else f"{x:.4f}"

        for r in self.records:
            wr.writerow([r["name"], bucket_of(r["n_true"]), r["n_true"],
                         "" if r["n_pred"] is None else r["n_pred"], 1, *(fmt(r[k]) for k in METRIC_KEYS)])
        agg = self.aggregates()
        for g in (*BUCKETS, "overall"):
            row = agg[g]
            wr.writerow([f"mean:{g}", g, "", "", row["count"], *(fmt(row[k]) for k in METRIC_KEYS)])
        return buf.getvalue()
