"""Batch stages behind the command line: synthetic dataset generation,
fitting, evaluation, alignment and augmentation. Every stage reads and writes
files so it can run on its own.

Dataset layout (one directory per room)::

    <root>/manifest.json
    <root>/room_0000/layout.json       ground truth
    <root>/room_0000/depth.png         16-bit depth in millimeters
    <root>/room_0000/wireframe.png     edge panorama for alignment demos
    <root>/room_0000/{clean,noisy}/    m_E.png, m_C.png, M_FC.png, M_FP.png,
                                       columns.json, height.json
"""
from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import alignment as al
from . import augment as aug
from . import fit_ceiling, fit_columns, fit_equirect
from . import geometry as geo
from . import io
from . import layout as lm
from . import metrics
from .errors import PanoLayoutError
from .synth import (BUCKET_PROPORTIONS, NoiseSpec, sample_layout, synth_ceiling_maps,
                    synth_columns, synth_equirect_maps)

WORKERS_ENV = "PANOLAYOUT_WORKERS"
METHODS = ("equirect", "ceiling", "columns")
BUCKET_CORNERS = {"4": (4,), "6": (6,), "8": (8,), "10+": (10, 12)}
DEFAULT_NOISE = NoiseSpec(blur_sigma=2.0, additive_sigma=0.05, peak_jitter=2.0, dropout_prob=0.1)


def _from_dict(cls, d):
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**d)


@dataclass
class PipelineConfig:
    """Settings shared by the stages, loadable from a JSON file.

    ``rooms_per_bucket`` takes precedence; otherwise ``n_rooms`` rooms are
    split across buckets by ``bucket_proportions`` (largest remainder).
    """

    seed: int = 0
    rooms_per_bucket: int | None = 1
    n_rooms: int | None = None
    bucket_proportions: dict = field(default_factory=lambda: dict(BUCKET_PROPORTIONS))
    noise: NoiseSpec = DEFAULT_NOISE
    weights: fit_equirect.ScoreWeights = field(default_factory=fit_equirect.ScoreWeights)
    fit_params: fit_equirect.FitParams = field(default_factory=fit_equirect.FitParams)
    W: int = geo.DEFAULT_W
    H: int = geo.DEFAULT_H
    cuboid: bool = False

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "noise" in d:
            d["noise"] = _from_dict(NoiseSpec, d["noise"])
        if "weights" in d:
            d["weights"] = _from_dict(fit_equirect.ScoreWeights, d["weights"])
        if "fit_params" in d:
            d["fit_params"] = _from_dict(fit_equirect.FitParams, d["fit_params"])
        cfg = _from_dict(cls, d)
        if set(cfg.bucket_proportions) - set(BUCKET_CORNERS):
            raise ValueError(f"bucket names must be among {list(BUCKET_CORNERS)}")
        return cfg

    @classmethod
    def load(cls, path):
        return cls.from_dict(io.read_json(path)) if path else cls()

    def to_dict(self):
        return asdict(self)

    def bucket_counts(self) -> dict:
        if self.rooms_per_bucket is not None:
            return {b: int(self.rooms_per_bucket) for b in BUCKET_CORNERS}
        if self.n_rooms is None:
            raise ValueError("set rooms_per_bucket or n_rooms")
        props = {b: float(self.bucket_proportions.get(b, 0.0)) for b in BUCKET_CORNERS}
        total = sum(props.values())
        raw = {b: self.n_rooms * p / total for b, p in props.items()}
        counts = {b: int(np.floor(v)) for b, v in raw.items()}
        left = self.n_rooms - sum(counts.values())
        for b in sorted(raw, key=lambda b: (counts[b] - raw[b], list(raw).index(b)))[:left]:
            counts[b] += 1
        return counts


def worker_count(default=1) -> int:
    try:
        n = int(os.environ.get(WORKERS_ENV, default))
    except ValueError as exc:
        raise ValueError(f"{WORKERS_ENV} must be an integer") from exc
    return max(n, 1)


def _map(fn, items, workers=None):
    """Order-preserving map over a bounded process pool."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def room_plan(cfg: PipelineConfig):
    """``[(room_id, n_corners, seed)]`` for the configured dataset."""
    rng = np.random.default_rng([cfg.seed, 0])
    out = []
    for b, count in cfg.bucket_counts().items():
        for _ in range(count):
            n = int(rng.choice(BUCKET_CORNERS[b]))
            out.append((n, int(rng.integers(0, 2**31 - 1))))
    return [(f"room_{i:04d}", n, s) for i, (n, s) in enumerate(out)]


def _write_predictions(d: Path, L, noise, W, H):
    m_E, m_C = synth_equirect_maps(L, noise, W, H)
    io.save_map(d / "m_E.png", m_E)
    io.save_map(d / "m_C.png", m_C)
    M_FC, M_FP = synth_ceiling_maps(L, noise, W=W, H=H)
    io.save_map(d / "M_FC.png", M_FC)
    io.save_map(d / "M_FP.png", M_FP)
    io.save_columns(d / "columns.json", synth_columns(L, noise, W, H))
    io.write_json(d / "height.json", {"H": fit_ceiling.height_in_ceiling_units(L)})


def _synth_room(args):
    root, room_id, n, seed, cfg_dict = args
    cfg = PipelineConfig.from_dict(cfg_dict)
    d = Path(root) / room_id
    L = sample_layout(seed, n)
    io.save_layout(d / "layout.json", L)
    io.save_depth(d / "depth.png", lm.render_depth(lm.rescale_to_camera_height(L), cfg.W, cfg.H))
    io.save_map(d / "wireframe.png", lm.render_boundary_map(L, cfg.W, cfg.H).max(axis=0))
    _write_predictions(d / "clean", L, NoiseSpec(rng_seed=seed), cfg.W, cfg.H)
    noise = NoiseSpec(**{**asdict(cfg.noise), "rng_seed": seed})
    _write_predictions(d / "noisy", L, noise, cfg.W, cfg.H)
    return {"id": room_id, "n_corners": n, "seed": seed}


def synth_dataset(root, cfg: PipelineConfig, workers=None) -> dict:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    jobs = [(str(root), rid, n, s, cfg_dict) for rid, n, s in room_plan(cfg)]
    rooms = _map(_synth_room, jobs, workers)
    manifest = {"config": cfg_dict, "rooms": rooms}
    io.write_json(root / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def fit_inputs(room_dir, variant="noisy"):
    d = Path(room_dir) / variant
    if not d.is_dir():
        raise FileNotFoundError(f"missing prediction directory {d}")
    return d


def fit_room(room_dir, method, variant="noisy", cfg: PipelineConfig | None = None):
    """Fit one room; returns ``(layout, milliseconds)``. Only the fitting
    call itself is timed, not file loading."""
    cfg = cfg or PipelineConfig()
    d = fit_inputs(room_dir, variant)
    if method == "equirect":
        m_E, m_C = io.load_map(d / "m_E.png"), io.load_map(d / "m_C.png")
        t = time.perf_counter()
        L = fit_equirect.fit(m_E, m_C, cfg.weights, cfg.fit_params)
    elif method == "ceiling":
        M_FC, M_FP = io.load_map(d / "M_FC.png"), io.load_map(d / "M_FP.png")
        H = io.read_json(d / "height.json")["H"]
        t = time.perf_counter()
        L = fit_ceiling.fit(M_FC, M_FP, H, cuboid=cfg.cuboid)
    elif method == "columns":
        cols = io.load_columns(d / "columns.json")
        t = time.perf_counter()
        L = fit_columns.fit(cols, cfg.H)
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    return L, 1000.0 * (time.perf_counter() - t)


def _fit_job(args):
    room_dir, out_dir, method, variant, cfg_dict = args
    rid = Path(room_dir).name
    try:
        L, ms = fit_room(room_dir, method, variant, PipelineConfig.from_dict(cfg_dict))
    except PanoLayoutError as exc:
        return {"id": rid, "ok": False, "error": f"{type(exc).__name__}: {exc}"}
    io.save_layout(Path(out_dir) / rid / "layout.json", L, method=method, time_ms=ms)
    return {"id": rid, "ok": True, "time_ms": ms, "n_corners": L.n_corners}


def room_dirs(root):
    root = Path(root)
    if (root / "layout.json").is_file() or (root / "noisy").is_dir() or (root / "clean").is_dir():
        return [root]
    return sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("room_"))


def fit_dataset(data_dir, out_dir, method, variant="noisy", cfg=None, workers=None) -> dict:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    cfg = cfg or PipelineConfig()
    dirs = room_dirs(data_dir)
    if not dirs:
        raise FileNotFoundError(f"no rooms under {data_dir}")
    jobs = [(str(d), str(out_dir), method, variant, cfg.to_dict()) for d in dirs]
    results = sorted(_map(_fit_job, jobs, workers), key=lambda r: r["id"])
    ok = [r["time_ms"] for r in results if r["ok"]]
    summary = {"method": method, "variant": variant, "results": results,
               "mean_time_ms": float(np.mean(ok)) if ok else None,
               "failed": [r["id"] for r in results if not r["ok"]]}
    io.write_json(Path(out_dir) / "fit_report.json", summary)
    return summary


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def overlay_image(pred: lm.ManhattanLayout | None, gt: lm.ManhattanLayout, background=None,
                  W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    """RGB panorama with ground-truth boundaries in green and predicted ones
    in red (yellow where they coincide)."""
    img = np.zeros((H, W, 3)) if background is None else np.repeat(
        0.5 * np.asarray(background, dtype=float).reshape(H, W, -1).mean(-1, keepdims=True), 3, -1)
    g = lm.render_boundary_map(gt, W, H).max(axis=0) > 0
    img[g, 1] = 1.0
    if pred is not None:
        p = lm.render_boundary_map(pred, W, H).max(axis=0) > 0
        img[p, 0] = 1.0
    return img


def _eval_job(args):
    gt_dir, pred_path, out_dir, W, H = args
    gt = io.load_layout(Path(gt_dir) / "layout.json")
    pred = io.load_layout(pred_path) if pred_path else None
    depth_path = Path(gt_dir) / "depth.png"
    depth = io.load_depth(depth_path) if depth_path.is_file() else lm.render_depth(
        lm.rescale_to_camera_height(gt), W, H)
    depth = metrics.mask_gt_depth(depth, gt)
    rec = {"name": Path(gt_dir).name, **metrics.evaluate_pair(pred, gt, depth, W, H)}
    if out_dir:
        io.save_image(Path(out_dir) / "overlays" / f"{rec['name']}.png", overlay_image(pred, gt, W=W, H=H))
    return rec


def eval_dirs(pred_dir, gt_dir, out_dir=None, workers=None, W=geo.DEFAULT_W, H=geo.DEFAULT_H):
    """Evaluate every ground-truth room. Rooms with no predicted layout file
    are listed under ``skipped``; rooms whose fit failed count as failures in
    the confusion matrix."""
    pred_dir = Path(pred_dir)
    gts = [d for d in room_dirs(gt_dir) if (d / "layout.json").is_file()]
    if not gts:
        raise FileNotFoundError(f"no ground-truth rooms under {gt_dir}")
    report = metrics.EvalReport()
    failed = set()
    fit_report = pred_dir / "fit_report.json"
    if fit_report.is_file():
        failed = set(io.read_json(fit_report).get("failed", []))
    jobs, skipped = [], []
    for d in gts:
        p = pred_dir / d.name / "layout.json"
        if p.is_file():
            jobs.append((str(d), str(p), str(out_dir) if out_dir else None, W, H))
        elif d.name in failed:
            jobs.append((str(d), None, str(out_dir) if out_dir else None, W, H))
        else:
            skipped.append(d.name)
    for rec in sorted(_map(_eval_job, jobs, workers), key=lambda r: r["name"]):
        report.records.append(rec)
        report.confusion.add(rec["n_true"], rec["n_pred"])
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(_report_json(report, skipped))
        (out / "report.csv").write_text(report.to_csv())
        (out / "confusion.txt").write_text(report.confusion.format() + "\n")
    return report, skipped


def _report_json(report, skipped):
    d = json.loads(report.to_json())
    d["skipped"] = skipped
    return json.dumps(d, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# align and augment
# ---------------------------------------------------------------------------

def align_file(pano_path, out_dir, segments_path=None):
    pano = io.load_image(pano_path)
    segs = al.load_segments(segments_path) if segments_path else al.detect_segments_naive(pano)
    frame = al.vote_vanishing_directions(segs)
    aligned, R = al.align_panorama(pano, frame)
    out = Path(out_dir)
    io.save_image(out / "aligned.png", aligned)
    io.write_json(out / "rotation.json", {"rotation": R.tolist(), "frame": frame.axes.tolist(),
                                          "votes": list(frame.votes), "segments": len(segs)})
    return aligned, R


AUGMENT_OPS = ("stretch", "rotate", "flip", "luminance")


def augment_files(pano_path, layout_path, out_dir, op, seed=0, kx=aug.DEFAULT_KX, kz=aug.DEFAULT_KZ,
                  shift=None, gamma=None):
    pano = io.load_image(pano_path)
    L = io.load_layout(layout_path)
    rng = np.random.default_rng(seed)
    if op == "stretch":
        fx, fz = aug.sample_stretch_factors(rng, kx, kz)
        pano, L = aug.stretch(pano, L, fx, fz)
        info = {"fx": fx, "fz": fz}
    elif op == "rotate":
        k = int(rng.integers(0, pano.shape[1])) if shift is None else int(shift)
        pano, L = aug.pano_rotate(pano, L, k)
        info = {"shift": k}
    elif op == "flip":
        pano, L = aug.pano_flip(pano, L)
        info = {}
    elif op == "luminance":
        g = float(np.exp(rng.uniform(-np.log(1.5), np.log(1.5)))) if gamma is None else float(gamma)
        pano = aug.luminance(pano, g)
        info = {"gamma": g}
    else:
        raise ValueError(f"unknown augmentation {op!r}; choose from {AUGMENT_OPS}")
    out = Path(out_dir)
    io.save_image(out / "pano.png", pano)
    io.save_layout(out / "layout.json", L, augmentation=op, **info)
    return pano, L, info
