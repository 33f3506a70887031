"""File formats: probability maps and panoramas as 16-bit PNG, depth as
16-bit PNG in millimeters, layouts and column predictions as JSON."""
from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np

from . import layout as lm
from .synth import ColumnPrediction

_U16 = 65535.0


def _imwrite(path, img):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), img):
        raise OSError(f"could not write {path}")


def _imread(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such image {path}")
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FileNotFoundError(f"could not read image {path}")
    return img


def save_map(path, m):
    """Save a ``[0, 1]`` map as a 16-bit PNG. ``(C, H, W)`` arrays with three
    channels become a colour PNG with channel order preserved on reload."""
    m = np.clip(np.asarray(m, dtype=float), 0.0, 1.0)
    q = np.round(m * _U16).astype(np.uint16)
    if q.ndim == 3:
        if q.shape[0] != 3:
            raise ValueError("multi-channel maps must have 3 channels")
        q = np.ascontiguousarray(np.moveaxis(q, 0, -1)[..., ::-1])
    _imwrite(path, q)


def load_map(path, channels_first=True):
    img = _imread(path)
    scale = _U16 if img.dtype == np.uint16 else 255.0
    m = img.astype(float) / scale
    if m.ndim == 3:
        m = m[..., ::-1]
        if channels_first:
            m = np.moveaxis(m, -1, 0)
    return np.ascontiguousarray(m)


def save_image(path, img):
    """Save an ``(H, W)`` or ``(H, W, 3)`` RGB image in ``[0, 1]`` as 16-bit PNG."""
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    q = np.round(img * _U16).astype(np.uint16)
    if q.ndim == 3:
        q = np.ascontiguousarray(q[..., ::-1])
    _imwrite(path, q)


def load_image(path):
    """RGB (or gray) image in ``[0, 1]`` from an 8- or 16-bit file."""
    return load_map(path, channels_first=False)


def save_depth(path, depth: lm.DepthMap):
    """Depth in millimeters as a 16-bit PNG; invalid pixels are stored as 0."""
    mm = np.where(depth.valid, np.round(depth.depth * 1000.0), 0)
    if mm.max(initial=0) > 65535:
        raise ValueError("depth exceeds the 16-bit millimeter range")
    _imwrite(path, mm.astype(np.uint16))


def load_depth(path) -> lm.DepthMap:
    mm = _imread(path)
    if mm.dtype != np.uint16 or mm.ndim != 2:
        raise ValueError(f"{path} is not a single-channel 16-bit depth image")
    d = mm.astype(float) / 1000.0
    return lm.DepthMap(d, mm > 0)


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


def read_json(path):
    return json.loads(Path(path).read_text())


def save_layout(path, layout: lm.ManhattanLayout, **extra):
    write_json(path, {**layout.to_dict(), **extra})


def load_layout(path) -> lm.ManhattanLayout:
    return lm.ManhattanLayout.from_dict(read_json(path))


def save_columns(path, cols: ColumnPrediction):
    write_json(path, cols.to_dict())


def load_columns(path) -> ColumnPrediction:
    return ColumnPrediction.from_dict(read_json(path))
