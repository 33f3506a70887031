"""Small polygon toolkit: areas, point containment, rasterization and the
rectilinear checks used by the layout invariants."""
from __future__ import annotations

import functools

import numpy as np


def signed_area(poly) -> float:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def area(poly) -> float:
    return abs(signed_area(poly))


def contains(poly, pts):
    """Even-odd containment test for points ``(..., 2)``."""
    poly = np.asarray(poly, dtype=float)
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    px = pts[..., 0].reshape(-1, 1)
    py = pts[..., 1].reshape(-1, 1)
    x0, y0 = poly[:, 0], poly[:, 1]
    x1 = np.concatenate([x0[1:], x0[:1]])
    y1 = np.concatenate([y0[1:], y0[:1]])
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xcross)
    return (np.count_nonzero(hits, axis=1) % 2 == 1).reshape(shape)


def rasterize(poly_px, height: int, width: int):
    """Binary mask of pixels whose centers (integer coordinates) lie inside
    ``poly_px`` given as (column, row) vertices."""
    poly_px = np.asarray(poly_px, dtype=float)
    mask = np.zeros((height, width), dtype=bool)
    lo = np.maximum(np.floor(poly_px.min(axis=0)).astype(int), 0)
    hi = np.minimum(np.ceil(poly_px.max(axis=0)).astype(int), [width - 1, height - 1])
    if np.any(hi < lo):
        return mask
    rows, cols = np.mgrid[lo[1]:hi[1] + 1, lo[0]:hi[0] + 1]
    inside = contains(poly_px, np.stack([cols, rows], axis=-1).astype(float))
    mask[lo[1]:hi[1] + 1, lo[0]:hi[0] + 1] = inside
    return mask


def _orient(p, q, r):
    return np.sign((q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1])
                   - (q[..., 1] - p[..., 1]) * (r[..., 0] - p[..., 0]))


def _on_segment(p, q, r):
    return ((np.minimum(p[..., 0], q[..., 0]) <= r[..., 0]) & (r[..., 0] <= np.maximum(p[..., 0], q[..., 0]))
            & (np.minimum(p[..., 1], q[..., 1]) <= r[..., 1]) & (r[..., 1] <= np.maximum(p[..., 1], q[..., 1])))


def segments_intersect(a, b, c, d):
    """Closed-segment intersection test, broadcasting over leading axes."""
    o1, o2, o3, o4 = _orient(a, b, c), _orient(a, b, d), _orient(c, d, a), _orient(c, d, b)
    hit = (o1 != o2) & (o3 != o4)
    hit |= (o1 == 0) & _on_segment(a, b, c)
    hit |= (o2 == 0) & _on_segment(a, b, d)
    hit |= (o3 == 0) & _on_segment(c, d, a)
    hit |= (o4 == 0) & _on_segment(c, d, b)
    return hit


def is_simple(poly) -> bool:
    """True when no two non-adjacent edges touch and no edge is degenerate."""
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 3:
        return False
    q = np.roll(p, -1, axis=0)
    if np.any(np.all(np.isclose(p, q), axis=1)):
        return False
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    return not bool(np.any(segments_intersect(p[i], q[i], p[j], q[j])))


@functools.lru_cache(maxsize=64)
def _nonadjacent_pairs(n: int):
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    return i[keep], j[keep]


def axis_aligned_is_simple(poly) -> bool:
    """Fast :func:`is_simple` for polygons whose edges are all axis-aligned:
    such segments meet exactly when their bounding boxes do."""
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 4:
        return False
    q = np.concatenate([p[1:], p[:1]])
    lo, hi = np.minimum(p, q), np.maximum(p, q)
    if np.any(np.all(hi - lo == 0, axis=1)):
        return False
    i, j = _nonadjacent_pairs(n)
    hit = np.all(lo[i] <= hi[j], axis=1) & np.all(lo[j] <= hi[i], axis=1)
    return not bool(hit.any())


def rectilinear_problems(poly, tol=1e-9):
    """List of reasons ``poly`` is not a closed rectilinear polygon with
    alternating edge axes; empty when it is one."""
    p = np.asarray(poly, dtype=float)
    n = len(p)
    problems = []
    if p.ndim != 2 or p.shape[1] != 2:
        return ["plan must be an (n, 2) array"]
    if n < 4 or n % 2:
        problems.append(f"corner count must be even and >= 4, got {n}")
        return problems
    d = np.roll(p, -1, axis=0) - p
    horiz = np.abs(d[:, 1]) <= tol  # z fixed, runs along x
    vert = np.abs(d[:, 0]) <= tol
    if np.any(horiz & vert):
        problems.append("zero-length edge")
    if np.any(~horiz & ~vert):
        problems.append("edge not axis-parallel")
    if not problems and np.any(horiz == np.roll(horiz, -1)):
        problems.append("edges do not alternate between axes")
    if not problems and not is_simple(p):
        problems.append("polygon self-intersects")
    return problems


def remove_collinear(poly, tol=1e-9):
    """Drop vertices lying on the straight line through their neighbours."""
    p = [np.asarray(v, dtype=float) for v in poly]
    changed = True
    while changed and len(p) > 3:
        changed = False
        for i in range(len(p)):
            a, b, c = p[i - 1], p[i], p[(i + 1) % len(p)]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if abs(cross) <= tol or np.allclose(a, b, atol=tol):
                del p[i]
                changed = True
                break
    return np.array(p)


def cells_to_polygon(occ, xs, ys):
    """Outline of the union of occupied grid cells.

    ``occ[j, i]`` marks the cell ``[xs[i], xs[i+1]] x [ys[j], ys[j+1]]``. The
    union must be 4-connected without holes; the outline is returned with
    positive signed area and collinear vertices removed.
    """
    occ = np.asarray(occ, dtype=bool)
    ny, nx = occ.shape
    pad = np.zeros((ny + 2, nx + 2), dtype=bool)
    pad[1:-1, 1:-1] = occ
    # directed boundary edges in grid-index space, interior on the left
    nxt = {}
    for j in range(ny):
        for i in range(nx):
            if not occ[j, i]:
                continue
            J, I = j + 1, i + 1
            if not pad[J - 1, I]:  # bottom side, walk +x
                nxt.setdefault((i, j), []).append((i + 1, j))
            if not pad[J, I + 1]:  # right side, walk +y
                nxt.setdefault((i + 1, j), []).append((i + 1, j + 1))
            if not pad[J + 1, I]:  # top side, walk -x
                nxt.setdefault((i + 1, j + 1), []).append((i, j + 1))
            if not pad[J, I - 1]:  # left side, walk -y
                nxt.setdefault((i, j + 1), []).append((i, j))
    if not nxt:
        raise ValueError("no occupied cells")
    n_edges = sum(len(v) for v in nxt.values())
    start = min(nxt)
    loop = [start]
    cur = start
    prev_dir = None
    used = 0
    while True:
        options = nxt[cur]
        if len(options) == 1:
            nb = options.pop()
        else:
            # pinch vertex: keep turning left to stay on one component
            def turn(o):
                d = (o[0] - cur[0], o[1] - cur[1])
                return prev_dir[0] * d[1] - prev_dir[1] * d[0]

            options.sort(key=turn)
            nb = options.pop()
        used += 1
        prev_dir = (nb[0] - cur[0], nb[1] - cur[1])
        cur = nb
        if cur == start:
            break
        loop.append(cur)
    if used != n_edges:
        raise ValueError("cell union has several boundary loops")
    pts = np.array([[xs[i], ys[j]] for i, j in loop], dtype=float)
    pts = remove_collinear(pts)
    if signed_area(pts) < 0:
        pts = pts[::-1]
    return pts
