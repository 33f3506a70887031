import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panolayout import fit_equirect
from panolayout import geometry as geo
from panolayout import layout as lm
from panolayout import polygon as pg
from panolayout.errors import InvalidLayout
from support import room


def square(half=2.0, hf=1.5, hc=1.5):
    return lm.ManhattanLayout([[-half, -half], [half, -half], [half, half], [-half, half]], hf, hc)


seeds = st.integers(0, 10_000)
counts = st.sampled_from([4, 6, 8, 10, 12])


# --- invariants ------------------------------------------------------------

@pytest.mark.parametrize("plan, why", [
    ([[-1, -1], [1, -1], [1, 1]], "odd"),
    ([[-1, -1], [1, -1], [1, 1], [-1, 1]][::-1], "clockwise"),
    ([[1, 1], [3, 1], [3, 3], [1, 3]], "origin outside"),
    ([[-1, -1], [1, -1], [2, 1], [-1, 1]], "not rectilinear"),
])
def test_invalid_layouts_are_rejected(plan, why):
    with pytest.raises(InvalidLayout):
        lm.ManhattanLayout(plan, 1.6, 1.0).validate()


def test_nonpositive_heights_rejected():
    with pytest.raises(InvalidLayout):
        lm.ManhattanLayout(square().plan, 0.0, 1.0).validate()


@given(seeds, counts)
def test_sampled_layouts_satisfy_invariants(seed, n):
    L = room(seed % 50, n)
    assert L.is_valid()
    assert L.n_corners == n
    d = np.roll(L.plan, -1, axis=0) - L.plan
    horiz = np.abs(d[:, 1]) < 1e-12
    assert np.all(horiz != np.roll(horiz, -1))


def test_json_round_trip():
    L = room(3, 8)
    assert np.array_equal(lm.ManhattanLayout.from_json(L.to_json()).plan, L.plan)


def test_corner_uv_json_form_converts():
    L = square(2.0, 1.6, 1.4)
    uv = lm.project_corners(L).uv.reshape(-1, 2).tolist()
    back = lm.ManhattanLayout.from_dict({"corners_uv": uv, "height": 3.0})
    assert back.cam_to_floor == pytest.approx(1.6)
    assert back.cam_to_ceiling == pytest.approx(1.4)
    assert np.allclose(np.sort(back.plan, axis=0), np.sort(L.plan, axis=0))


# --- projection of corners ---------------------------------------------------

def test_square_corners_symmetric_about_horizon():
    cs = lm.project_corners(square())
    assert len(np.unique(np.round(cs.columns, 9))) == 4
    mid = (geo.DEFAULT_H - 1) / 2
    assert np.allclose(cs.uv[:, 0, 1] - mid, -(cs.uv[:, 1, 1] - mid))


def test_forward_corner_column():
    # a corner straight ahead (theta = 0) lands on the center column boundary
    L = lm.ManhattanLayout([[-2, -2], [2, -2], [2, 2], [0, 2], [0, 3], [-2, 3]], 1.6, 1.0).validate()
    cs = lm.project_corners(L)
    for i in np.flatnonzero(L.plan[:, 0] == 0):
        assert cs.uv[i, 0, 0] == pytest.approx(geo.DEFAULT_W / 2 - 0.5)


@given(seeds, counts)
def test_ceiling_above_floor(seed, n):
    cs = lm.project_corners(room(seed % 50, n))
    assert np.all(cs.uv[:, 0, 1] < cs.uv[:, 1, 1])
    assert np.allclose(cs.uv[:, 0, 0], cs.uv[:, 1, 0])


def test_corner_projection_matches_closed_form():
    L = square(2.0, 1.6, 1.2)
    cs = lm.project_corners(L)
    for (x, z), pair in zip(L.plan, cs.uv):
        theta = math.atan2(x, z)
        r = math.hypot(x, z)
        u = (theta / math.pi + 1) * 512 - 0.5
        assert pair[0, 0] == pytest.approx(u)
        assert pair[0, 1] == pytest.approx((1 - math.atan2(1.2, r) / (math.pi / 2)) * 256 - 0.5)
        assert pair[1, 1] == pytest.approx((1 + math.atan2(1.6, r) / (math.pi / 2)) * 256 - 0.5)


# --- boundary and corner maps ----------------------------------------------

def test_cuboid_wall_channel_has_four_vertical_segments():
    m = lm.render_boundary_map(square())
    cols = np.flatnonzero(m[0].any(axis=0))
    assert len(cols) == 4
    for c in cols:
        rows = np.flatnonzero(m[0][:, c])
        assert np.all(np.diff(rows) == 1)


def test_mid_height_camera_mirrors_ceiling_and_floor():
    m = lm.render_boundary_map(square(2.0, 1.5, 1.5))
    assert np.array_equal(m[1], m[2][::-1])


def test_unsmoothed_binary_smoothed_peak_one():
    L = room(5, 6)
    raw = lm.render_boundary_map(L)
    assert set(np.unique(raw)) <= {0.0, 1.0}
    sm = lm.render_boundary_map(L, smooth=True)
    assert np.allclose(sm.max(axis=(1, 2)), 1.0)
    assert lm.render_corner_map(L, smooth=True).max() == pytest.approx(1.0)


def test_corner_map_peaks_at_projected_corners():
    L = square()
    m = lm.render_corner_map(L)
    assert m.sum() == 8
    peaks = np.argwhere(m > 0)[:, ::-1]
    uv = lm.project_corners(L).flat()
    for p in uv:
        assert np.min(np.abs(peaks - p).max(axis=1)) <= 0.5


def test_smoothed_corner_map_mass_is_eight_single_peaks():
    # unnormalized Gaussian mass: compare against one isolated peak
    L = square(2.0, 1.6, 1.2)
    single = np.zeros((512, 1024))
    single[256, 512] = 1.0
    one = lm.blur_wrap(single, lm.SMOOTH_SIGMA).sum()
    raw = lm.render_corner_map(L)
    eight = lm.blur_wrap(raw, lm.SMOOTH_SIGMA).sum()
    assert eight == pytest.approx(8 * one, rel=1e-6)


def test_peak_extraction_recovers_projected_columns_and_rows():
    L = room(7, 4)
    raw = lm.render_corner_map(L)
    cand = fit_equirect.extract_corner_candidates(raw, half_width=0)
    truth = lm.project_corners(L).sorted().uv
    assert len(cand) == len(truth)
    assert np.abs(cand.sorted().uv - truth).max() <= 0.5


# --- floor plan -------------------------------------------------------------

def test_centered_square_gives_centered_mask():
    mask, clipped = lm.render_floor_plan(square(2.0, 1.6, 1.6))
    assert not clipped
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    assert rows[0] + rows[-1] == 511 and cols[0] + cols[-1] == 511


def test_large_room_is_flagged_clipped():
    cfg = geo.PerspectiveConfig()
    half_extent = 0.5 * cfg.w / geo.perspective_scale(cfg, 1.0)  # meters at unit distance
    big = square(2.0 * half_extent, 1.6, 1.0)
    assert lm.render_floor_plan(big, cfg)[1]


def test_floor_plan_area_matches_polygon_area():
    cfg = geo.PerspectiveConfig()
    for seed, n in [(1, 4), (2, 6), (3, 8)]:
        L = room(seed, n)
        mask, _ = lm.render_floor_plan(L, cfg)
        k = geo.perspective_scale(cfg, L.cam_to_ceiling)
        assert mask.sum() == pytest.approx(pg.area(L.plan) * k * k, rel=0.01)


# --- semantics and depth ----------------------------------------------------

def test_semantics_poles_and_horizon():
    sem = lm.render_semantics(room(4, 8))
    assert np.all(sem[0] == lm.CEILING)
    assert np.all(sem[-1] == lm.FLOOR)
    assert np.all(sem[255:257] == lm.WALL)


def test_depth_examples():
    L = lm.ManhattanLayout([[-3, -3], [3, -3], [3, 2], [-3, 2]], 1.6, 1.2)
    d = lm.render_depth(L, 1024, 512)
    assert d.valid.all()
    # nadir row sees the floor almost straight down
    assert d.depth[-1].min() == pytest.approx(1.6 / math.cos(math.pi / 2 * (1 / 512)), rel=1e-6)
    # straight ahead on the horizon the wall at z = 2 is 2 m away (up to half a row of elevation)
    phi = math.pi / 2 * (1 / 512)
    assert d.depth[255, 511] == pytest.approx(2.0 / math.cos(phi) / math.cos(math.pi / 1024), rel=1e-9)


@given(st.floats(0.2, 5.0))
def test_depth_scales_linearly(k):
    L = room(6, 6)
    a = lm.render_depth(L, 256, 128).depth
    b = lm.render_depth(L.scaled(k), 256, 128).depth
    assert np.allclose(b, k * a)


def test_semantics_agree_with_depth_hit_planes():
    L = room(8, 10)
    d = lm.render_depth(L, 512, 256).depth
    sem = lm.render_semantics(L, 512, 256)
    dirs = geo.pixel_grid_directions(512, 256)
    y = dirs[..., 1] * d
    on_ceiling = np.isclose(y, L.cam_to_ceiling)
    on_floor = np.isclose(y, -L.cam_to_floor)
    assert np.all(on_ceiling[sem == lm.CEILING]) and np.all(on_floor[sem == lm.FLOOR])
    wall = sem == lm.WALL
    assert np.all((y[wall] <= L.cam_to_ceiling + 1e-9) & (y[wall] >= -L.cam_to_floor - 1e-9))


def test_planar_depth_mode():
    L = lm.ManhattanLayout([[-3, -3], [3, -3], [3, 2], [-3, 2]], 1.6, 1.2)
    d = lm.render_depth(L, 256, 128, mode="planar").depth
    assert d[-1, 0] == pytest.approx(1.6)
    assert d[0, 0] == pytest.approx(1.2)
    assert d[63, 127] == pytest.approx(2.0)
    with pytest.raises(ValueError):
        lm.render_depth(L, mode="bogus")


def test_rescale_to_camera_height():
    L = lm.ManhattanLayout(square().plan, 0.8, 1.0)
    R = lm.rescale_to_camera_height(L)
    assert R.cam_to_floor == pytest.approx(1.6)
    assert np.allclose(R.plan, 2 * L.plan) and R.cam_to_ceiling == pytest.approx(2.0)
    same = lm.ManhattanLayout(square().plan, 1.6, 1.0)
    assert np.array_equal(lm.rescale_to_camera_height(same).plan, same.plan)
