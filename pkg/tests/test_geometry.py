import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panolayout import geometry as geo

unit = st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3).filter(lambda v: 1e-3 < np.linalg.norm(v))


def test_forward_axis_maps_to_center():
    assert geo.sphere_to_equirect(np.array([0.0, 0.0, 1.0])) == (0.0, 0.0)


def test_right_axis_maps_to_half_width():
    px, py = geo.sphere_to_equirect(np.array([1.0, 0.0, 0.0]))
    assert px == pytest.approx(math.atan2(1, 0) / math.pi) == pytest.approx(0.5)
    assert py == 0.0


def test_zenith_pole_convention():
    px, py = geo.sphere_to_equirect(np.array([0.0, 1.0, 0.0]))
    assert (px, py) == (0.0, 1.0)


def test_inverse_examples():
    assert np.allclose(geo.equirect_to_sphere(0.0, 0.0), [0, 0, 1])
    assert np.allclose(geo.equirect_to_sphere(0.5, 0.0), [1, 0, 0], atol=1e-15)


@given(st.floats(-1, 1), st.floats(-0.99, 0.99))
def test_round_trip_from_image(px, py):
    back = geo.sphere_to_equirect(geo.equirect_to_sphere(px, py))
    # px = +-1 is the same meridian
    dx = abs(back[0] - px)
    assert min(dx, abs(dx - 2)) < 1e-9
    assert abs(back[1] - py) < 1e-9


@given(unit)
def test_directions_are_unit_after_round_trip(v):
    s = geo.normalize(np.array(v))
    back = geo.equirect_to_sphere(*geo.sphere_to_equirect(s))
    assert abs(np.linalg.norm(back) - 1) < 1e-9


@given(st.floats(-0.5, 1023.5), st.floats(-0.5, 511.5))
def test_pixel_affine_bijection(u, v):
    px, py = geo.pixel_to_norm(u, v)
    assert px == pytest.approx(2 * (u + 0.5) / 1024 - 1)
    assert py == pytest.approx(1 - 2 * (v + 0.5) / 512)
    uu, vv = geo.norm_to_pixel(px, py)
    assert uu == pytest.approx(u, abs=1e-9) and vv == pytest.approx(v, abs=1e-9)


def test_focal_length_example():
    cfg = geo.PerspectiveConfig(fov=160.0, w=512)
    assert cfg.focal == pytest.approx(0.5 * 512 / math.tan(math.radians(80)))
    assert cfg.focal == pytest.approx(45.14, abs=0.01)


@pytest.mark.parametrize("kw", [dict(fov=180.0), dict(fov=0.0), dict(w=1), dict(direction="side")])
def test_perspective_config_rejects(kw):
    with pytest.raises(ValueError):
        geo.PerspectiveConfig(**kw)


def test_center_pixel_sees_zenith_and_nadir():
    for direction, sign in (("ceiling", 1.0), ("floor", -1.0)):
        cfg = geo.PerspectiveConfig(fov=160.0, w=512, direction=direction)
        px, py = geo.p2e_lookup(cfg, np.array([255.5, 255.5]))
        assert py == pytest.approx(sign)


def test_corner_pixel_polar_angle_matches_trigonometry():
    cfg = geo.PerspectiveConfig(fov=160.0, w=512)
    # pixel (0, 0) center sits 255.5 px from the optical axis along both image axes
    r = math.hypot(255.5, 255.5)
    expected_polar = math.atan2(r, cfg.focal)
    px, py = geo.p2e_lookup(cfg, np.array([0.0, 0.0]))
    polar = math.pi / 2 - py * math.pi / 2
    assert polar == pytest.approx(expected_polar, abs=1e-12)
    assert np.degrees(polar) < 90 and np.degrees(polar) > 80
    assert geo.p2e_lookup(cfg, np.array([0.0, 0.0])) == geo.p2e_lookup(cfg, np.array([0.0, 0.0]))


def test_e2p_constant_pano_is_constant():
    out = geo.e2p_project(np.full((64, 128), 0.3), geo.PerspectiveConfig(fov=120, w=40))
    assert out.shape == (40, 40)
    assert np.allclose(out, 0.3)


def test_e2p_color_channels_match_gray():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(32, 64, 3))
    cfg = geo.PerspectiveConfig(fov=100, w=24)
    rgb = geo.e2p_project(img, cfg)
    for c in range(3):
        assert np.allclose(rgb[..., c], geo.e2p_project(img[..., c], cfg))


def test_e2p_matches_scalar_bilinear_oracle():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(16, 32))
    cfg = geo.PerspectiveConfig(fov=150, w=9, direction="floor")
    out = geo.e2p_project(img, cfg)
    for r in range(9):
        for c in range(9):
            ray = np.array([c + 0.5 - 4.5, r + 0.5 - 4.5, cfg.focal])
            ray = cfg.rotation @ ray
            ray /= np.linalg.norm(ray)
            theta = math.atan2(ray[0], ray[2])
            phi = math.asin(ray[1])
            u = (theta / math.pi + 1) * 32 / 2 - 0.5
            v = min(max((1 - phi / (math.pi / 2)) * 16 / 2 - 0.5, 0), 15)
            u0, v0 = math.floor(u), math.floor(v)
            fu, fv = u - u0, v - v0
            val = 0.0
            for dv, wv in ((0, 1 - fv), (1, fv)):
                for du, wu in ((0, 1 - fu), (1, fu)):
                    val += wv * wu * img[min(v0 + dv, 15), (u0 + du) % 32]
            assert out[r, c] == pytest.approx(val, abs=1e-9)


def test_rotate_identity_is_exact():
    rng = np.random.default_rng(2)
    img = rng.uniform(size=(32, 64))
    assert np.array_equal(geo.rotate_panorama(img, np.eye(3)), img)


@pytest.mark.parametrize("k", [1, 5, -3, 17])
def test_yaw_by_whole_columns_is_a_roll(k):
    rng = np.random.default_rng(3)
    img = rng.uniform(size=(16, 64))
    # azimuth grows with u, so a yaw of 2 pi k / W shifts content by k columns
    out = geo.rotate_panorama(img, geo.rot_y(2 * np.pi * k / 64))
    assert np.allclose(out, np.roll(img, k, axis=1), atol=1e-12)


def test_rotate_rejects_non_rotation():
    with pytest.raises(ValueError):
        geo.rotate_panorama(np.zeros((8, 16)), np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        geo.rotate_panorama(np.zeros((8, 16)), 2 * np.eye(3))


def test_plan_perspective_round_trip():
    cfg = geo.PerspectiveConfig()
    pts = np.array([[1.0, 2.0], [-3.0, 0.5], [0.0, 0.0]])
    for d in ("ceiling", "floor"):
        c = geo.PerspectiveConfig(cfg.fov, cfg.w, d)
        back = geo.perspective_to_plan(geo.plan_to_perspective(pts, c, 1.6), c, 1.6)
        assert np.allclose(back, pts)


def test_plan_point_projects_through_its_ray():
    cfg = geo.PerspectiveConfig()
    xz = np.array([1.2, -0.7])
    pix = geo.plan_to_perspective(xz, cfg, 1.6)
    ray = geo.perspective_rays(cfg, pix)
    point = ray / ray[1] * 1.6
    assert np.allclose(point[[0, 2]], xz)


def test_geodesic_angle():
    assert geo.geodesic_angle(np.eye(3), geo.rot_y(0.3)) == pytest.approx(0.3)
    assert geo.geodesic_angle(geo.rot_x(0.2), geo.rot_x(0.2)) == pytest.approx(0.0, abs=1e-7)
