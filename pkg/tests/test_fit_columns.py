import numpy as np
import pytest

from panolayout import fit_columns as fco
from panolayout import geometry as geo
from panolayout import layout as lm
from panolayout import metrics, synth
from panolayout.errors import InfeasibleLayout, InvalidLayout, TooFewCorners
from support import room


def _symmetric(W=1024, H=512, offset=60.0):
    mid = (H - 1) / 2
    return synth.ColumnPrediction(np.full(W, mid - offset), np.full(W, mid + offset), np.zeros(W))


def test_symmetric_boundaries_give_twice_camera_height():
    assert fco.estimate_height(_symmetric()) == pytest.approx(3.2)


def test_no_usable_column_raises():
    W = 64
    cols = synth.ColumnPrediction(np.full(W, 400.0), np.full(W, 450.0), np.zeros(W))
    with pytest.raises(InvalidLayout):
        fco.estimate_height(cols, H=512)


def test_circular_peaks_wrap_and_separation():
    s = np.zeros(100)
    s[[0, 5, 50, 99]] = [1.0, 0.9, 0.8, 0.95]
    assert fco.circular_peaks(s, 0.5, 10).tolist() == [0, 50]


def test_collinear_points_give_exact_wall():
    z = 2.5
    pts = np.stack([np.linspace(-1, 1, 40), np.full(40, z)], axis=-1)
    (wall,) = fco.fit_walls([pts])
    assert wall.axis == 1 and wall.value == pytest.approx(z)


def test_outliers_do_not_move_wall():
    rng = np.random.default_rng(0)
    pts = np.stack([np.linspace(-2, 2, 60), 3.0 + rng.normal(0, 0.01, 60)], axis=-1)
    pts[::10, 1] += rng.uniform(1.0, 2.0, 6)
    (wall,) = fco.fit_walls([pts], split=False)
    assert wall.value == pytest.approx(3.0, abs=0.01)


def test_project_requires_corners_when_asked():
    cols = synth.synth_columns(room(41, 4), synth.NoiseSpec(dropout_prob=1.0))
    with pytest.raises(TooFewCorners):
        fco.project_boundary_points(cols, 3.0, min_corners=4)


def test_single_wall_cannot_close_a_room():
    w = fco.Wall(1, 2.0, np.array([-2.0, 2.0]), np.array([1.0, 2.0]), 10)
    assert w.direction.tolist() == [1.0, 0.0]
    with pytest.raises(InfeasibleLayout):
        fco.hallucinate_occluded([w], 3.0)


@pytest.mark.parametrize("seed, n", [(42, 4), (43, 6), (44, 10)])
def test_clean_fit_recovers_room(seed, n):
    L = room(seed, n)
    out = fco.fit(synth.synth_columns(L))
    assert out.n_corners == n
    assert out.cam_to_floor == pytest.approx(lm.CAMERA_HEIGHT)
    assert metrics.iou3d(out, L) > 99.0
