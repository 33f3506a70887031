import numpy as np
import pytest

from panolayout import fit_equirect as fe
from panolayout import layout as lm
from panolayout import metrics, synth
from panolayout.errors import TooFewCorners
from support import room


@pytest.fixture(scope="module")
def clean():
    L = room(21, 6)
    m_E, m_C = synth.synth_equirect_maps(L)
    return L, m_E, m_C


def test_weights_and_params_validate():
    with pytest.raises(ValueError):
        fe.ScoreWeights(0, 0, 0)
    with pytest.raises(ValueError):
        fe.ScoreWeights(-1, 1, 1)
    with pytest.raises(ValueError):
        fe.FitParams(step=0)
    with pytest.raises(ValueError):
        fe.FitParams(patience=-1)


def test_score_terms_at_truth(clean):
    # the corner term sees unit peaks; boundary ridges of a 1-px curve blurred
    # with a wide Gaussian peak above their straight runs, so after peak
    # normalisation the boundary terms sit below one
    L, m_E, m_C = clean
    junc = fe.score_layout(L, m_C, m_E, fe.ScoreWeights(1, 0, 0))
    ceil = fe.score_layout(L, m_C, m_E, fe.ScoreWeights(0, 1, 0))
    floor = fe.score_layout(L, m_C, m_E, fe.ScoreWeights(0, 0, 1))
    assert junc == pytest.approx(1.0, abs=0.03)
    assert 0.75 < ceil <= 1.0 and 0.75 < floor <= 1.0
    assert fe.score_layout(L, m_C, m_E) == pytest.approx(junc + ceil + floor, rel=1e-12)
    assert fe.score_layout(L, m_C, m_E, fe.ScoreWeights(2, 0, 0)) == pytest.approx(2 * junc, rel=1e-12)


def test_score_on_empty_maps_is_zero(clean):
    L, m_E, m_C = clean
    assert fe.score_layout(L, np.zeros_like(m_C), np.zeros_like(m_E)) == 0.0


def test_score_drops_away_from_truth(clean):
    L, m_E, m_C = clean
    moved = lm.ManhattanLayout(L.plan * 1.3, L.cam_to_floor, L.cam_to_ceiling, L.yaw)
    assert fe.score_layout(moved, m_C, m_E) < fe.score_layout(L, m_C, m_E) - 0.5


def test_gradient_orders_agree(clean):
    L, m_E, m_C = clean
    start = lm.ManhattanLayout(L.plan * 1.05, L.cam_to_floor, L.cam_to_ceiling, L.yaw)
    g2 = fe.finite_difference_gradient(start, m_C, m_E, order=2)
    g4 = fe.finite_difference_gradient(start, m_C, m_E, order=4)
    assert np.linalg.norm(g2 - g4) <= 0.05 * np.linalg.norm(g4)
    with pytest.raises(ValueError):
        fe.finite_difference_gradient(start, m_C, m_E, order=3)


def test_refinement_history_never_decreases(clean):
    L, m_E, m_C = clean
    start = lm.ManhattanLayout(L.plan * 1.05, L.cam_to_floor, L.cam_to_ceiling, L.yaw)
    hist = []
    out = fe.refine_layout(start, m_C, m_E, p=fe.FitParams(max_iter=20), history=hist)
    assert len(hist) == 21
    assert np.all(np.diff(hist) >= 0)
    assert out.is_valid()
    assert fe.score_layout(out, m_C, m_E) >= fe.score_layout(start, m_C, m_E)


def test_corner_candidates_from_clean_map(clean):
    L, _, m_C = clean
    cand = fe.extract_corner_candidates(m_C)
    assert len(cand) == 6
    truth = lm.project_corners(L).sorted()
    assert metrics.corner_error(cand, truth) < 0.1


def test_empty_or_sparse_corner_maps_raise():
    with pytest.raises(TooFewCorners):
        fe.extract_corner_candidates(np.zeros((512, 1024)))
    m = np.zeros((512, 1024))
    for c in (100, 400, 700):
        m[150, c] = m[360, c] = 1.0
    with pytest.raises(TooFewCorners):
        fe.extract_corner_candidates(lm.smooth_map(m))


def test_close_peaks_merge_under_min_distance():
    m = np.zeros((512, 1024))
    for c in (100, 110, 400, 700, 900):
        m[150, c] = m[360, c] = 1.0
    cand = fe.extract_corner_candidates(lm.smooth_map(m), min_distance=20)
    assert len(cand) == 4


def test_cuboid_initialisation_is_close(cuboid):
    m_E, m_C = synth.synth_equirect_maps(cuboid)
    L0 = fe.init_layout(fe.extract_corner_candidates(m_C), m_E)
    assert L0.n_corners == 4
    assert metrics.iou3d(L0, cuboid) > 98.0


def test_full_fit_on_clean_cuboid(cuboid):
    m_E, m_C = synth.synth_equirect_maps(cuboid)
    L = fe.fit(m_E, m_C)
    assert L.n_corners == 4 and metrics.iou3d(L, cuboid) > 95.0
