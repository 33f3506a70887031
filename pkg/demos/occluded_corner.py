"""An L-shaped room whose concave corner is hidden from the camera.

The corner column is removed from the per-column corner probability; the
column fitter sees two parallel walls next to each other and inserts the
missing connecting wall.
"""
import numpy as np

from panolayout import fit_columns, layout as lm, metrics, synth

room = synth.sample_layout(601, 6)
cols = synth.synth_columns(room)

# find the reflex (concave) corner of the plan and drop its corner peak
plan = room.plan
prev, nxt = np.roll(plan, 1, axis=0), np.roll(plan, -1, axis=0)
turn = np.cross(plan - prev, nxt - plan)
k = int(np.argmin(turn))
column = lm.project_corners(room).columns[k]
u = np.arange(cols.W)
du = np.minimum(np.abs(u - column), cols.W - np.abs(u - column))
cols.corner_prob[du < 3 * synth.CORNER_PROB_SIGMA] = 0.0

print("corner columns found:", fit_columns.corner_columns(cols).tolist())
fitted = fit_columns.fit(cols)
print(f"fitted corners: {fitted.n_corners} (truth {room.n_corners})")
print(f"2D IoU: {metrics.iou2d(lm.rescale_to_camera_height(fitted).plan, lm.rescale_to_camera_height(room).plan):.2f}")
