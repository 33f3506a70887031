"""Generate one synthetic room, fit it with all three fitters and compare.

Run with ``python3 demos/fit_three_ways.py [seed] [corners]``.
"""
import sys
import time

from panolayout import fit_ceiling, fit_columns, fit_equirect, metrics, synth

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7
corners = int(sys.argv[2]) if len(sys.argv) > 2 else 6

room = synth.sample_layout(seed, corners)
noise = synth.NoiseSpec(blur_sigma=2.0, additive_sigma=0.05, peak_jitter=2.0, dropout_prob=0.1, rng_seed=seed)
print(f"room with {room.n_corners} corners, height {room.height:.2f} m, camera {room.cam_to_floor:.2f} m above the floor")

# each fitter consumes a different prediction format
m_E, m_C = synth.synth_equirect_maps(room, noise)
M_FC, M_FP = synth.synth_ceiling_maps(room, noise)
cols = synth.synth_columns(room, noise)
H = fit_ceiling.height_in_ceiling_units(room)

fitters = {
    "equirect": lambda: fit_equirect.fit(m_E, m_C),
    "ceiling": lambda: fit_ceiling.fit(M_FC, M_FP, H),
    "columns": lambda: fit_columns.fit(cols),
}
for name, run in fitters.items():
    t = time.perf_counter()
    fitted = run()
    ms = 1000 * (time.perf_counter() - t)
    rec = metrics.evaluate_pair(fitted, room)
    print(f"{name:>9}: {fitted.n_corners:2d} corners  3D IoU {rec['iou3d']:6.2f}  "
          f"2D IoU {rec['iou2d']:6.2f}  depth rmse {rec['rmse']:.3f}  {ms:7.1f} ms")
