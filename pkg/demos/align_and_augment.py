"""Tilt a wireframe panorama, recover the Manhattan frame, then apply the
layout-consistent augmentations and check the boundaries still line up.

Writes PNGs to ``demo_out/`` in the current directory.
"""
from pathlib import Path

import numpy as np

from panolayout import alignment, augment, geometry as geo, io, layout as lm, synth

out = Path("demo_out")
room = synth.sample_layout(3, 8)
wire = lm.render_boundary_map(room).max(axis=0)

R = geo.rot_y(0.4) @ geo.rot_x(np.deg2rad(9.0))
tilted = geo.rotate_panorama(wire, R)
frame = alignment.vote_vanishing_directions(alignment.detect_segments_naive(tilted))
aligned, applied = alignment.align_panorama(tilted, frame)
err = min(np.rad2deg(geo.geodesic_angle(frame.rotation, R @ geo.rot_y(k * np.pi / 2))) for k in range(4))
print(f"frame votes {frame.votes}, rotation error {err:.3f} deg")
io.save_image(out / "tilted.png", tilted)
io.save_image(out / "aligned.png", aligned)

for name, (pano, lay) in {
    "stretch": augment.stretch(wire, room, 1.0, 1.6),
    "rotate": augment.pano_rotate(wire, room, 200),
    "flip": augment.pano_flip(wire, room),
}.items():
    rendered = lm.render_boundary_map(lay).max(axis=0)
    overlay = np.stack([pano, rendered, np.zeros_like(pano)], axis=-1)
    io.save_image(out / f"{name}.png", np.clip(overlay, 0, 1))
    print(f"{name:>8}: augmented panorama (red) vs layout render (green) -> {out / (name + '.png')}")
