"""Manhattan room layout recovery from 360-degree panorama predictions.

Three post-processors turn network-style outputs into rectilinear layouts:
``fit_equirect`` (corner/boundary probability maps), ``fit_ceiling``
(floor-ceiling and floor-plan maps) and ``fit_columns`` (per-column boundary
rows and corner probabilities). ``synth`` generates rooms and noisy
predictions, ``metrics`` scores layouts and ``alignment`` rotates panoramas
upright.
"""
from .errors import PanoLayoutError
from .layout import ManhattanLayout

__all__ = ["ManhattanLayout", "PanoLayoutError"]
__version__ = "0.1.0"
