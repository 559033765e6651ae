"""Dominant-color naming over a fixed table of eleven basic colors.

Pixels are labeled with the nearest of eleven prototype colors by Euclidean
distance in CIELAB (sRGB, D65 white point). The prototypes are the common
sRGB values for the eleven basic color names; the table is fixed so that
color indices are stable across runs and model files.
"""
from __future__ import annotations

import numpy as np

from .errors import GeometryError

# Index order is alphabetical and must never change: persisted models and
# statement histograms encode colors by this index.
COLOR_NAMES = (
    "black", "blue", "brown", "grey", "green",
    "orange", "pink", "purple", "red", "white", "yellow",
)
N_COLORS = len(COLOR_NAMES)

_PROTOTYPES_RGB = np.array([
    (0, 0, 0),        # black
    (0, 0, 255),      # blue
    (139, 69, 19),    # brown
    (128, 128, 128),  # grey
    (0, 255, 0),      # green
    (255, 165, 0),    # orange
    (255, 192, 203),  # pink
    (128, 0, 128),    # purple
    (255, 0, 0),      # red
    (255, 255, 255),  # white
    (255, 255, 0),    # yellow
], dtype=np.float64)

# sRGB -> XYZ linear transform and D65 reference white.
_SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


def srgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert sRGB values in [0, 255] to CIELAB (D65).

    Accepts any array with a trailing axis of length 3 and returns an array
    of the same shape holding (L, a, b).
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing RGB axis of length 3, got shape {rgb.shape}")
    c = rgb / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ _SRGB_TO_XYZ.T / _WHITE_D65

    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    return lab


_PROTOTYPES_LAB = srgb_to_lab(_PROTOTYPES_RGB)


def color_index(name: str) -> int:
    """Return the fixed index of a color name (case-insensitive)."""
    try:
        return COLOR_NAMES.index(name.strip().lower())
    except ValueError:
        raise ValueError(f"unknown color name: {name!r}") from None


def pixel_color_indices(pixels: np.ndarray) -> np.ndarray:
    """Assign every pixel to its nearest prototype color in CIELAB.

    Ties go to the lowest index (argmin convention).
    """
    lab = srgb_to_lab(np.asarray(pixels).reshape(-1, 3))
    # (n_pixels, 11) squared distances; argmin picks the lowest index on ties.
    d2 = ((lab[:, None, :] - _PROTOTYPES_LAB[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def dominant_color(pixels: np.ndarray) -> int:
    """Return the modal prototype-color index of a rectangular RGB region.

    ``pixels`` is an (H, W, 3) or (N, 3) array of sRGB values in [0, 255].
    Ties between equally frequent colors break toward the lowest index.
    """
    pixels = np.asarray(pixels)
    if pixels.size == 0:
        raise GeometryError("dominant_color: empty pixel region")
    assigned = pixel_color_indices(pixels)
    counts = np.bincount(assigned, minlength=N_COLORS)
    return int(np.argmax(counts))
