"""Thing windows and the per-image syntax matrix.

A "thing" is any object, part or stuff region, kept deliberately nameless.
Each thing is reduced to the immediately observable properties of its
bounding-box window: normalized center position, normalized area, aspect
ratio, and dominant color. The ensemble of all windows of one image, stacked
row-wise, is the image's syntax matrix.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .colors import N_COLORS, dominant_color
from .errors import ConfigError, GeometryError

log = logging.getLogger(__name__)

# Canonical property order. Histogram indexing, feature columns and model
# files all rely on this exact order.
PROPERTY_NAMES = ("horizontal", "vertical", "size", "ratio", "color")
CONTINUOUS_PROPERTIES = PROPERTY_NAMES[:4]

# Color enters numeric feature space as index/10 so its scale is comparable
# to the other four unit-interval properties.
COLOR_FEATURE_SCALE = 10.0

_CLIP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ImageMeta:
    """Identity and pixel dimensions of one image."""

    image_id: str
    width: int
    height: int
    scene_label: Optional[str] = None

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image dimensions must be >= 1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class RawBox:
    """An axis-aligned pixel-space box with its top-left corner at (x_min, y_min)."""

    x_min: float
    y_min: float
    box_width: float
    box_height: float
    color_label: Optional[int] = None
    source: Optional[str] = None

    def __post_init__(self):
        if self.box_width <= 0 or self.box_height <= 0:
            raise GeometryError(
                f"box dimensions must be positive, got {self.box_width}x{self.box_height}")
        if self.x_min < 0 or self.y_min < 0:
            raise GeometryError(f"box corner must be non-negative, got ({self.x_min}, {self.y_min})")
        if self.color_label is not None and not 0 <= self.color_label < N_COLORS:
            raise ValueError(f"color_label out of range 0..{N_COLORS - 1}: {self.color_label}")

    def fits_in(self, meta: ImageMeta, tolerance: float = _CLIP_TOLERANCE) -> bool:
        return (self.x_min + self.box_width <= meta.width + tolerance
                and self.y_min + self.box_height <= meta.height + tolerance)


@dataclass(frozen=True)
class ThingWindow:
    """One thing's property vector: all continuous fields live in the unit interval."""

    x: float
    y: float
    size: float
    ratio: float
    color: Optional[int] = None

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0 and 0.0 <= self.y <= 1.0):
            raise ValueError(f"window center out of [0,1]: ({self.x}, {self.y})")
        if not 0.0 < self.size <= 1.0:
            raise ValueError(f"window size out of (0,1]: {self.size}")
        if not 0.0 <= self.ratio < 1.0:
            raise ValueError(f"window ratio out of [0,1): {self.ratio}")
        if self.color is not None and not 0 <= self.color < N_COLORS:
            raise ValueError(f"window color out of range 0..{N_COLORS - 1}: {self.color}")

    def continuous(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.size, self.ratio)


@dataclass(frozen=True)
class SyntaxMatrix:
    """All thing windows of one image, one row per window, in input order."""

    image_id: str
    rows: tuple[ThingWindow, ...]

    @property
    def n(self) -> int:
        return len(self.rows)

    def features(self, mask: "PropertyMask | None" = None) -> np.ndarray:
        """Numeric (n, d) feature matrix with columns in canonical property order.

        Color is scaled to index/10. ``mask`` selects a subset of columns;
        windows must carry colors whenever the mask includes color.
        """
        mask = FULL_MASK if mask is None else mask
        cols = []
        for name in PROPERTY_NAMES:
            if name not in mask.names:
                continue
            cols.append(property_values(self, name))
        if not cols:
            return np.empty((self.n, 0))
        return np.stack(cols, axis=1) if self.n else np.empty((0, len(cols)))


def property_values(syntax: SyntaxMatrix, name: str) -> np.ndarray:
    """Extract one property column; color is returned as index/10."""
    if name == "horizontal":
        return np.array([w.x for w in syntax.rows])
    if name == "vertical":
        return np.array([w.y for w in syntax.rows])
    if name == "size":
        return np.array([w.size for w in syntax.rows])
    if name == "ratio":
        return np.array([w.ratio for w in syntax.rows])
    if name == "color":
        for w in syntax.rows:
            if w.color is None:
                raise ValueError(f"window in {syntax.image_id} has no color")
        return np.array([w.color / COLOR_FEATURE_SCALE for w in syntax.rows])
    raise ValueError(f"unknown property {name!r}")


@dataclass(frozen=True)
class PropertyMask:
    """Subset of the five window properties a pipeline stage operates on."""

    names: frozenset[str]

    def __post_init__(self):
        unknown = self.names - set(PROPERTY_NAMES)
        if unknown:
            raise ValueError(f"unknown properties: {sorted(unknown)}")
        if not self.names:
            raise ValueError("property mask must not be empty")

    @property
    def continuous(self) -> tuple[str, ...]:
        return tuple(n for n in CONTINUOUS_PROPERTIES if n in self.names)

    @property
    def has_color(self) -> bool:
        return "color" in self.names

    @property
    def ordered(self) -> tuple[str, ...]:
        return tuple(n for n in PROPERTY_NAMES if n in self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def __iter__(self):
        return iter(self.ordered)


FULL_MASK = PropertyMask(frozenset(PROPERTY_NAMES))


def mask_from_names(names: Iterable[str]) -> PropertyMask:
    return PropertyMask(frozenset(names))


def aspect_ratio(box_width: float, box_height: float) -> float:
    """Map width/height to a bounded shape value in [0, 1).

    Square boxes map to exactly 0.5; tall boxes fall below it, broad boxes
    above it, and the mapping is monotone in width/height. Swapping the
    arguments reflects the value around 0.5 (the two results sum to 1).
    """
    if box_width <= 0 or box_height <= 0:
        raise GeometryError(
            f"aspect_ratio requires positive dimensions, got {box_width}x{box_height}")
    if box_width <= box_height:
        return 0.5 * (box_width / box_height)
    return 1.0 - 0.5 * (box_height / box_width)


def clip_box(box: RawBox, meta: ImageMeta) -> Optional[RawBox]:
    """Clip a box to the image bounds; returns None if nothing remains."""
    x0 = min(max(box.x_min, 0.0), float(meta.width))
    y0 = min(max(box.y_min, 0.0), float(meta.height))
    x1 = min(box.x_min + box.box_width, float(meta.width))
    y1 = min(box.y_min + box.box_height, float(meta.height))
    if x1 - x0 <= _CLIP_TOLERANCE or y1 - y0 <= _CLIP_TOLERANCE:
        return None
    if (x0, y0, x1 - x0, y1 - y0) == (box.x_min, box.y_min, box.box_width, box.box_height):
        return box
    return replace(box, x_min=x0, y_min=y0, box_width=x1 - x0, box_height=y1 - y0)


def normalize_box(box: RawBox, meta: ImageMeta) -> ThingWindow:
    """Turn a pixel-space box into a resolution-independent ThingWindow.

    Center coordinates divide by the image dimensions and area by the image
    area, so jointly rescaling image and box leaves the result unchanged.
    The window's color is left unset.
    """
    if not box.fits_in(meta):
        raise GeometryError(
            f"box ({box.x_min}, {box.y_min}, {box.box_width}, {box.box_height}) "
            f"exceeds image {meta.width}x{meta.height}")
    x = (box.x_min + box.box_width / 2.0) / meta.width
    y = (box.y_min + box.box_height / 2.0) / meta.height
    size = (box.box_width * box.box_height) / (meta.width * meta.height)
    return ThingWindow(
        x=min(x, 1.0),
        y=min(y, 1.0),
        size=min(size, 1.0),
        ratio=aspect_ratio(box.box_width, box.box_height),
    )


def _pixel_region(pixels: np.ndarray, box: RawBox, meta: ImageMeta) -> np.ndarray:
    """Slice the pixel rows/cols covered by a box, at least 1x1."""
    h, w = pixels.shape[0], pixels.shape[1]
    # Pixel array may not match meta exactly (e.g. thumbnails); map through
    # the normalized coordinates.
    x0 = int(math.floor(box.x_min / meta.width * w))
    y0 = int(math.floor(box.y_min / meta.height * h))
    x1 = int(math.ceil((box.x_min + box.box_width) / meta.width * w))
    y1 = int(math.ceil((box.y_min + box.box_height) / meta.height * h))
    x0 = min(max(x0, 0), w - 1)
    y0 = min(max(y0, 0), h - 1)
    x1 = min(max(x1, x0 + 1), w)
    y1 = min(max(y1, y0 + 1), h)
    return pixels[y0:y1, x0:x1]


def build_syntax(boxes: Sequence[RawBox], meta: ImageMeta,
                 pixels: Optional[np.ndarray] = None) -> SyntaxMatrix:
    """Build the syntax matrix of one image: one window row per box, in order.

    Boxes partially outside the image are clipped first; boxes that clip to
    zero area are dropped with a warning. Colors come from each box's label
    when present, otherwise from the dominant color of its pixel region.
    """
    rows = []
    for i, box in enumerate(boxes):
        clipped = clip_box(box, meta)
        if clipped is None:
            log.warning("image %s: box %d clips to zero area, dropped", meta.image_id, i)
            continue
        if clipped.color_label is not None:
            color = clipped.color_label
        elif pixels is not None:
            color = dominant_color(_pixel_region(pixels, clipped, meta))
        else:
            raise ConfigError(
                f"image {meta.image_id}: box {i} has no color label and no pixels were supplied")
        window = normalize_box(clipped, meta)
        rows.append(replace(window, color=color))
    return SyntaxMatrix(image_id=meta.image_id, rows=tuple(rows))
