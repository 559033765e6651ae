"""Dataset diagnostics: property divergences and annotation-noise stress tests."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .colors import N_COLORS
from .retrieval import smooth_normalize
from .windows import (
    COLOR_FEATURE_SCALE,
    CONTINUOUS_PROPERTIES,
    ImageMeta,
    PropertyMask,
    RawBox,
    SyntaxMatrix,
    mask_from_names,
    property_values,
)

NOISE_REFERENCE_EDGE = 320
NOISE_FIELDS = ("x", "y", "width", "height")


@dataclass(frozen=True, eq=False)
class PropertyDistribution:
    """Smoothed marginal of one window property, over uniform value bins."""

    property_name: str
    probs: np.ndarray

    def __post_init__(self):
        if np.any(self.probs <= 0):
            raise ValueError("distribution must be strictly positive; smooth it first")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("distribution must sum to 1")


def property_distribution(syntaxes: Iterable[SyntaxMatrix], property_name: str,
                          n_bins: int = 10, alpha: float = 1.0) -> PropertyDistribution:
    """Pool one property across images into a smoothed histogram.

    Continuous properties are binned uniformly on [0, 1] (last bin closed);
    color uses its eleven category bins directly.
    """
    values = np.concatenate([property_values(s, property_name) for s in syntaxes])
    if property_name == "color":
        # property_values scales color to index / COLOR_FEATURE_SCALE; undo that.
        indices = np.rint(values * COLOR_FEATURE_SCALE).astype(int)
        counts = np.bincount(indices, minlength=N_COLORS).astype(np.float64)
    else:
        counts, _ = np.histogram(values, bins=n_bins, range=(0.0, 1.0))
    return PropertyDistribution(property_name=property_name,
                                probs=smooth_normalize(counts, alpha))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """D(P || Q) in nats. Both inputs must be strictly positive and normalized."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have the same length")
    if np.any(p <= 0) or np.any(q <= 0):
        raise ValueError("KL divergence here requires strictly positive entries")
    if abs(p.sum() - 1.0) > 1e-9 or abs(q.sum() - 1.0) > 1e-9:
        raise ValueError("distributions must sum to 1")
    return float(np.sum(p * np.log(p / q)))


@dataclass(frozen=True, eq=False)
class KlMatrix:
    """Pairwise KL divergences between labeled distributions."""

    labels: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.values.shape != (n, n):
            raise ValueError("matrix shape must match the label count")

    def _off_diagonal(self):
        n = len(self.labels)
        for i in range(n):
            for j in range(n):
                if i != j:
                    yield self.labels[i], self.labels[j], float(self.values[i, j])

    def max_pair(self) -> tuple[str, str, float]:
        return max(self._off_diagonal(), key=lambda item: item[2])

    def min_pair(self) -> tuple[str, str, float]:
        return min(self._off_diagonal(), key=lambda item: item[2])

    def mean_divergence(self) -> float:
        """Mean over ordered off-diagonal pairs; the headline separability number."""
        entries = [value for _, _, value in self._off_diagonal()]
        if not entries:
            raise ValueError("need at least two distributions")
        return float(np.mean(entries))


def kl_matrix(labeled: Sequence[tuple[str, PropertyDistribution]]) -> KlMatrix:
    if len(labeled) < 2:
        raise ValueError("need at least two distributions to compare")
    labels = tuple(label for label, _ in labeled)
    if len(set(labels)) != len(labels):
        raise ValueError("distribution labels must be unique")
    n = len(labeled)
    values = np.zeros((n, n))
    for i, (_, p) in enumerate(labeled):
        for j, (_, q) in enumerate(labeled):
            if i != j:
                values[i, j] = kl_divergence(p.probs, q.probs)
    return KlMatrix(labels=labels, values=values)


# --- annotation noise ----------------------------------------------------------

def rescale_to_reference(meta: ImageMeta, boxes: Sequence[RawBox],
                         edge: int = NOISE_REFERENCE_EDGE) -> tuple[ImageMeta, list[RawBox]]:
    """Resize an annotation set so the longer image edge equals ``edge`` pixels."""
    factor = edge / max(meta.width, meta.height)
    scaled_meta = ImageMeta(
        image_id=meta.image_id,
        width=max(1, round(meta.width * factor)),
        height=max(1, round(meta.height * factor)),
        scene_label=meta.scene_label,
    )
    scaled = [
        RawBox(
            x_min=box.x_min * factor,
            y_min=box.y_min * factor,
            box_width=box.box_width * factor,
            box_height=box.box_height * factor,
            color_label=box.color_label,
            source=box.source,
        )
        for box in boxes
    ]
    return scaled_meta, scaled


def inject_noise(meta: ImageMeta, boxes: Sequence[RawBox], sigma: float,
                 seed: Union[int, Sequence[int]], fields: Sequence[str] = NOISE_FIELDS,
                 ) -> tuple[ImageMeta, list[RawBox]]:
    """Perturb box annotations with Gaussian pixel noise at a fixed image scale.

    The image is first rescaled so its longer edge is 320 px, which makes
    sigma comparable across differently sized images. Each requested field
    gets independent N(0, sigma) noise; widths and heights keep a 1 px
    floor and boxes are clipped back inside the image. Color labels ride
    along unchanged. Deterministic for a given seed.
    """
    unknown = set(fields) - set(NOISE_FIELDS)
    if unknown:
        raise ValueError(f"unknown noise fields: {sorted(unknown)}")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    scaled_meta, scaled = rescale_to_reference(meta, boxes)
    if sigma == 0 or not fields:
        return scaled_meta, scaled
    rng = np.random.default_rng(seed)
    noisy = []
    for box in scaled:
        x, y = box.x_min, box.y_min
        w, h = box.box_width, box.box_height
        if "x" in fields:
            x += rng.normal(0.0, sigma)
        if "y" in fields:
            y += rng.normal(0.0, sigma)
        if "width" in fields:
            w += rng.normal(0.0, sigma)
        if "height" in fields:
            h += rng.normal(0.0, sigma)
        w = max(w, 1.0)
        h = max(h, 1.0)
        # keep at least one pixel of the box inside the image
        x = min(max(x, 0.0), scaled_meta.width - 1.0)
        y = min(max(y, 0.0), scaled_meta.height - 1.0)
        w = min(w, scaled_meta.width - x)
        h = min(h, scaled_meta.height - y)
        noisy.append(RawBox(x_min=x, y_min=y, box_width=w, box_height=h,
                            color_label=box.color_label, source=box.source))
    return scaled_meta, noisy


def restrict_properties(names: Iterable[str]) -> PropertyMask:
    """Validated property subset for ablation runs, e.g. dropping color."""
    mask = mask_from_names(names)
    if not mask.names:
        raise ValueError("property restriction cannot be empty")
    return mask


def property_ablation_masks() -> dict[str, PropertyMask]:
    """One mask per dropped property, keyed by ``without-<property>``."""
    all_names = CONTINUOUS_PROPERTIES + ("color",)
    masks = {}
    for dropped in all_names:
        kept = [name for name in all_names if name != dropped]
        masks[f"without-{dropped}"] = mask_from_names(kept)
    return masks
