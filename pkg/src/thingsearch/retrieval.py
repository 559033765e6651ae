"""Example-free scene profiles and the ranking machinery around them.

A scene profile is built purely from a query (statement texts or block
illustrations), never from labeled example images. Statement profiles score
test images with a soft log-domain likelihood-ratio sum (the histogram
generalization of direct attribute prediction); block profiles rank by
Euclidean distance between Fisher vectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .encoder import FisherVector, GmmModel, encode_fv
from .errors import ConfigError
from .grammar import BinBoundaries, StatementHistogram, histogram_from_statements
from .windows import FULL_MASK, PropertyMask, SyntaxMatrix

KIND_STATEMENTS = "statement-histogram"
KIND_BLOCKS = "fisher-vector"

DEFAULT_SMOOTHING = 1.0


@dataclass(frozen=True, eq=False)
class SceneProfile:
    """Per-scene query representation: a normalized histogram or a Fisher vector."""

    scene_id: str
    kind: str
    histogram: Optional[StatementHistogram] = None
    fisher: Optional[FisherVector] = None

    def __post_init__(self):
        if self.kind == KIND_STATEMENTS:
            if self.histogram is None:
                raise ValueError("statement profile requires a histogram payload")
            if abs(self.histogram.total - 1.0) > 1e-9:
                raise ValueError("statement profile histogram must be L1-normalized")
        elif self.kind == KIND_BLOCKS:
            if self.fisher is None:
                raise ValueError("block profile requires a fisher payload")
        else:
            raise ValueError(f"unknown profile kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class PriorModel:
    """Smoothed occurrence probabilities of every statement bin on the holdout."""

    priors: np.ndarray
    smoothing: float
    bins_per_property: int
    mask: PropertyMask = FULL_MASK

    def __post_init__(self):
        if np.any(self.priors <= 0):
            raise ValueError("priors must be strictly positive (smooth before building)")
        if abs(float(self.priors.sum()) - 1.0) > 1e-9:
            raise ValueError("priors must sum to 1")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")


def smooth_normalize(counts: np.ndarray, alpha: float) -> np.ndarray:
    """Laplace-smooth a count vector and L1-normalize it."""
    counts = np.asarray(counts, dtype=np.float64)
    return (counts + alpha) / (counts.sum() + alpha * counts.size)


def fit_prior(holdout_histograms: Iterable[StatementHistogram],
              alpha: float = DEFAULT_SMOOTHING) -> PriorModel:
    """Pool holdout statement counts into a smoothed prior over bins."""
    total = None
    bins = None
    mask = FULL_MASK
    for hist in holdout_histograms:
        if total is None:
            total = hist.counts.copy()
            bins = hist.bins_per_property
            mask = hist.mask
        else:
            if hist.bins_per_property != bins or hist.mask.names != mask.names:
                raise ValueError("holdout histograms disagree on bins or property mask")
            total += hist.counts
    if total is None:
        raise ValueError("no holdout histograms supplied")
    return PriorModel(priors=smooth_normalize(total, alpha), smoothing=alpha,
                      bins_per_property=bins, mask=mask)


def uniform_prior(length: int, bins_per_property: int, alpha: float = DEFAULT_SMOOTHING,
                  mask: PropertyMask = FULL_MASK) -> PriorModel:
    return PriorModel(priors=np.full(length, 1.0 / length), smoothing=alpha,
                      bins_per_property=bins_per_property, mask=mask)


def profile_from_histogram(scene_id: str, histogram: StatementHistogram) -> SceneProfile:
    """Wrap raw statement counts as a profile, L1-normalizing them."""
    normalized = StatementHistogram(
        bins_per_property=histogram.bins_per_property,
        counts=histogram.normalized(),
        mask=histogram.mask,
    )
    return SceneProfile(scene_id=scene_id, kind=KIND_STATEMENTS, histogram=normalized)


def build_scene_profile(source: Union[Sequence[str], Sequence[SyntaxMatrix]],
                        kind: str,
                        context: Union[BinBoundaries, GmmModel],
                        scene_id: str = "query") -> SceneProfile:
    """Build a profile from statement texts or from block illustrations.

    Statement texts are parsed and accumulated into a normalized histogram;
    block illustrations are merged into one window matrix and Fisher-encoded
    against the supplied mixture.
    """
    source = list(source)
    if not source:
        raise ConfigError("cannot build a scene profile from an empty source")
    if kind == KIND_STATEMENTS:
        if not isinstance(context, BinBoundaries):
            raise ConfigError("statement profiles require bin boundaries as context")
        hist = histogram_from_statements(source, context.bins_per_property)
        return profile_from_histogram(scene_id, hist)
    if kind == KIND_BLOCKS:
        if not isinstance(context, GmmModel):
            raise ConfigError("block profiles require a GMM as context")
        rows = []
        for illustration in source:
            if not isinstance(illustration, SyntaxMatrix):
                raise ConfigError("block profiles take SyntaxMatrix illustrations")
            rows.extend(illustration.rows)
        merged = SyntaxMatrix(image_id=scene_id, rows=tuple(rows))
        return SceneProfile(scene_id=scene_id, kind=KIND_BLOCKS,
                            fisher=encode_fv(merged, context))
    raise ConfigError(f"unknown profile kind {kind!r}")


# --- scoring -----------------------------------------------------------------

def dap_score_core(profile_probs: np.ndarray, image_counts: np.ndarray,
                   log_prior: np.ndarray, alpha: float,
                   binary: bool = False) -> float:
    """Log-domain likelihood-ratio score of one image for one profile.

    The image histogram is Laplace-smoothed and normalized; each statement
    bin contributes its log ratio against the prior, weighted by the
    profile's probability mass on that bin. ``binary`` switches to the
    literal attribute form: every bin the profile touches counts fully.
    """
    p_image = smooth_normalize(image_counts, alpha)
    log_ratio = np.log(p_image) - log_prior
    if binary:
        return float(log_ratio[profile_probs > 0].sum())
    return float(profile_probs @ log_ratio)


def dap_score(image_hist: StatementHistogram, profile: SceneProfile,
              prior: PriorModel, binary: bool = False) -> float:
    """Score a test image histogram against a statement profile."""
    if profile.kind != KIND_STATEMENTS:
        raise ValueError(f"dap_score requires a statement profile, got {profile.kind}")
    q = profile.histogram
    if not q.compatible_with(image_hist):
        raise ValueError(
            f"histogram mismatch: profile B={q.bins_per_property} vs "
            f"image B={image_hist.bins_per_property} (or differing property masks)")
    if prior.priors.shape != image_hist.counts.shape:
        raise ValueError("prior dimension does not match the histogram")
    return dap_score_core(q.counts, image_hist.counts, np.log(prior.priors),
                          prior.smoothing, binary=binary)


def fv_distance_score(image_fv: FisherVector, profile: SceneProfile) -> float:
    """Negated Euclidean distance between image and profile encodings."""
    if profile.kind != KIND_BLOCKS:
        raise ValueError(f"fv_distance_score requires a block profile, got {profile.kind}")
    target = profile.fisher
    if image_fv.values.shape != target.values.shape:
        raise ValueError(
            f"Fisher vector length mismatch: image {image_fv.values.shape[0]} "
            f"vs profile {target.values.shape[0]}")
    return -float(np.linalg.norm(image_fv.values - target.values))


# --- ranking and evaluation ----------------------------------------------------

@dataclass(frozen=True)
class RankedList:
    """Images ordered by descending score; ties break ascending by id."""

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        for _, score in self.entries:
            if not math.isfinite(score):
                raise ValueError("ranked scores must be finite")

    def ids(self) -> tuple[str, ...]:
        return tuple(image_id for image_id, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def rank_images(scores: Mapping[str, float]) -> RankedList:
    """Deterministic ranking of a score map; NaN scores are rejected by name."""
    for image_id, score in scores.items():
        if math.isnan(score):
            raise ValueError(f"score for image {image_id!r} is NaN")
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return RankedList(entries=tuple(ordered))


def _min_max_normalize(scores: Mapping[str, float]) -> dict[str, float]:
    values = list(scores.values())
    low, high = min(values), max(values)
    if high == low:
        return {image_id: 0.5 for image_id in scores}
    return {image_id: (score - low) / (high - low) for image_id, score in scores.items()}


def fuse_rankings(scores_a: Mapping[str, float], scores_b: Mapping[str, float],
                  method: str = "minmax-average") -> RankedList:
    """Combine two score maps over the same images into one ranking.

    Default: min-max normalize each map to [0, 1] (a constant map becomes
    0.5 everywhere) and average. ``method="reciprocal-rank"`` fuses by
    summed reciprocal ranks instead.
    """
    if set(scores_a) != set(scores_b):
        raise ValueError("fuse_rankings requires the same image set on both sides")
    if method == "minmax-average":
        norm_a = _min_max_normalize(scores_a)
        norm_b = _min_max_normalize(scores_b)
        fused = {i: 0.5 * (norm_a[i] + norm_b[i]) for i in scores_a}
    elif method == "reciprocal-rank":
        fused = {i: 0.0 for i in scores_a}
        for scores in (scores_a, scores_b):
            for rank, (image_id, _) in enumerate(rank_images(scores), start=1):
                fused[image_id] += 1.0 / rank
    else:
        raise ValueError(f"unknown fusion method {method!r}")
    return rank_images(fused)


def average_precision(ranked: Union[RankedList, Sequence[str]],
                      relevant: Iterable[str]) -> float:
    """AP of one ranking: mean of precision-at-hit over the relevant items."""
    ids = ranked.ids() if isinstance(ranked, RankedList) else tuple(ranked)
    relevant = set(relevant)
    if not relevant:
        raise ValueError("relevance set must be non-empty")
    missing = relevant - set(ids)
    if missing:
        raise ValueError(f"relevant ids missing from the ranking: {sorted(missing)[:5]}")
    hits = 0
    precision_sum = 0.0
    for position, image_id in enumerate(ids, start=1):
        if image_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / len(relevant)


def mean_average_precision(per_scene_ap: Mapping[str, float]) -> float:
    if not per_scene_ap:
        raise ValueError("no per-scene AP values")
    return float(sum(per_scene_ap.values()) / len(per_scene_ap))
