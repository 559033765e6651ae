"""End-to-end experiment orchestration: split, fit, index, query, evaluate.

Everything here is deterministic in (records, options, seed). The same
building blocks back the CLI commands, the HTTP service's index, and the
evaluation sweeps.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Mapping, Optional, Sequence

import numpy as np

from .analysis import NOISE_FIELDS, inject_noise
from .dataio import WindowsRecord
from .encoder import FisherVector, GmmModel, encode_fv, fit_gmm
from .errors import InsufficientDataError
from .grammar import (
    BinBoundaries,
    StatementHistogram,
    fit_boundaries,
    histogram_from_syntax,
    quantize_window,
    render_statement,
    statement_from_index,
)
from .retrieval import (
    KIND_BLOCKS,
    KIND_STATEMENTS,
    PriorModel,
    RankedList,
    SceneProfile,
    average_precision,
    build_scene_profile,
    dap_score,
    fit_prior,
    fuse_rankings,
    fv_distance_score,
    mean_average_precision,
    profile_from_histogram,
    rank_images,
)
from .windows import FULL_MASK, PropertyMask, SyntaxMatrix, build_syntax

log = logging.getLogger(__name__)

DEFAULT_HOLDOUT_PER_CLASS = 20
DEFAULT_STATEMENTS_PER_CLASS = 5
DEFAULT_ILLUSTRATIONS_PER_CLASS = 3

NOISE_SIGMA_GRID = (2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0)

EvalMode = Literal["statements", "blocks", "fused"]


def syntax_from_record(record: WindowsRecord) -> SyntaxMatrix:
    return build_syntax(record.boxes, record.meta)


def split_by_scene(records: Sequence[WindowsRecord], holdout_per_class: int,
                   seed: int = 0) -> tuple[list[WindowsRecord], list[WindowsRecord]]:
    """Per-class random split into (holdout, test), deterministic under seed."""
    by_scene: dict[str, list[WindowsRecord]] = {}
    for record in records:
        if record.scene_label is None:
            raise ValueError(f"record {record.image_id} has no scene label; cannot split")
        by_scene.setdefault(record.scene_label, []).append(record)
    holdout: list[WindowsRecord] = []
    test: list[WindowsRecord] = []
    rng = np.random.default_rng(seed)
    for scene in sorted(by_scene):
        members = sorted(by_scene[scene], key=lambda r: r.image_id)
        if len(members) <= holdout_per_class:
            raise InsufficientDataError(
                f"scene {scene}: {len(members)} images cannot supply "
                f"{holdout_per_class} holdout images and a non-empty test pool")
        order = rng.permutation(len(members))
        holdout.extend(members[i] for i in order[:holdout_per_class])
        test.extend(members[i] for i in order[holdout_per_class:])
    return holdout, test


def noisy_records(records: Sequence[WindowsRecord], sigma: float, seed: int = 0,
                  fields: Sequence[str] = NOISE_FIELDS) -> list[WindowsRecord]:
    """Apply the fixed-scale annotation noise to every record independently."""
    out = []
    for i, record in enumerate(records):
        meta, boxes = inject_noise(record.meta, record.boxes, sigma,
                                   seed=[seed, i], fields=fields)
        out.append(WindowsRecord(
            image_id=meta.image_id, width=meta.width, height=meta.height,
            scene_label=meta.scene_label, boxes=tuple(boxes)))
    return out


# --- corpus index ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class IndexedImage:
    meta_id: str
    scene_label: Optional[str]
    syntax: SyntaxMatrix
    histogram: StatementHistogram
    fisher: Optional[FisherVector]


@dataclass(frozen=True, eq=False)
class CorpusIndex:
    """Precomputed per-image representations plus the models that made them."""

    boundaries: BinBoundaries
    prior: PriorModel
    images: tuple[IndexedImage, ...]
    gmm: Optional[GmmModel] = None
    mask: PropertyMask = FULL_MASK

    def __post_init__(self):
        ids = [img.meta_id for img in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image ids in the index")

    @property
    def size(self) -> int:
        return len(self.images)

    def get(self, image_id: str) -> Optional[IndexedImage]:
        return next((img for img in self.images if img.meta_id == image_id), None)

    def relevant_sets(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for img in self.images:
            if img.scene_label is not None:
                out.setdefault(img.scene_label, set()).add(img.meta_id)
        return out


def build_index(records: Sequence[WindowsRecord], boundaries: BinBoundaries,
                prior: PriorModel, gmm: Optional[GmmModel] = None,
                mask: PropertyMask = FULL_MASK) -> CorpusIndex:
    images = []
    for record in records:
        syntax = syntax_from_record(record)
        images.append(IndexedImage(
            meta_id=record.image_id,
            scene_label=record.scene_label,
            syntax=syntax,
            histogram=histogram_from_syntax(syntax, boundaries, mask),
            fisher=encode_fv(syntax, gmm) if gmm is not None else None,
        ))
    return CorpusIndex(boundaries=boundaries, prior=prior,
                       images=tuple(images), gmm=gmm, mask=mask)


def image_statements(syntax: SyntaxMatrix, boundaries: BinBoundaries) -> list[str]:
    """One rendered statement per window, in window order."""
    return [render_statement(quantize_window(w, boundaries), boundaries.bins_per_property)
            for w in syntax.rows]


# --- class profiles -------------------------------------------------------------

def _pooled_class_histograms(syntaxes_by_scene: Mapping[str, Sequence[SyntaxMatrix]],
                             boundaries: BinBoundaries,
                             mask: PropertyMask) -> dict[str, StatementHistogram]:
    pooled = {}
    for scene in sorted(syntaxes_by_scene):
        counts = None
        for syntax in syntaxes_by_scene[scene]:
            hist = histogram_from_syntax(syntax, boundaries, mask)
            counts = hist.counts if counts is None else counts + hist.counts
        if counts is None:
            raise ValueError(f"scene {scene} has no holdout images")
        pooled[scene] = StatementHistogram(boundaries.bins_per_property, counts, mask)
    return pooled


def _top_bins(counts: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-counts, kind="stable")
    return order[:k]


def class_statement_texts(syntaxes_by_scene: Mapping[str, Sequence[SyntaxMatrix]],
                          boundaries: BinBoundaries,
                          per_class: int = DEFAULT_STATEMENTS_PER_CLASS) -> dict[str, list[str]]:
    """The top-k most frequent statements of each scene's holdout windows."""
    pooled = _pooled_class_histograms(syntaxes_by_scene, boundaries, FULL_MASK)
    texts = {}
    for scene, hist in pooled.items():
        statements = [
            statement_from_index(int(idx), boundaries.bins_per_property)
            for idx in _top_bins(hist.counts, per_class)
            if hist.counts[idx] > 0
        ]
        texts[scene] = [render_statement(s, boundaries.bins_per_property) for s in statements]
    return texts


def class_statement_profiles(syntaxes_by_scene: Mapping[str, Sequence[SyntaxMatrix]],
                             boundaries: BinBoundaries,
                             per_class: int = DEFAULT_STATEMENTS_PER_CLASS,
                             mask: PropertyMask = FULL_MASK,
                             ) -> tuple[dict[str, SceneProfile], dict[str, list[str]]]:
    """Example-free statement profiles per scene.

    With the full property mask the profile round-trips through actual
    statement texts (what a user would type); masked ablations skip the
    text form and weight the top bins of the masked histogram equally.
    """
    if mask.names == FULL_MASK.names:
        texts = class_statement_texts(syntaxes_by_scene, boundaries, per_class)
        profiles = {
            scene: build_scene_profile(scene_texts, KIND_STATEMENTS, boundaries, scene_id=scene)
            for scene, scene_texts in texts.items()
        }
        return profiles, texts
    pooled = _pooled_class_histograms(syntaxes_by_scene, boundaries, mask)
    profiles = {}
    for scene, hist in pooled.items():
        counts = np.zeros_like(hist.counts)
        keep = _top_bins(hist.counts, per_class)
        counts[keep[hist.counts[keep] > 0]] = 1.0
        profiles[scene] = profile_from_histogram(
            scene, StatementHistogram(boundaries.bins_per_property, counts, mask))
    return profiles, {}


def class_block_profiles(syntaxes_by_scene: Mapping[str, Sequence[SyntaxMatrix]],
                         gmm: GmmModel,
                         per_class: int = DEFAULT_ILLUSTRATIONS_PER_CLASS,
                         ) -> dict[str, SceneProfile]:
    """Fisher profiles from the first few holdout images used as illustrations."""
    profiles = {}
    for scene in sorted(syntaxes_by_scene):
        illustrations = sorted(syntaxes_by_scene[scene], key=lambda s: s.image_id)[:per_class]
        profiles[scene] = build_scene_profile(illustrations, KIND_BLOCKS, gmm, scene_id=scene)
    return profiles


# --- experiment preparation and evaluation ---------------------------------------

@dataclass(frozen=True, eq=False)
class Experiment:
    """Everything a retrieval evaluation needs, fitted on one holdout split."""

    holdout: tuple[WindowsRecord, ...]
    test: tuple[WindowsRecord, ...]
    index: CorpusIndex
    statement_profiles: dict[str, SceneProfile]
    statement_texts: dict[str, list[str]]
    block_profiles: dict[str, SceneProfile]

    @property
    def boundaries(self) -> BinBoundaries:
        return self.index.boundaries

    @property
    def prior(self) -> PriorModel:
        return self.index.prior

    @property
    def gmm(self) -> Optional[GmmModel]:
        return self.index.gmm


def prepare_experiment(records: Sequence[WindowsRecord], *,
                       bins: int = 3,
                       components: Optional[int] = None,
                       seed: int = 0,
                       alpha: float = 1.0,
                       holdout_per_class: int = DEFAULT_HOLDOUT_PER_CLASS,
                       statements_per_class: int = DEFAULT_STATEMENTS_PER_CLASS,
                       illustrations_per_class: int = DEFAULT_ILLUSTRATIONS_PER_CLASS,
                       mask: PropertyMask = FULL_MASK,
                       sigma: Optional[float] = None,
                       noise_fields: Sequence[str] = NOISE_FIELDS) -> Experiment:
    """Split, optionally corrupt, fit all models on the holdout, index the rest.

    ``components=None`` skips the GMM (statement-only experiments run much
    faster); ``sigma`` applies annotation noise to every record before
    anything is fitted, so the whole pipeline sees the corrupted data.
    """
    if sigma is not None:
        records = noisy_records(records, sigma, seed=seed, fields=noise_fields)
    holdout, test = split_by_scene(records, holdout_per_class, seed=seed)

    holdout_syntaxes = [syntax_from_record(r) for r in holdout]
    boundaries = fit_boundaries(holdout_syntaxes, bins)
    prior = fit_prior(
        (histogram_from_syntax(s, boundaries, mask) for s in holdout_syntaxes), alpha)
    gmm = fit_gmm(holdout_syntaxes, components, seed=seed, mask=mask) \
        if components is not None else None

    syntaxes_by_scene: dict[str, list[SyntaxMatrix]] = {}
    for record, syntax in zip(holdout, holdout_syntaxes):
        syntaxes_by_scene.setdefault(record.scene_label, []).append(syntax)

    statement_profiles, statement_texts = class_statement_profiles(
        syntaxes_by_scene, boundaries, statements_per_class, mask)
    block_profiles = class_block_profiles(
        syntaxes_by_scene, gmm, illustrations_per_class) if gmm is not None else {}

    index = build_index(test, boundaries, prior, gmm, mask)
    return Experiment(
        holdout=tuple(holdout), test=tuple(test), index=index,
        statement_profiles=statement_profiles, statement_texts=statement_texts,
        block_profiles=block_profiles)


def score_statements(index: CorpusIndex, profile: SceneProfile,
                     binary: bool = False) -> dict[str, float]:
    return {img.meta_id: dap_score(img.histogram, profile, index.prior, binary=binary)
            for img in index.images}


def score_blocks(index: CorpusIndex, profile: SceneProfile) -> dict[str, float]:
    scores = {}
    for img in index.images:
        if img.fisher is None:
            raise ValueError(f"image {img.meta_id} has no Fisher encoding in this index")
        scores[img.meta_id] = fv_distance_score(img.fisher, profile)
    return scores


def scene_ranking(experiment: Experiment, scene: str, mode: EvalMode,
                  binary_dap: bool = False,
                  fusion: str = "minmax-average") -> RankedList:
    """Rank the indexed corpus for one scene query in the requested mode."""
    index = experiment.index
    if mode == "statements":
        return rank_images(score_statements(index, experiment.statement_profiles[scene],
                                            binary=binary_dap))
    if mode == "blocks":
        return rank_images(score_blocks(index, experiment.block_profiles[scene]))
    if mode == "fused":
        return fuse_rankings(
            score_statements(index, experiment.statement_profiles[scene], binary=binary_dap),
            score_blocks(index, experiment.block_profiles[scene]),
            method=fusion)
    raise ValueError(f"unknown evaluation mode {mode!r}")


@dataclass(frozen=True)
class EvalReport:
    mode: str
    per_scene_ap: dict[str, float]
    map_score: float


def evaluate_experiment(experiment: Experiment, mode: EvalMode = "statements",
                        binary_dap: bool = False,
                        fusion: str = "minmax-average",
                        pool: Optional[Mapping[str, Sequence[str]]] = None) -> EvalReport:
    """Per-scene AP over the indexed test pool, plus their mean.

    Every scene queries the full pool by default; ``pool`` can restrict the
    candidate ids per scene for protocols that score within sub-pools.
    """
    relevant = experiment.index.relevant_sets()
    scenes = experiment.statement_profiles if mode != "blocks" else experiment.block_profiles
    per_scene = {}
    for scene in sorted(scenes):
        ranked = scene_ranking(experiment, scene, mode, binary_dap, fusion)
        ids = ranked.ids()
        if pool is not None:
            allowed = set(pool[scene])
            ids = [i for i in ids if i in allowed]
        per_scene[scene] = average_precision(ids, relevant[scene] & set(ids))
    return EvalReport(mode=mode, per_scene_ap=per_scene,
                      map_score=mean_average_precision(per_scene))


# --- sweeps -----------------------------------------------------------------------

def sweep_bins(records: Sequence[WindowsRecord], bin_values: Sequence[int],
               **prepare_kw) -> list[dict]:
    rows = []
    for bins in bin_values:
        experiment = prepare_experiment(records, bins=bins, **prepare_kw)
        report = evaluate_experiment(experiment, mode="statements")
        rows.append({"B": bins, "map": report.map_score})
        log.info("bins sweep: B=%d map=%.4f", bins, report.map_score)
    return rows


def sweep_gmm(records: Sequence[WindowsRecord], component_values: Sequence[int],
              **prepare_kw) -> list[dict]:
    rows = []
    for components in component_values:
        experiment = prepare_experiment(records, components=components, **prepare_kw)
        report = evaluate_experiment(experiment, mode="blocks")
        rows.append({"K": components, "map": report.map_score})
        log.info("gmm sweep: K=%d map=%.4f", components, report.map_score)
    return rows


def sweep_noise(records: Sequence[WindowsRecord],
                sigmas: Sequence[float] = NOISE_SIGMA_GRID,
                mode: EvalMode = "statements",
                noise_fields: Sequence[str] = NOISE_FIELDS,
                **prepare_kw) -> list[dict]:
    rows = []
    for sigma in sigmas:
        experiment = prepare_experiment(records, sigma=sigma,
                                        noise_fields=noise_fields, **prepare_kw)
        report = evaluate_experiment(experiment, mode=mode)
        rows.append({"sigma": sigma, "map": report.map_score})
        log.info("noise sweep: sigma=%.1f map=%.4f", sigma, report.map_score)
    return rows


def sweep_properties(records: Sequence[WindowsRecord],
                     masks: Mapping[str, PropertyMask],
                     mode: EvalMode = "statements",
                     **prepare_kw) -> list[dict]:
    rows = []
    for name in sorted(masks):
        experiment = prepare_experiment(records, mask=masks[name], **prepare_kw)
        report = evaluate_experiment(experiment, mode=mode)
        rows.append({"properties": name, "map": report.map_score})
        log.info("property sweep: %s map=%.4f", name, report.map_score)
    return rows
