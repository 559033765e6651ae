"""Dataset files, model persistence, and synthetic data generation.

The canonical dataset format is JSON-lines, one image per line:

    {"image_id": str, "width": int, "height": int, "scene": str?,
     "boxes": [{"x": num, "y": num, "w": num, "h": num,
                "color": int?, "source": str?}]}

where (x, y) is the box's top-left corner in pixels. Model files are JSON
envelopes {format, version, checksum, body} whose body serialization is
canonical (sorted keys), so equal models produce byte-identical files.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .encoder import FisherVector, GmmModel
from .errors import GeometryError, ModelIOError
from .grammar import BinBoundaries, StatementHistogram
from .retrieval import KIND_BLOCKS, KIND_STATEMENTS, PriorModel, SceneProfile
from .windows import CONTINUOUS_PROPERTIES, ImageMeta, PropertyMask, RawBox, mask_from_names

log = logging.getLogger(__name__)

DEFAULT_BOX_CAP = 200

PathLike = Union[str, Path]


@dataclass(frozen=True)
class WindowsRecord:
    """One image's annotation content: identity, dimensions, and its boxes."""

    image_id: str
    width: int
    height: int
    scene_label: Optional[str] = None
    boxes: tuple[RawBox, ...] = ()

    @property
    def meta(self) -> ImageMeta:
        return ImageMeta(image_id=self.image_id, width=self.width,
                         height=self.height, scene_label=self.scene_label)


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint holdout/test image-id partition."""

    holdout_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self):
        overlap = set(self.holdout_ids) & set(self.test_ids)
        if overlap:
            raise ValueError(f"holdout and test overlap: {sorted(overlap)[:5]}")


def _require(obj: dict, key: str, line_no: int):
    if key not in obj:
        raise ModelIOError(f"line {line_no}: missing required field {key!r}")
    return obj[key]


def _parse_box(raw: dict, meta: ImageMeta) -> RawBox:
    box = RawBox(
        x_min=float(raw["x"]),
        y_min=float(raw["y"]),
        box_width=float(raw["w"]),
        box_height=float(raw["h"]),
        color_label=raw.get("color"),
        source=raw.get("source"),
    )
    if not box.fits_in(meta):
        raise GeometryError(
            f"box ({box.x_min}, {box.y_min}, {box.box_width}, {box.box_height}) "
            f"exceeds image {meta.width}x{meta.height}")
    return box


def load_windows(path: PathLike, box_cap: Optional[int] = DEFAULT_BOX_CAP) -> list[WindowsRecord]:
    """Read a windows JSONL file into validated records.

    Malformed lines or records raise with their 1-based line number; invalid
    boxes within an otherwise valid record are dropped with a warning. When
    a record carries more than ``box_cap`` boxes, only the largest by area
    are kept (in input order).
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ModelIOError(f"line {line_no}: invalid JSON ({err.msg})") from err
            if not isinstance(obj, dict):
                raise ModelIOError(f"line {line_no}: expected a JSON object")
            try:
                meta = ImageMeta(
                    image_id=str(_require(obj, "image_id", line_no)),
                    width=int(_require(obj, "width", line_no)),
                    height=int(_require(obj, "height", line_no)),
                    scene_label=obj.get("scene"),
                )
            except ValueError as err:
                raise ModelIOError(f"line {line_no}: {err}") from err
            raw_boxes = _require(obj, "boxes", line_no)
            if not isinstance(raw_boxes, list):
                raise ModelIOError(f"line {line_no}: 'boxes' must be a list")
            boxes = []
            for i, raw in enumerate(raw_boxes):
                try:
                    boxes.append(_parse_box(raw, meta))
                except (KeyError, TypeError) as err:
                    raise ModelIOError(
                        f"line {line_no}: box {i} is malformed ({err})") from err
                except ValueError as err:
                    log.warning("line %d: box %d rejected: %s", line_no, i, err)
            if box_cap is not None and len(boxes) > box_cap:
                by_area = sorted(boxes, key=lambda b: -b.box_width * b.box_height)
                keep = set(id(b) for b in by_area[:box_cap])
                boxes = [b for b in boxes if id(b) in keep]
                log.warning("line %d: %s has %d boxes, capped to the %d largest",
                            line_no, meta.image_id, len(raw_boxes), box_cap)
            records.append(WindowsRecord(
                image_id=meta.image_id, width=meta.width, height=meta.height,
                scene_label=meta.scene_label, boxes=tuple(boxes)))
    return records


def _box_to_json(box: RawBox) -> dict:
    out = {"x": box.x_min, "y": box.y_min, "w": box.box_width, "h": box.box_height}
    if box.color_label is not None:
        out["color"] = box.color_label
    if box.source is not None:
        out["source"] = box.source
    return out


def save_windows(records: Iterable[WindowsRecord], path: PathLike) -> None:
    """Write records as canonical JSONL; load_windows inverts this exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            obj = {
                "image_id": record.image_id,
                "width": record.width,
                "height": record.height,
                "boxes": [_box_to_json(b) for b in record.boxes],
            }
            if record.scene_label is not None:
                obj["scene"] = record.scene_label
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def polygon_to_bbox(points: Sequence[tuple[float, float]]) -> RawBox:
    """Axis-aligned bounding rectangle of a polygon's vertices.

    Vertices extending past the image's left or top edge are clipped to
    zero, matching the downstream box convention of non-negative corners.
    """
    if len(points) < 3:
        raise GeometryError(f"polygon needs at least 3 points, got {len(points)}")
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x0 = max(min(xs), 0.0)
    y0 = max(min(ys), 0.0)
    width = max(xs) - x0
    height = max(ys) - y0
    if width <= 0 or height <= 0:
        raise GeometryError("polygon has zero area after clipping to non-negative space")
    return RawBox(x_min=x0, y_min=y0, box_width=width, box_height=height)


# --- model persistence ---------------------------------------------------------

FORMAT_PREFIX = "thingsearch/"
MODEL_VERSION = 1


def _canonical(body: dict) -> str:
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_model(path: PathLike, kind: str, body: dict) -> None:
    canonical = _canonical(body)
    envelope = {
        "format": FORMAT_PREFIX + kind,
        "version": MODEL_VERSION,
        "checksum": _digest(canonical),
        "body": body,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(envelope, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path: PathLike, kind: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            envelope = json.load(fh)
    except json.JSONDecodeError as err:
        raise ModelIOError(f"{path}: not a valid model file ({err.msg})") from err
    expected_format = FORMAT_PREFIX + kind
    if envelope.get("format") != expected_format:
        raise ModelIOError(
            f"{path}: format {envelope.get('format')!r}, expected {expected_format!r}")
    if envelope.get("version") != MODEL_VERSION:
        raise ModelIOError(
            f"{path}: version {envelope.get('version')!r}, this build reads version {MODEL_VERSION}")
    body = envelope.get("body")
    if not isinstance(body, dict):
        raise ModelIOError(f"{path}: missing model body")
    if _digest(_canonical(body)) != envelope.get("checksum"):
        raise ModelIOError(f"{path}: checksum mismatch, file is corrupt or was edited")
    return body


def _mask_to_json(mask: PropertyMask) -> list[str]:
    return list(mask.ordered)


def save_boundaries(path: PathLike, boundaries: BinBoundaries) -> None:
    body = {
        "B": boundaries.bins_per_property,
        "cuts": {prop: list(boundaries.cuts_for(prop)) for prop in CONTINUOUS_PROPERTIES},
    }
    save_model(path, "bin-boundaries", body)


def load_boundaries(path: PathLike) -> BinBoundaries:
    body = load_model(path, "bin-boundaries")
    try:
        return BinBoundaries(
            bins_per_property=int(body["B"]),
            cuts=tuple(tuple(float(c) for c in body["cuts"][prop])
                       for prop in CONTINUOUS_PROPERTIES),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ModelIOError(f"{path}: invalid boundaries body ({err})") from err


def save_gmm(path: PathLike, model: GmmModel) -> None:
    body = {
        "K": model.n_components,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "seed": model.seed,
        "mask": _mask_to_json(model.mask),
        "variance_floor": model.variance_floor,
        "n_iterations": model.n_iterations,
        "converged": model.converged,
        "log_likelihood_trace": list(model.log_likelihood_trace),
        "feature_means": list(model.feature_means),
    }
    save_model(path, "gmm", body)


def load_gmm(path: PathLike) -> GmmModel:
    body = load_model(path, "gmm")
    try:
        model = GmmModel(
            weights=np.asarray(body["weights"], dtype=np.float64),
            means=np.asarray(body["means"], dtype=np.float64),
            variances=np.asarray(body["variances"], dtype=np.float64),
            seed=int(body["seed"]),
            mask=mask_from_names(body["mask"]),
            variance_floor=float(body["variance_floor"]),
            n_iterations=int(body["n_iterations"]),
            converged=bool(body["converged"]),
            log_likelihood_trace=tuple(body["log_likelihood_trace"]),
            feature_means=tuple(body["feature_means"]),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ModelIOError(f"{path}: invalid GMM body ({err})") from err
    if model.n_components != int(body["K"]):
        raise ModelIOError(f"{path}: K={body['K']} disagrees with stored arrays")
    return model


def save_prior(path: PathLike, prior: PriorModel) -> None:
    body = {
        "B": prior.bins_per_property,
        "alpha": prior.smoothing,
        "mask": _mask_to_json(prior.mask),
        "priors": prior.priors.tolist(),
    }
    save_model(path, "prior", body)


def load_prior(path: PathLike) -> PriorModel:
    body = load_model(path, "prior")
    try:
        return PriorModel(
            priors=np.asarray(body["priors"], dtype=np.float64),
            smoothing=float(body["alpha"]),
            bins_per_property=int(body["B"]),
            mask=mask_from_names(body["mask"]),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ModelIOError(f"{path}: invalid prior body ({err})") from err


def save_profile(path: PathLike, profile: SceneProfile) -> None:
    body: dict = {"scene_id": profile.scene_id, "kind": profile.kind}
    if profile.kind == KIND_STATEMENTS:
        body["B"] = profile.histogram.bins_per_property
        body["mask"] = _mask_to_json(profile.histogram.mask)
        body["counts"] = profile.histogram.counts.tolist()
    else:
        fv = profile.fisher
        body["K"] = fv.n_components
        body["dim"] = fv.dim
        body["values"] = fv.values.tolist()
        body["options"] = {
            "averaged": fv.averaged,
            "signed_sqrt": fv.signed_sqrt,
            "l2_normalized": fv.l2_normalized,
        }
    save_model(path, "scene-profile", body)


def load_profile(path: PathLike) -> SceneProfile:
    body = load_model(path, "scene-profile")
    try:
        kind = body["kind"]
        if kind == KIND_STATEMENTS:
            histogram = StatementHistogram(
                bins_per_property=int(body["B"]),
                counts=np.asarray(body["counts"], dtype=np.float64),
                mask=mask_from_names(body["mask"]),
            )
            return SceneProfile(scene_id=body["scene_id"], kind=kind, histogram=histogram)
        if kind == KIND_BLOCKS:
            options = body["options"]
            fisher = FisherVector(
                values=np.asarray(body["values"], dtype=np.float64),
                n_components=int(body["K"]),
                dim=int(body["dim"]),
                averaged=bool(options["averaged"]),
                signed_sqrt=bool(options["signed_sqrt"]),
                l2_normalized=bool(options["l2_normalized"]),
            )
            return SceneProfile(scene_id=body["scene_id"], kind=kind, fisher=fisher)
        raise ModelIOError(f"{path}: unknown profile kind {kind!r}")
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, ModelIOError):
            raise
        raise ModelIOError(f"{path}: invalid profile body ({err})") from err


def file_digest(path: PathLike) -> str:
    """Hex sha256 of a file's bytes, for manifests and index metadata."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


# --- synthetic data -------------------------------------------------------------

ARCHETYPES = ("corridor", "shelfscape")

# Each archetype is a small set of recurring thing templates (weight, color,
# height or width band, vertical band), so the same statement combinations
# repeat across the class the way real scene elements do. Color indices point
# into the 11-name table. Grey and white appear in both palettes on purpose:
# part of the class signal has to come from geometry, not color alone.
_CORRIDOR_TEMPLATES = (
    # (weight, color, height band, y-center band): grey pillars, brown doors,
    # white wall frames.
    (0.5, 3, (0.45, 0.60), (0.45, 0.60)),
    (0.3, 2, (0.55, 0.70), (0.50, 0.65)),
    (0.2, 9, (0.25, 0.35), (0.25, 0.40)),
)
_SHELFSCAPE_TEMPLATES = (
    # (weight, color, width band): red shelf boards, grey trays, white labels.
    (0.5, 8, (0.40, 0.50)),
    (0.3, 3, (0.25, 0.35)),
    (0.2, 9, (0.15, 0.20)),
)


def _pick_template(rng: np.random.Generator, templates) -> tuple:
    weights = np.array([t[0] for t in templates])
    return templates[int(rng.choice(len(templates), p=weights / weights.sum()))]


def _corridor_box(rng: np.random.Generator, width: int, height: int) -> RawBox:
    # Tall things near the horizontal center, like door frames and pillars.
    _, color, h_band, y_band = _pick_template(rng, _CORRIDOR_TEMPLATES)
    box_height = rng.uniform(*h_band) * height
    box_width = box_height * rng.uniform(0.15, 0.30)   # ratio stays below 0.2
    box_width = min(box_width, width * 0.9)
    cx = np.clip(rng.normal(0.5, 0.05), 0.05, 0.95) * width
    cy = rng.uniform(*y_band) * height
    x0 = np.clip(cx - box_width / 2, 0, width - box_width)
    y0 = np.clip(cy - box_height / 2, 0, height - box_height)
    return RawBox(x_min=float(x0), y_min=float(y0),
                  box_width=float(box_width), box_height=float(box_height),
                  color_label=color, source="annotation")


def _shelfscape_box(rng: np.random.Generator, width: int, height: int) -> RawBox:
    # Wide things stacked on three shelf levels.
    _, color, w_band = _pick_template(rng, _SHELFSCAPE_TEMPLATES)
    box_width = rng.uniform(*w_band) * width
    box_height = box_width * rng.uniform(0.15, 0.30)   # ratio stays above 0.8
    box_height = min(box_height, height * 0.3)
    level = rng.integers(3)
    cy = np.clip((0.25 + 0.25 * level) + rng.normal(0.0, 0.02), 0.05, 0.95) * height
    cx = rng.uniform(0.1, 0.9) * width
    x0 = np.clip(cx - box_width / 2, 0, width - box_width)
    y0 = np.clip(cy - box_height / 2, 0, height - box_height)
    return RawBox(x_min=float(x0), y_min=float(y0),
                  box_width=float(box_width), box_height=float(box_height),
                  color_label=color, source="annotation")


_BOX_MAKERS = {"corridor": _corridor_box, "shelfscape": _shelfscape_box}


def generate_synthetic(archetypes: Sequence[str] = ARCHETYPES,
                       images_per_class: int = 100, seed: int = 0) -> list[WindowsRecord]:
    """Deterministic two-archetype toy dataset with ground-truth scene labels.

    Corridors hold tall, horizontally centered things; shelfscapes hold wide
    things on three stack levels. Every image gets 5 to 30 boxes. Output
    depends only on (archetypes, images_per_class, seed).
    """
    if not archetypes:
        raise ValueError("need at least one archetype")
    unknown = set(archetypes) - set(_BOX_MAKERS)
    if unknown:
        raise ValueError(f"unknown archetypes: {sorted(unknown)} (have {ARCHETYPES})")
    records = []
    for class_index, archetype in enumerate(archetypes):
        make_box = _BOX_MAKERS[archetype]
        for image_index in range(images_per_class):
            rng = np.random.default_rng([seed, class_index, image_index])
            width = int(rng.integers(240, 641))
            height = int(rng.integers(240, 641))
            n_boxes = int(rng.integers(5, 31))
            boxes = tuple(make_box(rng, width, height) for _ in range(n_boxes))
            records.append(WindowsRecord(
                image_id=f"{archetype}-{image_index:04d}",
                width=width, height=height, scene_label=archetype, boxes=boxes))
    return records


def load_image_rgb(path: PathLike) -> np.ndarray:
    """Decode an image file into an (H, W, 3) uint8 RGB array."""
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))
