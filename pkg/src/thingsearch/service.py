"""HTTP query API over a prebuilt retrieval index.

The index directory must contain windows.jsonl, boundaries.json and
priors.json; gmm.json is optional and enables block and fused queries.
Block queries arrive in normalized [0,1] coordinates, so clients never need
image dimensions. A block's color may be "any": for Fisher scoring it is
filled with the holdout's mean color feature, mirroring how "any" spreads
uniformly over the color slices in statement histograms.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .colors import COLOR_NAMES
from .dataio import file_digest, load_boundaries, load_gmm, load_prior, load_windows
from .encoder import encode_fv
from .errors import ParseError
from .grammar import ANY_COLOR_WORD, histogram_from_statements
from .pipeline import (
    CorpusIndex,
    build_index,
    image_statements,
    score_blocks,
    score_statements,
)
from .retrieval import (
    KIND_BLOCKS,
    SceneProfile,
    fuse_rankings,
    profile_from_histogram,
    rank_images,
)
from .windows import aspect_ratio

_GEOMETRY_TOLERANCE = 1e-9


class BlockSpec(BaseModel):
    x: float
    y: float
    w: float
    h: float
    color: str = ANY_COLOR_WORD


class QueryRequest(BaseModel):
    statements: Optional[list[str]] = None
    blocks: Optional[list[BlockSpec]] = None
    result_limit: int = 20
    fuse: bool = False
    expected_bins: Optional[int] = None
    expected_gmm_components: Optional[int] = None


@dataclass(eq=False)
class ServiceState:
    index: Optional[CorpusIndex] = None
    digests: Optional[dict[str, str]] = None
    thumbs_dir: Optional[Path] = None


def load_index_dir(index_dir: Union[str, Path]) -> tuple[CorpusIndex, dict[str, str]]:
    """Load persisted artifacts and precompute the in-memory corpus index."""
    index_dir = Path(index_dir)
    windows_path = index_dir / "windows.jsonl"
    boundaries_path = index_dir / "boundaries.json"
    priors_path = index_dir / "priors.json"
    gmm_path = index_dir / "gmm.json"

    records = load_windows(windows_path)
    boundaries = load_boundaries(boundaries_path)
    prior = load_prior(priors_path)
    gmm = load_gmm(gmm_path) if gmm_path.exists() else None
    digests = {
        "windows": file_digest(windows_path),
        "boundaries": file_digest(boundaries_path),
        "priors": file_digest(priors_path),
    }
    if gmm is not None:
        digests["gmm"] = file_digest(gmm_path)
    return build_index(records, boundaries, prior, gmm), digests


def _bad_request(payload: dict):
    raise HTTPException(status_code=400, detail=payload)


def _block_profile(blocks: list[BlockSpec], index: CorpusIndex) -> SceneProfile:
    model = index.gmm
    if model is None:
        raise HTTPException(status_code=409, detail={
            "error": "no-gmm-index",
            "message": "this index was built without a GMM; block queries are unavailable"})
    columns = model.mask.ordered
    rows = []
    for i, block in enumerate(blocks):
        if block.w <= 0 or block.h <= 0:
            _bad_request({"error": "invalid-block", "index": i,
                          "message": "block width and height must be positive"})
        if (block.x < 0 or block.y < 0
                or block.x + block.w > 1 + _GEOMETRY_TOLERANCE
                or block.y + block.h > 1 + _GEOMETRY_TOLERANCE):
            _bad_request({"error": "invalid-block", "index": i,
                          "message": "block must lie inside the unit square"})
        color_word = block.color.strip().lower()
        if color_word == ANY_COLOR_WORD:
            color_feature = None
        elif color_word in COLOR_NAMES:
            color_feature = COLOR_NAMES.index(color_word) / 10.0
        else:
            _bad_request({"error": "invalid-block", "index": i, "token": block.color,
                          "message": f"unknown color {block.color!r}"})
        values = {
            "horizontal": block.x + block.w / 2,
            "vertical": block.y + block.h / 2,
            "size": block.w * block.h,
            "ratio": aspect_ratio(block.w, block.h),
        }
        row = []
        for position, name in enumerate(columns):
            if name == "color":
                row.append(model.feature_means[position] if color_feature is None
                           else color_feature)
            else:
                row.append(values[name])
        rows.append(row)
    fisher = encode_fv(np.asarray(rows, dtype=np.float64), model)
    return SceneProfile(scene_id="query", kind=KIND_BLOCKS, fisher=fisher)


def _statement_scores(texts: list[str], index: CorpusIndex) -> dict[str, float]:
    try:
        hist = histogram_from_statements(texts, index.boundaries.bins_per_property,
                                         index.mask)
    except ParseError as err:
        _bad_request({"error": "parse-error", "message": str(err),
                      "token": err.token, "position": err.position, "line": err.line})
    return score_statements(index, profile_from_histogram("query", hist))


def create_app(index_dir: Optional[Union[str, Path]] = None,
               thumbs_dir: Optional[Union[str, Path]] = None) -> FastAPI:
    """Build the service; with ``index_dir=None`` every endpoint returns 503."""
    app = FastAPI(title="thingsearch query service")
    state = ServiceState(thumbs_dir=Path(thumbs_dir) if thumbs_dir else None)
    if index_dir is not None:
        state.index, state.digests = load_index_dir(index_dir)
    if state.thumbs_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/thumbs", StaticFiles(directory=state.thumbs_dir), name="thumbs")

    def require_index() -> CorpusIndex:
        if state.index is None:
            raise HTTPException(status_code=503,
                                detail={"error": "index-not-loaded",
                                        "message": "no index directory was loaded"})
        return state.index

    @app.post("/query")
    def query(request: QueryRequest):
        index = require_index()
        if request.expected_bins is not None \
                and request.expected_bins != index.boundaries.bins_per_property:
            raise HTTPException(status_code=409, detail={
                "error": "bins-mismatch",
                "index_bins": index.boundaries.bins_per_property,
                "requested_bins": request.expected_bins})
        if request.expected_gmm_components is not None:
            actual = index.gmm.n_components if index.gmm is not None else None
            if request.expected_gmm_components != actual:
                raise HTTPException(status_code=409, detail={
                    "error": "gmm-mismatch",
                    "index_components": actual,
                    "requested_components": request.expected_gmm_components})
        if request.result_limit < 1:
            _bad_request({"error": "invalid-query",
                          "message": "result_limit must be at least 1"})

        has_statements = bool(request.statements)
        has_blocks = bool(request.blocks)
        if request.fuse:
            if not (has_statements and has_blocks):
                _bad_request({"error": "invalid-query",
                              "message": "fused queries need both statements and blocks"})
        elif has_statements == has_blocks:
            _bad_request({"error": "invalid-query",
                          "message": "provide exactly one of statements or blocks"})

        if request.fuse:
            ranked = fuse_rankings(
                _statement_scores(request.statements, index),
                score_blocks(index, _block_profile(request.blocks, index)))
        elif has_statements:
            ranked = rank_images(_statement_scores(request.statements, index))
        else:
            ranked = rank_images(score_blocks(index, _block_profile(request.blocks, index)))

        results = []
        for rank, (image_id, score) in enumerate(ranked, start=1):
            if rank > request.result_limit:
                break
            entry = {"image_id": image_id, "score": score, "rank": rank}
            if state.thumbs_dir is not None:
                entry["thumbnail_url"] = f"/thumbs/{image_id}.png"
            results.append(entry)
        return {"results": results}

    @app.get("/index/info")
    def index_info():
        index = require_index()
        return {
            "corpus_size": index.size,
            "bins_per_property": index.boundaries.bins_per_property,
            "gmm_components": index.gmm.n_components if index.gmm is not None else None,
            "digests": state.digests,
        }

    @app.get("/images/{image_id}/statements")
    def statements_for(image_id: str):
        index = require_index()
        img = index.get(image_id)
        if img is None:
            raise HTTPException(status_code=404, detail={
                "error": "unknown-image", "image_id": image_id})
        return {
            "image_id": image_id,
            "statements": image_statements(img.syntax, index.boundaries),
            "histogram": {
                "length": int(img.histogram.counts.size),
                "total": img.histogram.total,
                "nonzero_bins": int(np.count_nonzero(img.histogram.counts)),
            },
        }

    return app
