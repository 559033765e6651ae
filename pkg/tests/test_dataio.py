import hashlib
import json

import numpy as np
import pytest

from thingsearch import dataio
from thingsearch.analysis import kl_divergence, property_distribution
from thingsearch.encoder import fit_gmm_points
from thingsearch.errors import GeometryError, ModelIOError
from thingsearch.grammar import BinBoundaries, histogram_from_statements
from thingsearch.pipeline import syntax_from_record
from thingsearch.retrieval import (
    KIND_BLOCKS,
    SceneProfile,
    fit_prior,
    profile_from_histogram,
)
from thingsearch.windows import aspect_ratio

THIRDS = BinBoundaries(bins_per_property=3, cuts=(
    (1 / 3, 2 / 3), (1 / 3, 2 / 3), (1 / 3, 2 / 3), (1 / 3, 2 / 3)))


# --- windows JSONL ---------------------------------------------------------------

def test_windows_round_trip(tmp_path):
    records = dataio.generate_synthetic(images_per_class=3, seed=1)
    path = tmp_path / "windows.jsonl"
    dataio.save_windows(records, path)
    assert dataio.load_windows(path) == records


def test_load_windows_without_scene_label(tmp_path):
    path = tmp_path / "w.jsonl"
    path.write_text(json.dumps({
        "image_id": "a", "width": 100, "height": 80,
        "boxes": [{"x": 5, "y": 5, "w": 20, "h": 30}]}) + "\n")
    records = dataio.load_windows(path)
    assert records[0].scene_label is None
    assert records[0].boxes[0].box_height == 30


def test_load_windows_reports_bad_json_line(tmp_path):
    path = tmp_path / "w.jsonl"
    path.write_text('{"image_id": "a", "width": 10, "height": 10, "boxes": []}\nnot json\n')
    with pytest.raises(ModelIOError, match="line 2"):
        dataio.load_windows(path)


def test_load_windows_reports_missing_fields(tmp_path):
    path = tmp_path / "w.jsonl"
    path.write_text(json.dumps({"image_id": "a", "width": 10, "boxes": []}) + "\n")
    with pytest.raises(ModelIOError, match="height"):
        dataio.load_windows(path)
    path.write_text(json.dumps({"image_id": "a", "width": 10, "height": 10,
                                "boxes": [{"x": 1, "y": 1, "w": 2}]}) + "\n")
    with pytest.raises(ModelIOError, match="box 0"):
        dataio.load_windows(path)


def test_load_windows_drops_invalid_boxes_with_warning(tmp_path, caplog):
    path = tmp_path / "w.jsonl"
    path.write_text(json.dumps({
        "image_id": "a", "width": 100, "height": 100,
        "boxes": [
            {"x": 5, "y": 5, "w": 0, "h": 10},       # zero width
            {"x": 80, "y": 5, "w": 50, "h": 10},     # exceeds the image
            {"x": 5, "y": 5, "w": 10, "h": 10},
        ]}) + "\n")
    with caplog.at_level("WARNING"):
        records = dataio.load_windows(path)
    assert len(records[0].boxes) == 1
    assert "box 0" in caplog.text and "box 1" in caplog.text


def test_load_windows_caps_boxes_keeping_largest(tmp_path, caplog):
    boxes = [{"x": 0, "y": 0, "w": i + 1, "h": i + 1} for i in range(250)]
    path = tmp_path / "w.jsonl"
    path.write_text(json.dumps({"image_id": "a", "width": 300, "height": 300,
                                "boxes": boxes}) + "\n")
    with caplog.at_level("WARNING"):
        records = dataio.load_windows(path)
    kept = records[0].boxes
    assert len(kept) == 200
    # The 50 smallest were dropped; the survivors keep input order.
    assert kept[0].box_width == 51
    assert [b.box_width for b in kept] == sorted(b.box_width for b in kept)
    assert "capped" in caplog.text
    uncapped = dataio.load_windows(path, box_cap=None)
    assert len(uncapped[0].boxes) == 250


def test_polygon_to_bbox():
    box = dataio.polygon_to_bbox([(10, 5), (20, 5), (15, 25)])
    assert (box.x_min, box.y_min, box.box_width, box.box_height) == (10, 5, 10, 20)
    clipped = dataio.polygon_to_bbox([(-5, -3), (10, 2), (4, 8)])
    assert (clipped.x_min, clipped.y_min) == (0, 0)
    assert (clipped.box_width, clipped.box_height) == (10, 8)
    with pytest.raises(GeometryError):
        dataio.polygon_to_bbox([(0, 0), (5, 5)])
    with pytest.raises(GeometryError):
        dataio.polygon_to_bbox([(0, 0), (0, 5), (0, 9)])


# --- model envelopes --------------------------------------------------------------

def test_model_envelope_round_trip(tmp_path):
    path = tmp_path / "m.json"
    body = {"value": [1.0, 2.5], "name": "x"}
    dataio.save_model(path, "test-kind", body)
    assert dataio.load_model(path, "test-kind") == body


def test_model_envelope_rejects_wrong_kind_and_version(tmp_path):
    path = tmp_path / "m.json"
    dataio.save_model(path, "test-kind", {"a": 1})
    with pytest.raises(ModelIOError, match="format"):
        dataio.load_model(path, "other-kind")
    envelope = json.loads(path.read_text())
    envelope["version"] = 99
    path.write_text(json.dumps(envelope))
    with pytest.raises(ModelIOError, match="version"):
        dataio.load_model(path, "test-kind")


def test_model_envelope_detects_tampering(tmp_path):
    path = tmp_path / "m.json"
    dataio.save_model(path, "test-kind", {"a": 1})
    envelope = json.loads(path.read_text())
    envelope["body"]["a"] = 2
    path.write_text(json.dumps(envelope))
    with pytest.raises(ModelIOError, match="checksum"):
        dataio.load_model(path, "test-kind")
    path.write_text("{ broken json")
    with pytest.raises(ModelIOError):
        dataio.load_model(path, "test-kind")


def test_boundaries_round_trip(tmp_path):
    path = tmp_path / "boundaries.json"
    dataio.save_boundaries(path, THIRDS)
    assert dataio.load_boundaries(path) == THIRDS


def test_gmm_round_trip(tmp_path):
    x = np.random.default_rng(0).normal(size=(200, 3))
    model = fit_gmm_points(x, 4, seed=2)
    path = tmp_path / "gmm.json"
    dataio.save_gmm(path, model)
    loaded = dataio.load_gmm(path)
    assert loaded.weights.tolist() == model.weights.tolist()
    assert loaded.means.tolist() == model.means.tolist()
    assert loaded.variances.tolist() == model.variances.tolist()
    assert loaded.log_likelihood_trace == model.log_likelihood_trace
    assert loaded.feature_means == model.feature_means
    assert loaded.seed == model.seed and loaded.converged == model.converged


def test_gmm_component_count_cross_check(tmp_path):
    x = np.random.default_rng(0).normal(size=(100, 2))
    model = fit_gmm_points(x, 2, seed=0)
    path = tmp_path / "gmm.json"
    body = {
        "K": 5,   # wrong on purpose
        "weights": model.weights.tolist(), "means": model.means.tolist(),
        "variances": model.variances.tolist(), "seed": 0,
        "mask": list(model.mask.ordered), "variance_floor": model.variance_floor,
        "n_iterations": 1, "converged": True,
        "log_likelihood_trace": [0.0], "feature_means": list(model.feature_means),
    }
    dataio.save_model(path, "gmm", body)
    with pytest.raises(ModelIOError, match="disagrees"):
        dataio.load_gmm(path)


def test_prior_round_trip(tmp_path):
    hist = histogram_from_statements(["Red small tall thing at top left"] * 3, 3)
    prior = fit_prior([hist], alpha=0.5)
    path = tmp_path / "priors.json"
    dataio.save_prior(path, prior)
    loaded = dataio.load_prior(path)
    assert loaded.priors.tolist() == prior.priors.tolist()
    assert loaded.smoothing == prior.smoothing
    assert loaded.bins_per_property == prior.bins_per_property


def test_profile_round_trips_both_kinds(tmp_path):
    hist = histogram_from_statements(["Red small tall thing at top left"], 3)
    statement_profile = profile_from_histogram("corridor", hist)
    path = tmp_path / "p1.json"
    dataio.save_profile(path, statement_profile)
    loaded = dataio.load_profile(path)
    assert loaded.kind == statement_profile.kind
    assert loaded.scene_id == "corridor"
    assert loaded.histogram.counts.tolist() == statement_profile.histogram.counts.tolist()

    x = np.random.default_rng(1).normal(size=(80, 2))
    model = fit_gmm_points(x, 2, seed=0)
    from thingsearch.encoder import encode_fv
    block_profile = SceneProfile(scene_id="q", kind=KIND_BLOCKS,
                                 fisher=encode_fv(x[:10], model))
    path2 = tmp_path / "p2.json"
    dataio.save_profile(path2, block_profile)
    loaded2 = dataio.load_profile(path2)
    assert loaded2.fisher.values.tolist() == block_profile.fisher.values.tolist()
    assert loaded2.fisher.n_components == 2


def test_file_digest_is_sha256(tmp_path):
    path = tmp_path / "blob.bin"
    path.write_bytes(b"thing windows")
    assert dataio.file_digest(path) == hashlib.sha256(b"thing windows").hexdigest()


def test_dataset_split_rejects_overlap():
    with pytest.raises(ValueError):
        dataio.DatasetSplit(holdout_ids=("a", "b"), test_ids=("b", "c"))


# --- synthetic corpus --------------------------------------------------------------

def test_synthetic_is_deterministic(tmp_path):
    a = dataio.generate_synthetic(images_per_class=5, seed=11)
    b = dataio.generate_synthetic(images_per_class=5, seed=11)
    assert a == b
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    dataio.save_windows(a, p1)
    dataio.save_windows(b, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert dataio.generate_synthetic(images_per_class=5, seed=12) != a


def test_synthetic_shapes_and_labels():
    records = dataio.generate_synthetic(images_per_class=8, seed=0)
    assert len(records) == 16
    assert records[0].image_id == "corridor-0000"
    assert {r.scene_label for r in records} == {"corridor", "shelfscape"}
    for record in records:
        assert 5 <= len(record.boxes) <= 30
        assert 240 <= record.width <= 640 and 240 <= record.height <= 640
        for box in record.boxes:
            assert box.fits_in(record.meta)
            assert box.source == "annotation"


def test_archetype_geometry_is_separated():
    records = dataio.generate_synthetic(images_per_class=10, seed=2)
    for record in records:
        for box in record.boxes:
            ratio = aspect_ratio(box.box_width, box.box_height)
            if record.scene_label == "corridor":
                assert ratio < 0.2
            else:
                assert ratio > 0.8


def test_archetype_ratio_distributions_diverge():
    records = dataio.generate_synthetic(images_per_class=10, seed=2)
    by_scene = {}
    for record in records:
        by_scene.setdefault(record.scene_label, []).append(syntax_from_record(record))
    corridor = property_distribution(by_scene["corridor"], "ratio")
    shelf = property_distribution(by_scene["shelfscape"], "ratio")
    assert kl_divergence(corridor.probs, shelf.probs) > 0.1


def test_corridor_things_cluster_horizontally():
    records = dataio.generate_synthetic(archetypes=("corridor",),
                                        images_per_class=20, seed=0)
    centers = [(box.x_min + box.box_width / 2) / record.width
               for record in records for box in record.boxes]
    assert abs(float(np.mean(centers)) - 0.5) < 0.02
    assert float(np.std(centers)) < 0.1


def test_synthetic_validates_archetypes():
    with pytest.raises(ValueError):
        dataio.generate_synthetic(archetypes=("corridor", "alley"))
    with pytest.raises(ValueError):
        dataio.generate_synthetic(archetypes=())
