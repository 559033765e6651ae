import numpy as np
import pytest

from thingsearch import pipeline
from thingsearch.analysis import property_ablation_masks, restrict_properties
from thingsearch.errors import InsufficientDataError
from thingsearch.grammar import parse_statement
from thingsearch.retrieval import KIND_BLOCKS, KIND_STATEMENTS


def test_split_by_scene_is_disjoint_and_deterministic(small_records):
    holdout, test = pipeline.split_by_scene(small_records, 4, seed=0)
    again_holdout, _ = pipeline.split_by_scene(small_records, 4, seed=0)
    assert [r.image_id for r in holdout] == [r.image_id for r in again_holdout]
    holdout_ids = {r.image_id for r in holdout}
    test_ids = {r.image_id for r in test}
    assert not holdout_ids & test_ids
    assert len(holdout) == 8 and len(test) == 16
    for scene in ("corridor", "shelfscape"):
        assert sum(r.scene_label == scene for r in holdout) == 4


def test_split_varies_with_seed(small_records):
    a, _ = pipeline.split_by_scene(small_records, 4, seed=0)
    b, _ = pipeline.split_by_scene(small_records, 4, seed=1)
    assert {r.image_id for r in a} != {r.image_id for r in b}


def test_split_requires_labels_and_enough_images(small_records):
    from thingsearch.dataio import WindowsRecord
    unlabeled = [WindowsRecord(image_id="x", width=100, height=100,
                               boxes=small_records[0].boxes)]
    with pytest.raises(ValueError):
        pipeline.split_by_scene(unlabeled, 1, seed=0)
    with pytest.raises(InsufficientDataError):
        pipeline.split_by_scene(small_records, 12, seed=0)


def test_noisy_records_are_deterministic(small_records):
    a = pipeline.noisy_records(small_records, 5.0, seed=1)
    b = pipeline.noisy_records(small_records, 5.0, seed=1)
    assert a == b
    assert a != pipeline.noisy_records(small_records, 5.0, seed=2)
    # noise at the reference scale leaves ids and labels alone
    assert [r.image_id for r in a] == [r.image_id for r in small_records]
    assert all(r.width <= 320 and r.height <= 320 for r in a)


def test_build_index_and_lookup(small_experiment):
    index = small_experiment.index
    assert index.size == 16
    first = index.images[0]
    assert index.get(first.meta_id) is first
    assert index.get("nonexistent") is None
    relevant = index.relevant_sets()
    assert set(relevant) == {"corridor", "shelfscape"}
    assert sum(len(ids) for ids in relevant.values()) == 16


def test_image_statements_parse_back(small_experiment):
    index = small_experiment.index
    img = index.images[0]
    statements = pipeline.image_statements(img.syntax, index.boundaries)
    assert len(statements) == img.syntax.n
    for text in statements:
        parse_statement(text, index.boundaries.bins_per_property)


def test_class_statement_texts_are_frequent_and_parseable(small_experiment):
    texts = small_experiment.statement_texts
    assert set(texts) == {"corridor", "shelfscape"}
    for scene_texts in texts.values():
        assert 0 < len(scene_texts) <= 5
        for text in scene_texts:
            parse_statement(text, 3)


def test_prepare_experiment_statement_mode(small_experiment):
    assert small_experiment.gmm is None
    assert small_experiment.block_profiles == {}
    for profile in small_experiment.statement_profiles.values():
        assert profile.kind == KIND_STATEMENTS
    report = pipeline.evaluate_experiment(small_experiment)
    assert set(report.per_scene_ap) == {"corridor", "shelfscape"}
    assert 0.0 < report.map_score <= 1.0


def test_prepare_experiment_with_gmm(small_records):
    experiment = pipeline.prepare_experiment(small_records, bins=3, components=4,
                                             seed=3, holdout_per_class=4)
    assert experiment.gmm is not None and experiment.gmm.n_components == 4
    for profile in experiment.block_profiles.values():
        assert profile.kind == KIND_BLOCKS
    blocks = pipeline.evaluate_experiment(experiment, mode="blocks")
    fused = pipeline.evaluate_experiment(experiment, mode="fused")
    assert 0.0 < blocks.map_score <= 1.0
    assert 0.0 < fused.map_score <= 1.0


def test_prepare_experiment_is_deterministic(small_records):
    a = pipeline.prepare_experiment(small_records, bins=3, seed=3, holdout_per_class=4)
    b = pipeline.prepare_experiment(small_records, bins=3, seed=3, holdout_per_class=4)
    assert a.boundaries == b.boundaries
    assert a.statement_texts == b.statement_texts
    ap_a = pipeline.evaluate_experiment(a).per_scene_ap
    ap_b = pipeline.evaluate_experiment(b).per_scene_ap
    assert ap_a == ap_b


def test_prepare_experiment_with_noise(small_records):
    noisy = pipeline.prepare_experiment(small_records, bins=3, seed=3,
                                        holdout_per_class=4, sigma=10.0)
    report = pipeline.evaluate_experiment(noisy)
    assert 0.0 < report.map_score <= 1.0
    # the corrupted corpus really differs from the clean one
    clean = pipeline.prepare_experiment(small_records, bins=3, seed=3, holdout_per_class=4)
    assert noisy.boundaries != clean.boundaries


def test_masked_experiment_runs_without_color(small_records):
    mask = restrict_properties(("horizontal", "vertical", "size", "ratio"))
    experiment = pipeline.prepare_experiment(small_records, bins=3, seed=3,
                                             holdout_per_class=4, mask=mask)
    report = pipeline.evaluate_experiment(experiment)
    assert 0.0 < report.map_score <= 1.0
    assert experiment.statement_texts == {}   # masked profiles skip the text form


def test_scene_ranking_modes(small_records):
    experiment = pipeline.prepare_experiment(small_records, bins=3, components=4,
                                             seed=3, holdout_per_class=4)
    for mode in ("statements", "blocks", "fused"):
        ranked = pipeline.scene_ranking(experiment, "corridor", mode)
        assert len(ranked) == experiment.index.size
    with pytest.raises(ValueError):
        pipeline.scene_ranking(experiment, "corridor", "bogus")


def test_evaluate_with_restricted_pool(small_experiment):
    relevant = small_experiment.index.relevant_sets()
    all_ids = [img.meta_id for img in small_experiment.index.images]
    pool = {scene: [i for i in all_ids if i in ids or i.startswith("corridor")][:10]
            for scene, ids in relevant.items()}
    report = pipeline.evaluate_experiment(small_experiment, pool=pool)
    assert 0.0 < report.map_score <= 1.0


def test_sweep_row_shapes(small_records):
    bins_rows = pipeline.sweep_bins(small_records, [3, 4], seed=3, holdout_per_class=4)
    assert [row["B"] for row in bins_rows] == [3, 4]
    gmm_rows = pipeline.sweep_gmm(small_records, [4], seed=3, holdout_per_class=4)
    assert gmm_rows[0]["K"] == 4 and 0 <= gmm_rows[0]["map"] <= 1
    noise_rows = pipeline.sweep_noise(small_records, sigmas=(0.0, 10.0),
                                      seed=3, holdout_per_class=4)
    assert [row["sigma"] for row in noise_rows] == [0.0, 10.0]
    props_rows = pipeline.sweep_properties(small_records, property_ablation_masks(),
                                           seed=3, holdout_per_class=4)
    assert len(props_rows) == 5
    assert all(0 <= row["map"] <= 1 for row in props_rows)


def test_binary_dap_mode_runs(small_experiment):
    report = pipeline.evaluate_experiment(small_experiment, binary_dap=True)
    assert 0.0 < report.map_score <= 1.0
