"""Shared fixtures: the synthetic corpus and prepared experiments.

Session scope keeps the expensive pieces (corpus generation, GMM fits) to
one instance across the whole suite.
"""
import pytest

from thingsearch import dataio, pipeline


@pytest.fixture(scope="session")
def corpus_records():
    """The full evaluation corpus: 100 images per archetype, seed 7."""
    return dataio.generate_synthetic(images_per_class=100, seed=7)


@pytest.fixture(scope="session")
def statement_experiment(corpus_records):
    return pipeline.prepare_experiment(corpus_records, bins=3, seed=7)


@pytest.fixture(scope="session")
def block_experiment(corpus_records):
    # 30 holdout images per class keep the window pool well above the
    # 10-windows-per-component fitting floor at K=64.
    return pipeline.prepare_experiment(
        corpus_records, bins=3, components=64, seed=7, holdout_per_class=30)


@pytest.fixture(scope="session")
def small_records():
    """A corpus small enough for fast per-module pipeline tests."""
    return dataio.generate_synthetic(images_per_class=12, seed=3)


@pytest.fixture(scope="session")
def small_experiment(small_records):
    return pipeline.prepare_experiment(small_records, bins=3, seed=3,
                                       holdout_per_class=4)
