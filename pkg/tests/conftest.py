"""Shared fixtures: the glyph corpus and one trained recognizer."""

import pytest

from spinann.benchmark import load_corpus, train_recognizer


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def recognizer():
    return train_recognizer()
