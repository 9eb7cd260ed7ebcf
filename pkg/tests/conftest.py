from __future__ import annotations

import pytest

from workcell.eeg import make_corpus, train_default_classifier
from workcell.world import Domain


@pytest.fixture(scope="session")
def domain() -> Domain:
    return Domain()


@pytest.fixture(scope="session")
def corpus():
    return make_corpus()


@pytest.fixture(scope="session")
def classifier(corpus):
    return train_default_classifier(corpus)
