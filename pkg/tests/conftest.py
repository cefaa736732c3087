from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adagate.corpus import builtin_fixture_path, chunk_corpus, load_examples
from adagate.index import HashingEmbedder, VectorIndex
from adagate.oracle import RuleBasedOracle

from helpers import WORLD_DIM


@pytest.fixture(scope="session")
def fixture_examples():
    return load_examples(builtin_fixture_path())


@pytest.fixture(scope="session")
def fixture_chunks(fixture_examples):
    return chunk_corpus(fixture_examples)


@pytest.fixture(scope="session")
def fixture_index(fixture_chunks):
    index = VectorIndex(HashingEmbedder(dim=WORLD_DIM))
    index.upsert("clean", fixture_chunks)
    return index


@pytest.fixture
def oracle():
    return RuleBasedOracle()
