from pathlib import Path

import pytest

from occ.predictor import ContextModel, prime_context_model

DATA = Path(__file__).parent / "data"
ENGLISH = DATA / "english.txt"
COLLATION = DATA / "collation.txt"
TRAIN_BYTES = 120_000


@pytest.fixture(scope="session")
def english() -> bytes:
    return ENGLISH.read_bytes()


@pytest.fixture(scope="session")
def collation() -> bytes:
    return COLLATION.read_bytes()


@pytest.fixture(scope="session")
def primed_model(english) -> ContextModel:
    """Order-3 model primed on the training prefix; fork before use."""
    return prime_context_model(ContextModel(256, 3), english[:TRAIN_BYTES])


@pytest.fixture(scope="session")
def heldout(english) -> bytes:
    return english[TRAIN_BYTES:]
