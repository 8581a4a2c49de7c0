import pytest

from heterospec.lm import TableModel
from heterospec.vocab import Vocabulary

# The 13 sub-token vocabulary used in the decomposition experiments: every
# contiguous substring of "Hello" except the duplicated second "l".
HELLO_PARTS = [
    "H", "He", "Hel", "Hell", "Hello",
    "e", "el", "ell", "ello",
    "l", "ll", "lo", "o",
]

GREETING_TARGET = ["hello_", "world", "wo", "rld", "hello_world"]
GREETING_DRAFTER = ["hello_", "world", "wo", "rld"]


@pytest.fixture
def hello_vocab():
    return Vocabulary(HELLO_PARTS)


@pytest.fixture
def greeting_pair():
    return Vocabulary(GREETING_TARGET), Vocabulary(GREETING_DRAFTER)


@pytest.fixture
def ab_vocab():
    return Vocabulary(["a", "b"])


def flat_model(vocab, probs):
    """Context-free table model: same distribution at every context."""
    return TableModel(vocab, 0, {(): list(probs)})


@pytest.fixture
def data_dir():
    import pathlib

    return pathlib.Path(__file__).resolve().parent.parent / "data"
