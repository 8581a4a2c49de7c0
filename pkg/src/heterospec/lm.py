"""Tabular conditional models, temperature shaping and seeded sampling.

Two model kinds play the roles of target and drafter: explicit probability
tables (``TableModel``) and add-one-smoothed n-gram counts trained on a
corpus (``NgramModel``).  Both are immutable after construction and
address contexts by their last ``order`` token ids.

Sampling goes through :class:`SeededSampler`, a counter-based generator
with numbered streams: replica ``r`` of an experiment uses stream ``r`` of
the same master seed and is reproducible independently of the others.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import UnknownContext, VocabularyError
from .vocab import Vocabulary, load_vocabulary

_SUM_TOL = 1e-9


def _validate_probs(probs: np.ndarray, size: int, where: str) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (size,):
        raise VocabularyError(f"{where}: expected {size} probabilities, got {probs.shape}")
    if (probs < 0).any():
        raise VocabularyError(f"{where}: negative probability")
    if abs(float(probs.sum()) - 1.0) > _SUM_TOL:
        raise VocabularyError(f"{where}: probabilities sum to {probs.sum():.12f}")
    return probs


class ConditionalModel:
    """Base class: a vocabulary plus ``probs(context) -> vector``."""

    kind: str = "abstract"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def probs(self, context: Sequence[int]) -> np.ndarray:
        raise NotImplementedError


class TableModel(ConditionalModel):
    """Explicit conditional table keyed by the last ``order`` context ids.

    Contexts shorter than ``order`` are keyed as-is, so the empty context
    is a valid key.  Missing keys raise UnknownContext.
    """

    kind = "table"

    def __init__(
        self,
        vocab: Vocabulary,
        order: int,
        entries: Mapping[tuple[int, ...], Sequence[float]],
    ):
        super().__init__(vocab)
        if order < 0:
            raise VocabularyError("order must be >= 0")
        self.order = order
        self._table: dict[tuple[int, ...], np.ndarray] = {}
        for key, probs in entries.items():
            key = tuple(int(i) for i in key)
            if len(key) > order:
                raise VocabularyError(f"context key {key} longer than order {order}")
            vec = _validate_probs(probs, len(vocab), f"context {key}")
            vec.flags.writeable = False
            self._table[key] = vec

    def _key(self, context: Sequence[int]) -> tuple[int, ...]:
        return tuple(int(i) for i in context[-self.order:]) if self.order else ()

    def probs(self, context: Sequence[int]) -> np.ndarray:
        key = self._key(context)
        try:
            return self._table[key]
        except KeyError:
            raise UnknownContext(f"no table entry for context {key}") from None

    def contexts(self) -> list[tuple[int, ...]]:
        return sorted(self._table)


class NgramModel(ConditionalModel):
    """Add-one-smoothed n-gram counts; defined for every context."""

    kind = "ngram"

    def __init__(self, vocab: Vocabulary, order: int):
        super().__init__(vocab)
        if order < 1:
            raise VocabularyError("order must be >= 1")
        self.order = order
        self._counts: dict[tuple[int, ...], np.ndarray] = {}

    def _observe(self, context: tuple[int, ...], token: int) -> None:
        row = self._counts.get(context)
        if row is None:
            row = self._counts[context] = np.zeros(len(self.vocab), dtype=np.int64)
        row[token] += 1

    def probs(self, context: Sequence[int]) -> np.ndarray:
        key = tuple(int(i) for i in context[-self.order:])
        row = self._counts.get(key)
        n = len(self.vocab)
        if row is None:
            return np.full(n, 1.0 / n)
        return (row + 1.0) / (row.sum() + n)


def train_ngram(
    corpus: Iterable[bytes | str], vocab: Vocabulary, order: int
) -> NgramModel:
    """Count (context, next-token) pairs over the tokenized corpus.

    Document starts contribute shorter contexts (down to the empty one),
    which become their own keys; smoothing makes every context queryable.
    """
    model = NgramModel(vocab, order)
    for doc in corpus:
        ids = vocab.encode(doc)
        for j, tok in enumerate(ids):
            context = tuple(ids[max(0, j - order):j])
            model._observe(context, tok)
    return model


@dataclass(frozen=True)
class Temperature:
    """Power-renormalization shaping p_i^(1/tau) of a probability vector.

    tau=1 is the exact identity; tau=0 is the argmax one-hot, ties going
    to the lowest token id.  Applied in log space so tiny temperatures
    (e.g. 1e-7) stay finite and behave as near-argmax.
    """

    tau: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise VocabularyError("temperature must be non-negative")

    def apply(self, probs: np.ndarray) -> np.ndarray:
        probs = np.asarray(probs, dtype=np.float64)
        if self.tau == 1.0:
            return probs
        if self.tau == 0.0:
            out = np.zeros_like(probs)
            out[int(np.argmax(probs))] = 1.0
            return out
        out = np.zeros_like(probs)
        support = probs > 0
        scaled = np.log(probs[support]) / self.tau
        scaled -= scaled.max()
        weights = np.exp(scaled)
        out[support] = weights / weights.sum()
        return out


class SeededSampler:
    """Stream ``stream_index`` of a counter-based generator under one
    master seed.

    Streams are far-jumped apart, so replicas never overlap and each
    (master_seed, stream_index, draw sequence) triple is reproducible.
    ``draws`` counts the uniforms consumed, which tests use to pin the
    documented draw order.
    """

    def __init__(self, master_seed: int, stream_index: int = 0):
        self.master_seed = int(master_seed)
        self.stream_index = int(stream_index)
        bitgen = np.random.Philox(key=self.master_seed)
        if stream_index:
            bitgen = bitgen.jumped(self.stream_index)
        self._gen = np.random.Generator(bitgen)
        self.draws = 0

    def uniform(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def pick(self, probs: np.ndarray) -> int:
        """Inverse-CDF draw.  Clipped to the support so accumulated float
        error in the cumulative sum cannot select past the last token with
        positive probability."""
        probs = np.asarray(probs, dtype=np.float64)
        u = self.uniform()
        idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        last = int(np.flatnonzero(probs > 0)[-1])
        return min(idx, last)


def distribution(
    model: ConditionalModel,
    context: Sequence[int],
    temp: Temperature | None = None,
) -> np.ndarray:
    """The model's conditional vector with temperature applied."""
    probs = model.probs(context)
    return temp.apply(probs) if temp is not None else probs


def sample(
    model: ConditionalModel,
    context: Sequence[int],
    temp: Temperature | None,
    sampler: SeededSampler,
) -> int:
    return sampler.pick(distribution(model, context, temp))


# --- table-model JSON --------------------------------------------------------


def load_model(path: str | Path) -> TableModel:
    """Read {"vocab": path, "order": k, "entries": [{"context", "probs"}]};
    the vocabulary path is resolved relative to the model file."""
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    vocab = load_vocabulary((path.parent / raw["vocab"]).resolve())
    entries = {
        tuple(e["context"]): e["probs"] for e in raw["entries"]
    }
    if len(entries) != len(raw["entries"]):
        raise VocabularyError(f"{path}: duplicate context key")
    return TableModel(vocab, int(raw["order"]), entries)


def save_model(model: TableModel, path: str | Path, vocab_path: str) -> None:
    """Write the table-model JSON; ``vocab_path`` is stored as given (keep
    it relative to ``path`` for a relocatable pair)."""
    payload = {
        "vocab": vocab_path,
        "order": model.order,
        "entries": [
            {"context": list(key), "probs": [float(x) for x in model._table[key]]}
            for key in model.contexts()
        ],
    }
    Path(path).write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
