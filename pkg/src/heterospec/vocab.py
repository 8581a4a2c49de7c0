"""Byte-level vocabularies, greedy tokenization and normalization.

Token texts are byte strings with dense ids ``0..n-1``.  Tokenization is
greedy longest-prefix matching, so ``decode(encode(s)) == s`` whenever
``encode`` succeeds.  Normalizers model lossy pre-tokenization rules
(lowercasing, whitespace collapsing, accent stripping); they are the one
place where the round trip may legitimately break, and ``check_injectivity``
measures exactly that on a corpus.
"""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

from . import kernels
from .errors import TokenizationFailure, VocabularyError


def _as_bytes(data: bytes | str) -> bytes:
    return data.encode("utf-8") if isinstance(data, str) else bytes(data)


@dataclass(frozen=True)
class Token:
    id: int
    text: bytes


class Vocabulary:
    """An ordered set of non-empty byte-string tokens with dense ids."""

    def __init__(self, texts: Iterable[bytes | str]):
        texts = tuple(_as_bytes(t) for t in texts)
        if not texts:
            raise VocabularyError("vocabulary must contain at least one token")
        seen = set()
        for t in texts:
            if not t:
                raise VocabularyError("empty token text")
            if t in seen:
                raise VocabularyError(f"duplicate token text {t!r}")
            seen.add(t)
        self.tokens: tuple[Token, ...] = tuple(
            Token(i, t) for i, t in enumerate(texts)
        )
        self.texts: tuple[bytes, ...] = texts
        self._id_by_text = {t: i for i, t in enumerate(texts)}
        self._matcher = kernels.Matcher(texts)
        self._sorted_texts = sorted(texts)
        self.max_token_len = max(len(t) for t in texts)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, text: bytes | str) -> bool:
        return _as_bytes(text) in self._id_by_text

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.texts == other.texts

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} tokens, max_len={self.max_token_len})"

    @cached_property
    def alphabet(self) -> frozenset[bytes]:
        """The single-byte strings occurring in token texts."""
        return frozenset(bytes([b]) for t in self.texts for b in t)

    def id_of(self, text: bytes | str) -> int | None:
        return self._id_by_text.get(_as_bytes(text))

    @property
    def matcher(self):
        """The backend matching kernel (greedy longest-prefix)."""
        return self._matcher

    def tokenize(self, data: bytes | str) -> list[Token]:
        """Greedy longest-prefix tokenization into Token objects."""
        return [self.tokens[i] for i in self.encode(data)]

    def encode(self, data: bytes | str) -> list[int]:
        data = _as_bytes(data)
        ids, fail = self._matcher.tokenize_ids(data)
        if fail >= 0:
            raise TokenizationFailure(
                f"no token matches at byte {fail} ({data[fail:fail + 12]!r})",
                position=fail,
            )
        return list(ids)

    def decode(self, ids: Sequence[int]) -> bytes:
        return b"".join(self.tokens[i].text for i in ids)

    def encode_suffix(self, data: bytes | str) -> tuple[list[int], int]:
        """Encode the longest tokenizable suffix of ``data``.

        Returns ``(ids, start)`` where ``start`` is the byte offset the
        encoding begins at (0 when the whole string tokenizes).  Useful for
        conditioning a model whose vocabulary cannot express the full
        history; an empty suffix is always expressible.
        """
        data = _as_bytes(data)
        for start in range(len(data) + 1):
            ids, fail = self._matcher.tokenize_ids(data[start:])
            if fail < 0:
                return list(ids), start
        return [], len(data)  # unreachable: the empty suffix tokenizes

    def first_token(self, data: bytes | str) -> Token | None:
        """The first token of the greedy tokenization of ``data`` (the
        longest token that prefixes it), or None."""
        tid, _ = self._matcher.longest_match(_as_bytes(data), 0)
        return self.tokens[tid] if tid >= 0 else None

    def matches_at(self, data: bytes, pos: int) -> list[tuple[int, int]]:
        """All ``(token_id, end)`` matches starting at ``pos``."""
        return self._matcher.matches_at(data, pos)

    def has_token_with_prefix(self, data: bytes, pos: int) -> bool:
        return self._matcher.has_token_with_prefix(data, pos)

    def longer_tokens_with_prefix(self, prefix: bytes) -> list[Token]:
        """Tokens whose text strictly extends ``prefix``."""
        out = []
        i = bisect.bisect_right(self._sorted_texts, prefix)
        while i < len(self._sorted_texts):
            text = self._sorted_texts[i]
            if not text.startswith(prefix):
                break
            out.append(self.tokens[self._id_by_text[text]])
            i += 1
        return out

    def count_compositions(
        self, text: bytes | str, max_parts: int | None = None, op_budget: int = 10**6
    ) -> tuple[int, bool]:
        """How many ways ``text`` concatenates from tokens of this
        vocabulary (at most ``max_parts`` of them).  Returns
        ``(count, exceeded)``; ``exceeded`` means budget or overflow."""
        data = _as_bytes(text)
        if max_parts is None:
            max_parts = len(data)
        count, _, exceeded = self._matcher.count_compositions(
            data, max_parts, op_budget
        )
        return count, exceeded


def complete_vocabulary(alphabet: bytes | str = b"ab", max_len: int = 3) -> Vocabulary:
    """Every string of length 1..``max_len`` over ``alphabet``, ordered by
    length then lexicographically."""
    alphabet = sorted(set(_as_bytes(alphabet)))
    if not alphabet or max_len < 1:
        raise VocabularyError("need a non-empty alphabet and max_len >= 1")
    texts: list[bytes] = []
    level = [b""]
    for _ in range(max_len):
        level = [t + bytes([b]) for t in level for b in alphabet]
        texts.extend(level)
    return Vocabulary(texts)


def load_vocabulary(path: str | Path) -> Vocabulary:
    """Load the JSON vocabulary format: an array of {"id", "text"} objects
    with dense ids and non-empty texts."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise VocabularyError(f"{path}: expected a JSON array")
    by_id: dict[int, str] = {}
    for entry in raw:
        if not isinstance(entry, dict) or "id" not in entry or "text" not in entry:
            raise VocabularyError(f"{path}: entries need 'id' and 'text'")
        if entry["id"] in by_id:
            raise VocabularyError(f"{path}: duplicate id {entry['id']}")
        by_id[entry["id"]] = entry["text"]
    if sorted(by_id) != list(range(len(by_id))):
        raise VocabularyError(f"{path}: ids must be dense 0..n-1")
    return Vocabulary([by_id[i] for i in range(len(by_id))])


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    entries = [
        {"id": t.id, "text": t.text.decode("utf-8")} for t in vocab.tokens
    ]
    Path(path).write_text(
        json.dumps(entries, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def load_corpus(path: str | Path) -> list[str]:
    """UTF-8 text corpus, one document per line."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def is_expressible(a: Vocabulary, b: Vocabulary) -> bool:
    """True when every token text of ``a`` tokenizes under ``b`` — i.e.
    anything written in ``a`` can be re-written in ``b``."""
    for text in a.texts:
        _, fail = b.matcher.tokenize_ids(text)
        if fail >= 0:
            return False
    return True


def intersect(target: Vocabulary, draft: Vocabulary) -> tuple[frozenset[bytes], float]:
    """Shared token texts and the ratio |shared| / |target|."""
    shared = frozenset(target.texts) & frozenset(draft.texts)
    return shared, len(shared) / len(target)


# --- normalization -----------------------------------------------------------

_ACCENT_MAP = (
    (b"\xc3\xa9", b"e"),  # e acute
    (b"\xc3\xa8", b"e"),  # e grave
    (b"\xc3\xa0", b"a"),  # a grave
    (b"\xc3\xbc", b"u"),  # u umlaut
)

NORMALIZER_RULES = ("identity", "lowercase", "collapse_spaces", "strip_accents")


@dataclass(frozen=True)
class Normalizer:
    """An ordered list of idempotent byte-level rewrite rules.

    ``identity`` leaves the text alone, ``lowercase`` lowers ASCII letters,
    ``collapse_spaces`` squeezes runs of spaces to one, and
    ``strip_accents`` maps a small fixed set of accented letters to ASCII.
    Applying the same normalizer twice equals applying it once.
    """

    rules: tuple[str, ...] = ("identity",)

    def __post_init__(self):
        for rule in self.rules:
            if rule not in NORMALIZER_RULES:
                raise VocabularyError(f"unknown normalizer rule {rule!r}")

    @classmethod
    def parse(cls, spec: str) -> "Normalizer":
        """Build from a comma-separated rule list, e.g. ``"collapse_spaces,lowercase"``."""
        rules = tuple(r.strip() for r in spec.split(",") if r.strip())
        return cls(rules or ("identity",))

    @property
    def is_identity(self) -> bool:
        return all(r == "identity" for r in self.rules)

    def apply(self, data: bytes | str) -> bytes:
        out = _as_bytes(data)
        for rule in self.rules:
            if rule == "lowercase":
                out = out.lower()
            elif rule == "collapse_spaces":
                out = re.sub(rb" {2,}", b" ", out)
            elif rule == "strip_accents":
                for src, dst in _ACCENT_MAP:
                    out = out.replace(src, dst)
        return out


@dataclass(frozen=True)
class TextCodec:
    """A vocabulary plus the normalizer applied before tokenizing.

    ``encode`` normalizes then tokenizes; ``decode`` concatenates token
    texts and never re-applies normalization, so sampled tokens reach the
    output byte-for-byte.
    """

    vocab: Vocabulary
    normalizer: Normalizer = field(default_factory=Normalizer)

    def encode(self, data: bytes | str) -> list[int]:
        return self.vocab.encode(self.normalizer.apply(data))

    def decode(self, ids: Sequence[int]) -> bytes:
        return self.vocab.decode(ids)


# --- injectivity audit -------------------------------------------------------


@dataclass(frozen=True)
class StringCheck:
    text: str
    passed: bool
    reason: str | None = None


@dataclass(frozen=True)
class InjectivityReport:
    checks: tuple[StringCheck, ...]
    injective: bool

    def failures(self) -> list[StringCheck]:
        return [c for c in self.checks if not c.passed]


def check_injectivity(
    vocab: Vocabulary,
    normalizer: Normalizer,
    corpus: Sequence[str],
    prefix_len: int = 100,
) -> InjectivityReport:
    """Round-trip audit: does detokenize(tokenize(normalize(s))) == s?

    Each corpus document is truncated to ``prefix_len`` characters first.
    A lossy normalizer (or an inexpressible string) breaks the round trip
    and is reported with a reason; the tokenizer pair is injective on the
    corpus iff every check passes.
    """
    checks = []
    for doc in corpus:
        s = doc[:prefix_len]
        raw = s.encode("utf-8")
        normalized = normalizer.apply(raw)
        try:
            ids = vocab.encode(normalized)
        except TokenizationFailure as exc:
            checks.append(
                StringCheck(s, False, f"tokenization failed at byte {exc.position}")
            )
            continue
        round_tripped = vocab.decode(ids)
        if round_tripped != raw:
            checks.append(
                StringCheck(
                    s,
                    False,
                    f"normalizer {','.join(normalizer.rules)} altered the text",
                )
            )
        else:
            checks.append(StringCheck(s, True))
    checks = tuple(checks)
    return InjectivityReport(checks, all(c.passed for c in checks))
