"""Pure-Python reference implementation of the matching kernels.

This module defines the semantics that the compiled backend in ``_core.pyx``
must reproduce exactly:

* greedy longest-prefix matching of byte strings against a fixed token set;
* tokenization as repeated longest-prefix matching, reporting the first
  position where no token matches;
* composition counting: in how many ways a byte string can be written as a
  concatenation of at most ``max_parts`` tokens, under a work budget and a
  saturation cap so that both backends overflow identically.

Returned counts, operation tallies and flags are bit-identical across
backends; parity is enforced by tests.
"""

from __future__ import annotations

import bisect

backend = "reference"

# Counts saturate here so the compiled backend's 64-bit arithmetic can never
# wrap; a saturated count is reported with exceeded=True.
COUNT_CAP = 1 << 61


class Matcher:
    """Greedy longest-prefix matcher over a fixed set of byte-string tokens."""

    def __init__(self, texts):
        texts = [bytes(t) for t in texts]
        self._ids = {t: i for i, t in enumerate(texts)}
        if len(self._ids) != len(texts):
            raise ValueError("duplicate token texts")
        self._max_len = max((len(t) for t in texts), default=0)
        self._sorted = sorted(texts)

    def longest_match(self, data: bytes, pos: int):
        """Longest token matching at ``pos``: ``(token_id, end)``, or
        ``(-1, pos)`` when no token is a prefix of ``data[pos:]``."""
        top = min(self._max_len, len(data) - pos)
        for length in range(top, 0, -1):
            tid = self._ids.get(data[pos : pos + length])
            if tid is not None:
                return tid, pos + length
        return -1, pos

    def matches_at(self, data: bytes, pos: int):
        """All tokens matching at ``pos`` as ``(token_id, end)`` pairs,
        shortest first."""
        out = []
        top = min(self._max_len, len(data) - pos)
        for length in range(1, top + 1):
            tid = self._ids.get(data[pos : pos + length])
            if tid is not None:
                out.append((tid, pos + length))
        return out

    def tokenize_ids(self, data: bytes):
        """Greedy tokenization.  Returns ``(ids, fail_pos)`` with
        ``fail_pos == -1`` on success, else the stuck byte offset."""
        ids = []
        pos = 0
        n = len(data)
        while pos < n:
            tid, end = self.longest_match(data, pos)
            if tid < 0:
                return ids, pos
            ids.append(tid)
            pos = end
        return ids, -1

    def has_token_with_prefix(self, data: bytes, pos: int) -> bool:
        """True iff some token text starts with ``data[pos:]`` (an empty
        remainder is trivially a prefix)."""
        prefix = data[pos:]
        if not prefix:
            return True
        i = bisect.bisect_left(self._sorted, prefix)
        return i < len(self._sorted) and self._sorted[i].startswith(prefix)

    def count_compositions(self, data: bytes, max_parts: int, op_budget: int):
        """Number of ways ``data`` equals a concatenation of 1..``max_parts``
        tokens.

        Returns ``(count, ops, exceeded)``.  ``ops`` counts position visits
        plus considered matches; when it would pass ``op_budget``, or any
        partial count passes ``COUNT_CAP``, ``exceeded`` is True and the
        count is not exact.
        """
        n = len(data)
        if max_parts > n:
            max_parts = n
        if n == 0 or max_parts <= 0:
            return 0, 0, False
        # ways[pos][k]: tilings of data[pos:] with exactly k tokens
        ways = [[0] * (max_parts + 1) for _ in range(n + 1)]
        ways[n][0] = 1
        ops = 0
        saturated = False
        for pos in range(n - 1, -1, -1):
            ops += 1
            if ops > op_budget:
                return 0, ops, True
            row = ways[pos]
            top = min(self._max_len, n - pos)
            for length in range(1, top + 1):
                if data[pos : pos + length] not in self._ids:
                    continue
                ops += 1
                if ops > op_budget:
                    return 0, ops, True
                nxt = ways[pos + length]
                for k in range(1, max_parts + 1):
                    w = nxt[k - 1]
                    if w:
                        row[k] += w
                        if row[k] > COUNT_CAP:
                            row[k] = COUNT_CAP
                            saturated = True
        count = 0
        for k in range(1, max_parts + 1):
            count += ways[0][k]
            if count > COUNT_CAP:
                count = COUNT_CAP
                saturated = True
        return count, ops, saturated
