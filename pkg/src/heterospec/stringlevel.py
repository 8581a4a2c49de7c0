"""String-level speculative decoding across mismatched tokenizers.

Two families live here.  Exact-match verification re-tokenizes the
drafted text under the target vocabulary and keeps the longest prefix of
target samples that reproduces it, with context realignment absorbing
boundary re-tokenization (a dropped or merged id never touches emitted
text).  Rejection sampling instead treats the drafted text's first target
token as a proposal from the first-token distribution of the halted
drafting process, and accepts or resamples exactly like the token-level
verifier — :func:`compute_first_token_table` builds that distribution by
memoized depth-first expansion of draft sequences.

Halting is a :class:`LookaheadPolicy`: a fixed number of drafts, the
precomputed worst-case bound of :func:`compute_max_lookahead`, or early
stopping once the first target token can no longer change.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import DraftBatch, VerificationOutcome, residual_distribution
from .errors import (
    ExpansionBudgetExceeded,
    InvalidDraft,
    RealignmentFailure,
    SearchBudgetExceeded,
    TokenizationFailure,
    VocabularyError,
)
from .lm import ConditionalModel, SeededSampler, Temperature, distribution
from .vocab import TextCodec, Vocabulary, is_expressible

NODE_BUDGET_DEFAULT = 10**6
_BUDGET_ENV = "HETEROSPEC_BUDGET"

# How far past the lookbehind window realignment scans the fresh ids; covers
# re-tokenization length drift plus the tokens emitted since the last splice.
_REALIGN_SLACK = 8

_SEQUENCE_HARD_CAP = 10_000


def default_node_budget() -> int:
    raw = os.environ.get(_BUDGET_ENV, "").strip()
    return int(raw) if raw else NODE_BUDGET_DEFAULT


# --- first-token determination ----------------------------------------------


def _draft_prefix_reachable(remainder: bytes, draft_vocab: Vocabulary) -> bool:
    """Can some concatenation of draft tokens start with ``remainder``?"""
    todo = [0]
    seen: set[int] = set()
    while todo:
        pos = todo.pop()
        if pos in seen:
            continue
        seen.add(pos)
        if draft_vocab.has_token_with_prefix(remainder, pos):
            return True
        for _, end in draft_vocab.matches_at(remainder, pos):
            if end == len(remainder):
                return True
            todo.append(end)
    return False


def first_token_settled(
    concat: bytes, target_vocab: Vocabulary, draft_vocab: Vocabulary
) -> bool:
    """True when no draft continuation can change the first target token.

    The first token of ``concat`` is its longest target-token prefix; an
    extension changes it only by completing a longer target token that
    starts with the whole of ``concat``.  So the test walks the target
    tokens extending ``concat`` and asks whether any of their remainders
    is reachable as a prefix of drafted text.
    """
    if not concat:
        return False
    for tok in target_vocab.longer_tokens_with_prefix(concat):
        if _draft_prefix_reachable(tok.text[len(concat):], draft_vocab):
            return False
    return True


def compute_max_lookahead(
    draft_vocab: Vocabulary,
    target_vocab: Vocabulary,
    node_budget: int | None = None,
) -> int:
    """Worst-case number of drafts before the first target token settles.

    Recursively, an unsettled concatenation needs one draft plus whatever
    its worst single-draft extension still needs.  Unsettled states are
    proper prefixes of target tokens, so the memoized search space is
    tiny; ``node_budget`` still guards pathological vocabularies.
    """
    budget = default_node_budget() if node_budget is None else node_budget
    memo: dict[bytes, int] = {}
    nodes = 0

    def depth_needed(concat: bytes) -> int:
        nonlocal nodes
        if concat in memo:
            return memo[concat]
        nodes += 1
        if nodes > budget:
            raise SearchBudgetExceeded(
                f"lookahead search exceeded {budget} nodes", budget=budget
            )
        if first_token_settled(concat, target_vocab, draft_vocab):
            memo[concat] = 0
            return 0
        worst = max(depth_needed(concat + t) for t in draft_vocab.texts)
        memo[concat] = 1 + worst
        return 1 + worst

    return depth_needed(b"")


# --- lookahead policies ------------------------------------------------------

POLICY_KINDS = ("fixed_n", "n_max", "early_stop")


@dataclass(frozen=True)
class LookaheadPolicy:
    """When the drafting process stops.

    ``fixed_n`` always drafts ``n`` tokens; ``n_max`` drafts the
    precomputed worst case of :func:`compute_max_lookahead`; ``early_stop``
    stops as soon as the first target token is settled (``n``, if given,
    is a hard cap).  At least one token is always drafted.
    """

    kind: str = "early_stop"
    n: int | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise VocabularyError(f"unknown lookahead policy {self.kind!r}")
        if self.kind == "fixed_n" and (self.n is None or self.n < 1):
            raise VocabularyError("fixed_n policy needs n >= 1")
        if self.n is not None and self.n < 1:
            raise VocabularyError("lookahead cap must be >= 1")

    def resolve(
        self,
        target_vocab: Vocabulary,
        draft_vocab: Vocabulary,
        node_budget: int | None = None,
    ) -> "ResolvedPolicy":
        if self.kind == "n_max":
            horizon = compute_max_lookahead(draft_vocab, target_vocab, node_budget)
        else:
            horizon = self.n
        return ResolvedPolicy(self.kind, horizon, target_vocab, draft_vocab)


@dataclass(frozen=True)
class ResolvedPolicy:
    kind: str
    horizon: int | None
    target_vocab: Vocabulary
    draft_vocab: Vocabulary

    def halts(self, concat: bytes, depth: int) -> bool:
        """Consulted after each draft (depth >= 1)."""
        if self.horizon is not None and depth >= self.horizon:
            return True
        if self.kind == "early_stop":
            return first_token_settled(concat, self.target_vocab, self.draft_vocab)
        return False


def _as_resolved(
    policy: "LookaheadPolicy | ResolvedPolicy",
    target_vocab: Vocabulary,
    draft_vocab: Vocabulary,
    node_budget: int | None,
) -> ResolvedPolicy:
    if isinstance(policy, ResolvedPolicy):
        return policy
    return policy.resolve(target_vocab, draft_vocab, node_budget)


# --- first-token distribution of the halted drafting process -----------------


@dataclass(frozen=True)
class FirstTokenEntry:
    mass: float
    decomposition_count: int
    count_exact: bool = True


@dataclass(frozen=True)
class FirstTokenTable:
    """Distribution of the first target token produced by drafting.

    ``entries`` maps target token id to its probability mass and to the
    number of ways the token's text tiles from draft tokens.
    ``nodes_expanded`` counts distinct expanded states of the search.
    """

    context: tuple[int, ...]
    entries: dict[int, FirstTokenEntry]
    nodes_expanded: int
    target_vocab: Vocabulary

    def mass(self, token_id: int) -> float:
        entry = self.entries.get(token_id)
        return entry.mass if entry else 0.0

    def mass_vector(self) -> np.ndarray:
        out = np.zeros(len(self.target_vocab))
        for tid, entry in self.entries.items():
            out[tid] = entry.mass
        return out

    def total_mass(self) -> float:
        return float(sum(e.mass for e in self.entries.values()))

    def to_records(self) -> list[dict]:
        """JSON export rows: {"token_text", "psi", "count"}."""
        return [
            {
                "token_text": self.target_vocab.tokens[tid].text.decode(
                    "utf-8", "backslashreplace"
                ),
                "psi": self.entries[tid].mass,
                "count": self.entries[tid].decomposition_count,
            }
            for tid in sorted(self.entries)
        ]


def compute_first_token_table(
    drafter: ConditionalModel,
    drafter_context: Sequence[int],
    target_vocab: Vocabulary,
    policy: LookaheadPolicy | ResolvedPolicy,
    node_budget: int | None = None,
) -> FirstTokenTable:
    """Expand every positive-probability draft sequence until the policy
    halts it; each halted sequence hands its probability to the first
    target token of its concatenation.

    Memoization is keyed on (concatenation, drafter context tail, depth),
    which fully determines the remaining subtree; ``nodes_expanded``
    counts memo misses and is charged against the node budget.
    """
    budget = default_node_budget() if node_budget is None else node_budget
    resolved = _as_resolved(policy, target_vocab, drafter.vocab, node_budget)
    order = getattr(drafter, "order", None)
    draft_texts = drafter.vocab.texts
    memo: dict[tuple, dict[int, float]] = {}
    nodes = 0

    def tail(ctx: tuple[int, ...]) -> tuple[int, ...]:
        return ctx[-order:] if order is not None else ctx

    def expand(ctx: tuple[int, ...], concat: bytes, depth: int) -> dict[int, float]:
        nonlocal nodes
        key = (concat, tail(ctx), depth)
        hit = memo.get(key)
        if hit is not None:
            return hit
        nodes += 1
        if nodes > budget:
            raise ExpansionBudgetExceeded(
                f"first-token expansion exceeded {budget} nodes", budget=budget
            )
        if depth >= 1 and resolved.halts(concat, depth):
            first = target_vocab.first_token(concat)
            if first is None:
                raise TokenizationFailure(
                    f"drafted text {concat!r} has no target-token prefix", 0
                )
            out = {first.id: 1.0}
        else:
            q = drafter.probs(list(ctx))
            out = {}
            for d in np.flatnonzero(q > 0):
                d = int(d)
                sub = expand(ctx + (d,), concat + draft_texts[d], depth + 1)
                w = float(q[d])
                for tid, mass in sub.items():
                    out[tid] = out.get(tid, 0.0) + w * mass
        memo[key] = out
        return out

    masses = expand(tuple(int(i) for i in drafter_context), b"", 0)
    entries = {}
    for tid, mass in masses.items():
        count, exceeded = drafter.vocab.count_compositions(
            target_vocab.tokens[tid].text, op_budget=budget
        )
        entries[tid] = FirstTokenEntry(mass, count, not exceeded)
    return FirstTokenTable(
        context=tuple(int(i) for i in drafter_context),
        entries=entries,
        nodes_expanded=nodes,
        target_vocab=target_vocab,
    )


# --- realignment and caching -------------------------------------------------


@dataclass(frozen=True)
class RealignmentWindow:
    lookbehind: int = 5

    def __post_init__(self):
        if self.lookbehind < 0:
            raise VocabularyError("lookbehind must be >= 0")


def realign(
    old_ids: Sequence[int],
    new_ids: Sequence[int],
    window: RealignmentWindow | int = RealignmentWindow(),
) -> tuple[int, int]:
    """Splice points ``(k, k')``: keep ``old[:k]``, append ``new[k':]``.

    Scans the last ``lookbehind`` ids of ``old`` against the tail of
    ``new`` for the longest contiguous run of equal ids (earliest such run
    on ties) and splices right after it.  Identical sequences splice at
    their ends, appending nothing; no overlap at all raises
    RealignmentFailure.  The splice moves only model-facing ids — callers
    never rewrite emitted text with it.
    """
    lookbehind = window.lookbehind if isinstance(window, RealignmentWindow) else window
    old = [int(i) for i in old_ids]
    new = [int(i) for i in new_ids]
    if not old:
        return 0, 0
    w = min(lookbehind, len(old)) if lookbehind else len(old)
    region_start = max(0, len(new) - w - _REALIGN_SLACK)
    best_len, best = 0, None
    for i0 in range(len(old) - w, len(old)):
        for j0 in range(region_start, len(new)):
            run = 0
            while (
                i0 + run < len(old)
                and j0 + run < len(new)
                and old[i0 + run] == new[j0 + run]
            ):
                run += 1
            if run > best_len:
                best_len, best = run, (i0, j0)
    if best is None:
        raise RealignmentFailure(
            f"no overlap between context tails within window {w}"
        )
    i0, j0 = best
    return i0 + best_len, j0 + best_len


@dataclass
class CacheEvent:
    reused: int
    truncated: bool
    size: int

    def to_record(self) -> dict:
        return {"reused": self.reused, "truncated": self.truncated, "size": self.size}


class PrefixCache:
    """Model-facing context cache: holds the id prefix whose state is
    reusable.  On update it reports how much of the old prefix survived;
    a splice that rewrote history shows up as a truncation."""

    def __init__(self):
        self.ids: list[int] = []

    def update(self, new_ids: Sequence[int]) -> CacheEvent:
        new_ids = [int(i) for i in new_ids]
        reused = 0
        for a, b in zip(self.ids, new_ids):
            if a != b:
                break
            reused += 1
        event = CacheEvent(
            reused=reused, truncated=reused < len(self.ids), size=len(new_ids)
        )
        self.ids = new_ids
        return event


# --- exact-match verification ------------------------------------------------


@dataclass(frozen=True)
class SlemStep:
    """One exact-match round: the re-tokenized proposal, the target
    samples it was checked against, and the contexts grown by the emitted
    ids."""

    outcome: VerificationOutcome
    proposal_ids: tuple[int, ...]
    target_sample_ids: tuple[int, ...]
    target_context: tuple[int, ...]
    drafter_context: tuple[int, ...]


def slem_step(
    target: ConditionalModel,
    drafter: ConditionalModel,
    target_context: Sequence[int],
    drafter_context: Sequence[int],
    lookahead: int,
    sampler: SeededSampler,
    target_temp: Temperature | None = None,
    draft_temp: Temperature | None = None,
) -> SlemStep:
    """Draft ``lookahead`` drafter tokens, re-tokenize their text into m
    target tokens, sample m+1 target tokens at the proposal-extended
    contexts, and keep the longest matching prefix plus one correction.

    Draw order: the draft picks, then all m+1 target picks.  Emits
    between 1 and m+1 ids: the matched prefix and, at the first mismatch
    position j, the target's own sample; with no mismatch the m+1-th
    sample rides along as a bonus.
    """
    if lookahead < 1:
        raise VocabularyError("lookahead must be >= 1")
    t_ctx = [int(i) for i in target_context]
    d_ctx = [int(i) for i in drafter_context]

    draft_ids: list[int] = []
    draft_dists: list[np.ndarray] = []
    for _ in range(lookahead):
        q_vec = distribution(drafter, d_ctx + draft_ids, draft_temp)
        draft_ids.append(sampler.pick(q_vec))
        draft_dists.append(q_vec)
    concat = drafter.vocab.decode(draft_ids)

    proposal = target.vocab.encode(concat)  # TokenizationFailure propagates
    m = len(proposal)
    samples = [
        sampler.pick(distribution(target, t_ctx + proposal[:k], target_temp))
        for k in range(m + 1)
    ]

    flags: list[bool] = []
    rejected_at: int | None = None
    residual_token: int | None = None
    accepted: list[int] = []
    for j in range(m):
        ok = samples[j] == proposal[j]
        flags.append(ok)
        if not ok:
            rejected_at = j + 1
            residual_token = samples[j]
            break
        accepted.append(proposal[j])
    else:
        accepted.append(samples[m])

    outcome = VerificationOutcome(
        accepted=tuple(accepted),
        rejected_at=rejected_at,
        residual_token=residual_token,
        per_step_accept_flags=tuple(flags),
        batch=DraftBatch(tuple(draft_ids), tuple(draft_dists), lookahead),
    )
    emitted = list(outcome.emitted_ids)
    return SlemStep(
        outcome=outcome,
        proposal_ids=tuple(proposal),
        target_sample_ids=tuple(samples),
        target_context=tuple(t_ctx + emitted),
        drafter_context=tuple(d_ctx),
    )


class SlemEngine:
    """Multi-step exact-match decoding with normalizers, realignment and
    prefix caches.

    The engine owns the emitted byte string; model-facing contexts are
    rebuilt each step by normalizing and re-tokenizing it, then spliced
    onto the previous context with :func:`realign` so the caches keep
    their longest valid prefix.  Emitted text is never rewritten.
    """

    def __init__(
        self,
        target: ConditionalModel,
        drafter: ConditionalModel,
        prompt: bytes | str,
        sampler: SeededSampler,
        lookahead: int = 2,
        target_codec: TextCodec | None = None,
        drafter_codec: TextCodec | None = None,
        window: RealignmentWindow = RealignmentWindow(),
        target_temp: Temperature | None = None,
        draft_temp: Temperature | None = None,
    ):
        if not (is_expressible(target.vocab, drafter.vocab)
                and is_expressible(drafter.vocab, target.vocab)):
            raise VocabularyError(
                "exact-match decoding needs mutually expressible vocabularies"
            )
        self.target = target
        self.drafter = drafter
        self.sampler = sampler
        self.lookahead = lookahead
        self.window = window
        self.target_temp = target_temp
        self.draft_temp = draft_temp
        self.target_codec = target_codec or TextCodec(target.vocab)
        self.drafter_codec = drafter_codec or TextCodec(drafter.vocab)
        self.text = prompt.encode("utf-8") if isinstance(prompt, str) else bytes(prompt)
        self.emitted_ids: list[int] = []
        self.target_cache = PrefixCache()
        self.drafter_cache = PrefixCache()
        self.target_ctx = self._view(self.target_codec)
        self.drafter_ctx = self._view(self.drafter_codec)
        self.target_cache.update(self.target_ctx)
        self.drafter_cache.update(self.drafter_ctx)

    def _view(self, codec: TextCodec) -> list[int]:
        ids, _ = codec.vocab.encode_suffix(codec.normalizer.apply(self.text))
        return ids

    def _resync(self, old: list[int], codec: TextCodec, cache: PrefixCache):
        fresh = self._view(codec)
        k, k2 = realign(old, fresh, self.window)
        spliced = old[:k] + fresh[k2:]
        return spliced, cache.update(spliced)

    def step(self) -> dict:
        st = slem_step(
            self.target,
            self.drafter,
            self.target_ctx,
            self.drafter_ctx,
            self.lookahead,
            self.sampler,
            self.target_temp,
            self.draft_temp,
        )
        emitted = list(st.outcome.emitted_ids)
        self.emitted_ids.extend(emitted)
        self.text += self.target.vocab.decode(emitted)
        self.target_ctx, t_event = self._resync(
            self.target_ctx, self.target_codec, self.target_cache
        )
        self.drafter_ctx, d_event = self._resync(
            self.drafter_ctx, self.drafter_codec, self.drafter_cache
        )
        record = st.outcome.to_record()
        record["proposal"] = list(st.proposal_ids)
        record["target_samples"] = list(st.target_sample_ids)
        record["cache"] = {
            "target": t_event.to_record(),
            "drafter": d_event.to_record(),
        }
        return record


# --- first-token rejection sampling ------------------------------------------


@dataclass(frozen=True)
class SlrsProposal:
    draft_ids: tuple[int, ...]
    concat: bytes
    first_token_id: int


@dataclass(frozen=True)
class SlrsVerdict:
    token: int
    accepted: bool


def sample_draft_sequence(
    drafter: ConditionalModel,
    drafter_context: Sequence[int],
    target_vocab: Vocabulary,
    policy: ResolvedPolicy,
    sampler: SeededSampler,
) -> SlrsProposal:
    """Draft until the policy halts and report the first target token of
    the concatenation.  Mirrors the expansion of
    :func:`compute_first_token_table` draw for draw."""
    ctx = [int(i) for i in drafter_context]
    ids: list[int] = []
    concat = b""
    while not (ids and policy.halts(concat, len(ids))):
        if len(ids) >= _SEQUENCE_HARD_CAP:
            raise SearchBudgetExceeded(
                f"drafting did not halt within {_SEQUENCE_HARD_CAP} tokens",
                budget=_SEQUENCE_HARD_CAP,
            )
        d = sampler.pick(drafter.probs(ctx + ids))
        ids.append(d)
        concat += drafter.vocab.tokens[d].text
    first = target_vocab.first_token(concat)
    if first is None:
        raise TokenizationFailure(
            f"drafted text {concat!r} has no target-token prefix", 0
        )
    return SlrsProposal(tuple(ids), concat, first.id)


def slrs_verify(
    target_dist: np.ndarray,
    table: FirstTokenTable,
    drafted_first_token: int,
    u: float,
    sampler: SeededSampler,
) -> SlrsVerdict:
    """Accept the proposed first token iff ``u <= min(1, p/mass)``; on
    rejection draw the replacement from the normalized leftover of the
    target against the first-token distribution."""
    p = np.asarray(target_dist, dtype=np.float64)
    proposal_mass = table.mass(drafted_first_token)
    if proposal_mass <= 0.0:
        raise InvalidDraft(
            f"proposed token {drafted_first_token} has zero first-token mass"
        )
    pt = float(p[drafted_first_token])
    if pt > 0.0 and (pt >= proposal_mass or u <= pt / proposal_mass):
        return SlrsVerdict(drafted_first_token, True)
    token = sampler.pick(residual_distribution(p, table.mass_vector()))
    return SlrsVerdict(token, False)


class SlrsEngine:
    """Multi-step rejection-sampled decoding: one emitted token per round.

    Each round needs the first-token table for the drafter's current
    context; tables are cached per context key.  Draw order per round:
    the draft picks, one acceptance uniform, then one residual pick on
    rejection.  The drafter is used unshaped — the table and the
    proposals must follow the same law for the accept ratio to be valid.
    """

    def __init__(
        self,
        target: ConditionalModel,
        drafter: ConditionalModel,
        prompt: bytes | str,
        sampler: SeededSampler,
        policy: LookaheadPolicy = LookaheadPolicy("early_stop"),
        node_budget: int | None = None,
        target_temp: Temperature | None = None,
    ):
        if not (is_expressible(target.vocab, drafter.vocab)
                and is_expressible(drafter.vocab, target.vocab)):
            raise VocabularyError(
                "rejection-sampled decoding needs mutually expressible vocabularies"
            )
        self.target = target
        self.drafter = drafter
        self.sampler = sampler
        self.node_budget = node_budget
        self.target_temp = target_temp
        self.policy = policy.resolve(target.vocab, drafter.vocab, node_budget) \
            if isinstance(policy, LookaheadPolicy) else policy
        self.text = prompt.encode("utf-8") if isinstance(prompt, str) else bytes(prompt)
        self.emitted_ids: list[int] = []
        self.target_ctx, _ = target.vocab.encode_suffix(self.text)
        self.drafter_ctx, _ = drafter.vocab.encode_suffix(self.text)
        self._tables: dict[tuple[int, ...], FirstTokenTable] = {}

    def table_for(self, drafter_context: Sequence[int]) -> FirstTokenTable:
        key = tuple(int(i) for i in drafter_context)
        table = self._tables.get(key)
        if table is None:
            table = compute_first_token_table(
                self.drafter, key, self.target.vocab, self.policy, self.node_budget
            )
            self._tables[key] = table
        return table

    def step(self) -> dict:
        table = self.table_for(self.drafter_ctx)
        proposal = sample_draft_sequence(
            self.drafter, self.drafter_ctx, self.target.vocab, self.policy, self.sampler
        )
        p_vec = distribution(self.target, self.target_ctx, self.target_temp)
        u = self.sampler.uniform()
        verdict = slrs_verify(p_vec, table, proposal.first_token_id, u, self.sampler)
        self.emitted_ids.append(verdict.token)
        self.text += self.target.vocab.tokens[verdict.token].text
        self.target_ctx = self.target_ctx + [verdict.token]
        self.drafter_ctx, _ = self.drafter.vocab.encode_suffix(self.text)
        return {
            "drafts": list(proposal.draft_ids),
            "proposed_first": proposal.first_token_id,
            "accepted": verdict.accepted,
            "emitted": [verdict.token],
            "nodes_expanded": table.nodes_expanded,
        }
