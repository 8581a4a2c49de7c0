"""Token-level speculative decoding with a shared rejection verifier.

One step drafts ``i`` tokens from the drafter, verifies them left to right
against the target, and finishes with a single extra draw: the normalized
residual at the first rejection, or a bonus target token when everything
was accepted.  Heterogeneous vocabularies are handled by projecting the
drafter into an engine index space first — the union of the two
vocabularies (drafts outside the target then carry zero target mass and
always reject) or the target space with the drafter renormalized onto the
shared tokens.

Draw-order contract, relied on by trace comparisons: the ``i`` draft picks
in step order, then all ``i`` acceptance uniforms in token order, then
exactly one final pick (residual or bonus).  A step degenerating to
target-only sampling consumes a single pick.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateResidual,
    EmptyIntersectionMass,
    InvalidDraft,
    VocabularyError,
)
from .lm import ConditionalModel, SeededSampler, Temperature, distribution
from .vocab import Vocabulary

RESIDUAL_EPS = 1e-12


def verify_token(
    p_vec: np.ndarray, q_vec: np.ndarray, draft: int, u: float
) -> bool:
    """Accept the drafted token iff ``u <= min(1, p/q)``."""
    q = float(q_vec[draft])
    if q <= 0.0:
        raise InvalidDraft(f"draft token {draft} has zero drafter probability")
    p = float(p_vec[draft])
    if p <= 0.0:
        return False
    return u <= min(1.0, p / q)


def residual_distribution(p_vec: np.ndarray, q_vec: np.ndarray) -> np.ndarray:
    """The normalized leftover (p - min(p, q)) / (1 - sum min(p, q))."""
    p = np.asarray(p_vec, dtype=np.float64)
    q = np.asarray(q_vec, dtype=np.float64)
    overlap = np.minimum(p, q)
    denom = 1.0 - float(overlap.sum())
    if denom < RESIDUAL_EPS:
        raise DegenerateResidual(
            "residual undefined: distributions overlap completely"
        )
    return (p - overlap) / denom


def residual_sample(
    p_vec: np.ndarray, q_vec: np.ndarray, sampler: SeededSampler
) -> int:
    return sampler.pick(residual_distribution(p_vec, q_vec))


@dataclass(frozen=True)
class DraftBatch:
    """The drafted tokens of one step, with the distributions they came
    from (engine index space)."""

    draft_ids: tuple[int, ...]
    draft_dists: tuple[np.ndarray, ...]
    lookahead_i: int

    def __post_init__(self):
        if not (len(self.draft_ids) == len(self.draft_dists) == self.lookahead_i):
            raise VocabularyError("draft batch lengths disagree")


@dataclass(frozen=True)
class VerificationOutcome:
    """Result of one step.

    ``accepted`` holds the surviving draft ids and, when every draft
    survived, the bonus token as its last element.  On a rejection at
    position ``rejected_at`` (1-based), ``accepted`` has the first
    ``rejected_at - 1`` drafts and ``residual_token`` the replacement.
    ``degenerate`` marks a step that fell back to a single target sample
    because the drafter had nothing to propose.
    """

    accepted: tuple[int, ...]
    rejected_at: int | None
    residual_token: int | None
    per_step_accept_flags: tuple[bool, ...]
    batch: DraftBatch
    degenerate: bool = False

    @property
    def emitted_ids(self) -> tuple[int, ...]:
        if self.residual_token is None:
            return self.accepted
        return self.accepted + (self.residual_token,)

    def to_record(self) -> dict:
        return {
            "drafts": list(self.batch.draft_ids),
            "flags": list(self.per_step_accept_flags),
            "emitted": list(self.emitted_ids),
            "rejected_at": self.rejected_at,
            "residual": self.residual_token,
            "degenerate": self.degenerate,
        }


class ProjectedDrafter:
    """A drafter lifted into the engine index space of a target vocabulary.

    Modes:

    ``identity``
        Drafter and target share one vocabulary; ids pass through.
    ``union``
        Engine space is the target texts followed by the drafter-only
        texts (drafter order).  The drafter keeps its full mass; the
        target is padded with zeros over the drafter-only block.
    ``intersection``
        Engine space is the target's.  The drafter is renormalized onto
        the shared token texts; a context giving those zero mass raises
        EmptyIntersectionMass.

    Correspondence between vocabularies is always by token text, never by
    id.  For conditioning, the drafter re-reads the engine context as
    text and encodes the longest suffix its own vocabulary can express;
    the target does the same only when the context contains drafter-only
    tokens (otherwise the engine context ids already are target ids).
    """

    def __init__(
        self, base: ConditionalModel, mode: str, target_vocab: Vocabulary
    ):
        if mode not in ("identity", "union", "intersection"):
            raise VocabularyError(f"unknown projection mode {mode!r}")
        self.base = base
        self.mode = mode
        self.target_vocab = target_vocab
        self.target_size = len(target_vocab)
        draft_vocab = base.vocab

        if mode == "identity":
            if draft_vocab != target_vocab:
                raise VocabularyError(
                    "identity projection needs identical vocabularies"
                )
            self.engine_texts = target_vocab.texts
            return

        target_set = set(target_vocab.texts)
        self.shared_texts = frozenset(target_set & set(draft_vocab.texts))
        if mode == "union":
            extra = tuple(t for t in draft_vocab.texts if t not in target_set)
            self.engine_texts = target_vocab.texts + extra
            engine_id = {t: i for i, t in enumerate(self.engine_texts)}
            self._draft_engine_ids = np.array(
                [engine_id[t] for t in draft_vocab.texts], dtype=np.int64
            )
        else:
            if not self.shared_texts:
                raise EmptyIntersectionMass(
                    "target and drafter vocabularies share no token texts"
                )
            self.engine_texts = target_vocab.texts
            pairs = [
                (tok.id, draft_vocab.id_of(tok.text))
                for tok in target_vocab.tokens
                if tok.text in self.shared_texts
            ]
            self._shared_target_ids = np.array([a for a, _ in pairs], dtype=np.int64)
            self._shared_draft_ids = np.array([b for _, b in pairs], dtype=np.int64)

    # -- context translation

    def _decode_engine(self, context: Sequence[int]) -> bytes:
        return b"".join(self.engine_texts[i] for i in context)

    def base_context(self, context: Sequence[int]) -> list[int]:
        if self.mode == "identity":
            return list(context)
        ids, _ = self.base.vocab.encode_suffix(self._decode_engine(context))
        return ids

    def target_context(self, context: Sequence[int]) -> list[int]:
        if self.mode != "union" or all(i < self.target_size for i in context):
            return list(context)
        ids, _ = self.target_vocab.encode_suffix(self._decode_engine(context))
        return ids

    # -- distributions in engine space

    def probs(
        self, context: Sequence[int], temp: Temperature | None = None
    ) -> np.ndarray:
        q = distribution(self.base, self.base_context(context), temp)
        if self.mode == "identity":
            return q
        if self.mode == "union":
            out = np.zeros(len(self.engine_texts))
            out[self._draft_engine_ids] = q
            return out
        mass = float(q[self._shared_draft_ids].sum())
        if mass <= 0.0:
            raise EmptyIntersectionMass(
                "drafter puts no mass on shared tokens in this context"
            )
        out = np.zeros(self.target_size)
        out[self._shared_target_ids] = q[self._shared_draft_ids] / mass
        return out

    def project_target(self, p_vec: np.ndarray) -> np.ndarray:
        """Lift a target distribution into the engine space (zero mass on
        drafter-only tokens)."""
        if self.mode != "union":
            return np.asarray(p_vec, dtype=np.float64)
        out = np.zeros(len(self.engine_texts))
        out[: self.target_size] = p_vec
        return out


def project_union(
    drafter: ConditionalModel, target_vocab: Vocabulary
) -> ProjectedDrafter:
    return ProjectedDrafter(drafter, "union", target_vocab)


def project_intersection(
    drafter: ConditionalModel, target_vocab: Vocabulary
) -> ProjectedDrafter:
    return ProjectedDrafter(drafter, "intersection", target_vocab)


def as_projected(
    drafter: ConditionalModel | ProjectedDrafter, target_vocab: Vocabulary
) -> ProjectedDrafter:
    if isinstance(drafter, ProjectedDrafter):
        if drafter.target_vocab != target_vocab:
            raise VocabularyError("projection targets a different vocabulary")
        return drafter
    return ProjectedDrafter(drafter, "identity", target_vocab)


def sd_step(
    target: ConditionalModel,
    drafter: ConditionalModel | ProjectedDrafter,
    context: Sequence[int],
    lookahead: int,
    sampler: SeededSampler,
    target_temp: Temperature | None = None,
    draft_temp: Temperature | None = None,
) -> VerificationOutcome:
    """One draft-verify round; emits between 1 and ``lookahead + 1`` ids.

    Emitted ids always lie in the target block of the engine space (a
    drafter-only token has zero target mass and cannot be accepted), so
    they can be decoded with the target vocabulary directly.  If the
    drafter runs dry mid-draft (intersection mode), the batch is truncated
    to what was drawn; if it runs dry immediately, the step degenerates to
    one target sample.
    """
    if lookahead < 1:
        raise VocabularyError("lookahead must be >= 1")
    proj = as_projected(drafter, target.vocab)
    ctx = [int(c) for c in context]

    draft_ids: list[int] = []
    draft_dists: list[np.ndarray] = []
    degenerate = False
    for _ in range(lookahead):
        try:
            q_vec = proj.probs(ctx + draft_ids, draft_temp)
        except EmptyIntersectionMass:
            degenerate = not draft_ids
            break
        draft_ids.append(sampler.pick(q_vec))
        draft_dists.append(q_vec)

    def target_at(engine_ctx: list[int]) -> np.ndarray:
        p = distribution(target, proj.target_context(engine_ctx), target_temp)
        return proj.project_target(p)

    if degenerate:
        token = sampler.pick(target_at(ctx))
        return VerificationOutcome(
            accepted=(token,),
            rejected_at=None,
            residual_token=None,
            per_step_accept_flags=(),
            batch=DraftBatch((), (), 0),
            degenerate=True,
        )

    i = len(draft_ids)
    batch = DraftBatch(tuple(draft_ids), tuple(draft_dists), i)
    accept_us = [sampler.uniform() for _ in range(i)]

    accepted: list[int] = []
    flags: list[bool] = []
    rejected_at: int | None = None
    residual_token: int | None = None
    for j in range(i):
        p_vec = target_at(ctx + draft_ids[:j])
        ok = verify_token(p_vec, draft_dists[j], draft_ids[j], accept_us[j])
        flags.append(ok)
        if not ok:
            rejected_at = j + 1
            residual_token = sampler.pick(
                residual_distribution(p_vec, draft_dists[j])
            )
            break
        accepted.append(draft_ids[j])
    else:
        accepted.append(sampler.pick(target_at(ctx + draft_ids)))

    return VerificationOutcome(
        accepted=tuple(accepted),
        rejected_at=rejected_at,
        residual_token=residual_token,
        per_step_accept_flags=tuple(flags),
        batch=batch,
    )
