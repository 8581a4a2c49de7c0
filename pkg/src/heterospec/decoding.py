"""End-to-end generation loops binding engines to text state.

One entry point, five algorithm tags.  Token-level runs (``sd``,
``union``, ``tli``) iterate draft-verify steps over a shared index space;
string-level runs delegate to the exact-match and rejection-sampling
engines.  The result carries the grown byte string, the emitted target
ids, and one trace record per step.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import (
    as_projected,
    project_intersection,
    project_union,
    sd_step,
)
from .errors import EmptyIntersectionMass, VocabularyError
from .lm import ConditionalModel, SeededSampler, Temperature, distribution
from .stringlevel import (
    LookaheadPolicy,
    RealignmentWindow,
    SlemEngine,
    SlrsEngine,
)
from .vocab import TextCodec

TOKEN_LEVEL = ("sd", "union", "tli")
STRING_LEVEL = ("slem", "slrs")


@dataclass(frozen=True)
class GenerationResult:
    text: bytes
    emitted_ids: tuple[int, ...]
    records: tuple[dict, ...]

    @property
    def steps(self) -> int:
        return len(self.records)


def generate(
    algorithm: str,
    target: ConditionalModel,
    drafter: ConditionalModel,
    prompt: bytes | str,
    n_tokens: int,
    sampler: SeededSampler,
    lookahead: int = 2,
    policy: LookaheadPolicy | None = None,
    window: RealignmentWindow = RealignmentWindow(),
    target_codec: TextCodec | None = None,
    drafter_codec: TextCodec | None = None,
    node_budget: int | None = None,
    target_temp: Temperature | None = None,
    draft_temp: Temperature | None = None,
) -> GenerationResult:
    """Emit at least ``n_tokens`` target tokens continuing ``prompt``.

    Steps are never cut short, so the result may run a few tokens past
    ``n_tokens``.  A renormalized-intersection run whose vocabularies
    share nothing degrades to plain target sampling (acceptance zero in
    the trace) rather than failing.
    """
    if n_tokens < 1:
        raise VocabularyError("n_tokens must be >= 1")
    prompt = prompt.encode("utf-8") if isinstance(prompt, str) else bytes(prompt)
    target_codec = target_codec or TextCodec(target.vocab)

    if algorithm in TOKEN_LEVEL:
        return _token_level(
            algorithm, target, drafter, prompt, n_tokens, sampler, lookahead,
            target_codec, target_temp, draft_temp,
        )
    if algorithm == "slem":
        eng = SlemEngine(
            target, drafter, prompt, sampler,
            lookahead=lookahead,
            target_codec=target_codec,
            drafter_codec=drafter_codec,
            window=window,
            target_temp=target_temp,
            draft_temp=draft_temp,
        )
    elif algorithm == "slrs":
        eng = SlrsEngine(
            target, drafter, prompt, sampler,
            policy=policy or LookaheadPolicy("early_stop"),
            node_budget=node_budget,
            target_temp=target_temp,
        )
    else:
        raise VocabularyError(f"unknown algorithm tag {algorithm!r}")

    records = []
    step = 0
    while len(eng.emitted_ids) < n_tokens:
        record = eng.step()
        record["step"] = step
        records.append(record)
        step += 1
    return GenerationResult(
        text=eng.text,
        emitted_ids=tuple(eng.emitted_ids),
        records=tuple(records),
    )


def _token_level(
    algorithm, target, drafter, prompt, n_tokens, sampler, lookahead,
    target_codec, target_temp, draft_temp,
) -> GenerationResult:
    vocab = target.vocab
    degenerate = False
    if algorithm == "sd":
        proj = as_projected(drafter, vocab)
    elif algorithm == "union":
        proj = project_union(drafter, vocab)
    else:
        try:
            proj = project_intersection(drafter, vocab)
        except EmptyIntersectionMass:
            proj, degenerate = None, True

    ctx, _ = vocab.encode_suffix(target_codec.normalizer.apply(prompt))
    emitted: list[int] = []
    records: list[dict] = []
    step = 0
    while len(emitted) < n_tokens:
        if degenerate:
            token = sampler.pick(distribution(target, ctx, target_temp))
            outcome_rec = {
                "drafts": [],
                "flags": [],
                "emitted": [token],
                "rejected_at": None,
                "residual": None,
                "degenerate": True,
            }
            new_ids = [token]
        else:
            outcome = sd_step(
                target, proj, ctx, lookahead, sampler, target_temp, draft_temp
            )
            outcome_rec = outcome.to_record()
            new_ids = list(outcome.emitted_ids)
        outcome_rec["step"] = step
        records.append(outcome_rec)
        emitted.extend(new_ids)
        ctx = ctx + new_ids
        step += 1
    return GenerationResult(
        text=prompt + vocab.decode(emitted),
        emitted_ids=tuple(emitted),
        records=tuple(records),
    )
