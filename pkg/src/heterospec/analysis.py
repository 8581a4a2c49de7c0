"""Acceptance-rate theory and its verification harness.

The module answers three questions about every algorithm: what acceptance
rate does the closed form predict, what distribution does the procedure
provably emit (by exhaustive enumeration of every stochastic branch on
desk-sized instances), and does a seeded Monte Carlo run agree with both.
It also houses the decomposition census and the abstract throughput model
that stand in for hardware benchmarks.

All randomized checks are deterministic given a master seed: instance
generation and each Monte Carlo replica draw from numbered streams of a
counter-based generator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import engine
from .engine import (
    ProjectedDrafter,
    project_intersection,
    project_union,
)
from .errors import (
    EmptyIntersectionMass,
    InstanceTooLarge,
    MissingFirstTokenTable,
    VocabularyError,
)
from .lm import TableModel
from .stringlevel import (
    FirstTokenTable,
    LookaheadPolicy,
    compute_first_token_table,
)
from .vocab import Vocabulary

ALGORITHMS = ("sd", "union", "tli", "slem", "slrs")

_EXACT_TOL = 1e-12


# --- instances ---------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    """A fully specified desk-scale experiment: one algorithm, two
    context-free table models, a lookahead, and (string-level only) a
    halting policy."""

    algorithm: str
    target: TableModel
    drafter: TableModel
    lookahead: int = 1
    policy: LookaheadPolicy | None = None
    label: str = ""

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise VocabularyError(f"unknown algorithm tag {self.algorithm!r}")
        if self.lookahead < 1:
            raise VocabularyError("lookahead must be >= 1")

    @property
    def target_vocab(self) -> Vocabulary:
        return self.target.vocab

    @property
    def draft_vocab(self) -> Vocabulary:
        return self.drafter.vocab

    def resolved_policy(self) -> LookaheadPolicy:
        """String-level halting rule; exact match drafts a fixed batch,
        rejection sampling stops when the first token settles."""
        if self.policy is not None:
            return self.policy
        if self.algorithm == "slem":
            return LookaheadPolicy("fixed_n", self.lookahead)
        return LookaheadPolicy("early_stop")

    def projection(self) -> ProjectedDrafter:
        if self.algorithm == "union":
            return project_union(self.drafter, self.target_vocab)
        if self.algorithm == "tli":
            return project_intersection(self.drafter, self.target_vocab)
        return ProjectedDrafter(self.drafter, "identity", self.target_vocab)


def _table(vocab: Vocabulary, probs: Sequence[float]) -> TableModel:
    return TableModel(vocab, 0, {(): probs})


def make_instance(
    algorithm: str,
    target_texts: Sequence[str],
    p: Sequence[float],
    draft_texts: Sequence[str],
    q: Sequence[float],
    lookahead: int = 1,
    policy: LookaheadPolicy | None = None,
    label: str = "",
) -> Instance:
    tv = Vocabulary(target_texts)
    dv = tv if list(draft_texts) == list(target_texts) else Vocabulary(draft_texts)
    return Instance(
        algorithm, _table(tv, p), _table(dv, q), lookahead, policy, label
    )


def bundled_suite() -> list[Instance]:
    """Hand-picked small instances covering every algorithm's branches:
    homogeneous and heterogeneous pairs, disjoint vocabularies, an empty
    shared-mass degenerate case, and identical-model setups."""
    inst = make_instance
    return [
        inst("sd", "ab", (0.7, 0.3), "ab", (0.4, 0.6), 1, label="sd-2tok"),
        inst("sd", "abc", (0.5, 0.3, 0.2), "abc", (0.2, 0.2, 0.6), 2,
             label="sd-3tok-i2"),
        inst("sd", "ab", (0.25, 0.75), "ab", (0.25, 0.75), 2,
             label="sd-identical-models"),
        inst("sd", "abcd", (0.4, 0.3, 0.2, 0.1), "abcd", (0.1, 0.2, 0.3, 0.4),
             2, label="sd-4tok"),
        inst("union", ["a"], (1.0,), ["b"], (1.0,), 1, label="union-disjoint"),
        inst("union", "ab", (0.6, 0.4), "bc", (0.5, 0.5), 1,
             label="union-partial-overlap"),
        inst("union", "ab", (0.3, 0.7), "ab", (0.6, 0.4), 2,
             label="union-same-texts"),
        inst("union", "abc", (0.5, 0.25, 0.25), "bcd", (0.2, 0.3, 0.5), 2,
             label="union-3x3"),
        inst("tli", "ab", (0.6, 0.4), "abc", (1 / 3, 1 / 3, 1 / 3), 1,
             label="tli-uniform-drafter"),
        inst("tli", "abc", (0.2, 0.5, 0.3), "ab", (0.9, 0.1), 2,
             label="tli-narrow-drafter"),
        inst("tli", "ab", (0.8, 0.2), "abc", (0.05, 0.05, 0.9), 1,
             label="tli-thin-shared-mass"),
        inst("tli", "ab", (0.5, 0.5), "abc", (0.0, 0.0, 1.0), 1,
             label="tli-empty-shared-mass"),
        inst("slem", "ab", (0.5, 0.5), "ab", (0.5, 0.5), 1,
             label="slem-identical-uniform"),
        inst("slem", "ab", (0.7, 0.3), "ab", (0.7, 0.3), 2,
             label="slem-identical-skewed"),
        inst("slem", ["a"], (1.0,), ["a", "aa"], (0.6, 0.4), 2,
             label="slem-single-vs-compound"),
        inst("slem", ["a", "b", "ab"], (0.5, 0.3, 0.2), ["a", "b"], (0.4, 0.6),
             2, label="slem-merging-target"),
        inst("slrs", "ab", (0.3, 0.7), "ab", (0.3, 0.7), 1,
             label="slrs-proposal-equals-target"),
        inst("slrs", "ab", (0.6, 0.4), "ab", (0.2, 0.8), 1,
             label="slrs-homogeneous"),
        inst("slrs", ["a", "b", "ab"], (0.4, 0.3, 0.3), ["a", "b"], (0.55, 0.45),
             1, label="slrs-merging-target"),
        inst("slrs", ["a", "b"], (0.5, 0.5), ["a", "b", "ab"], (0.3, 0.3, 0.4),
             1, label="slrs-compound-drafter"),
    ]


def random_instance(
    algorithm: str,
    rng: np.random.Generator,
    max_vocab: int = 4,
    max_lookahead: int = 2,
) -> Instance:
    """A random desk-scale instance of the given algorithm.

    Token-level pairs draw their texts from a small pool (union may come
    out disjoint; the renormalized drafter always keeps at least one
    shared text).  String-level pairs share the single-symbol alphabet so
    both directions of expressibility hold by construction.
    """
    lookahead = int(rng.integers(1, max_lookahead + 1))

    def probs(n: int) -> np.ndarray:
        return rng.dirichlet(np.ones(n))

    if algorithm == "sd":
        pool = ["a", "b", "c", "d"]
        size = int(rng.integers(2, max_vocab + 1))
        texts = list(rng.choice(pool, size=size, replace=False))
        return make_instance(
            algorithm, texts, probs(size), texts, probs(size), lookahead
        )

    if algorithm in ("union", "tli"):
        pool = ["a", "b", "c", "d", "ab", "cd"]
        t_size = int(rng.integers(1 if algorithm == "union" else 2, max_vocab + 1))
        d_size = int(rng.integers(1, max_vocab + 1))
        while True:
            t_texts = list(rng.choice(pool, size=t_size, replace=False))
            d_texts = list(rng.choice(pool, size=d_size, replace=False))
            if algorithm == "union" or set(t_texts) & set(d_texts):
                break
        return make_instance(
            algorithm, t_texts, probs(t_size), d_texts, probs(d_size), lookahead
        )

    # string-level: both vocabularies contain the alphabet, plus extras
    extras = ["aa", "ab", "ba", "bb"]
    base = ["a", "b"]

    def expressible_texts() -> list[str]:
        n_extra = int(rng.integers(0, min(2, max_vocab - 2) + 1))
        chosen = list(rng.choice(extras, size=n_extra, replace=False))
        return base + chosen

    t_texts = expressible_texts()
    d_texts = expressible_texts()
    return make_instance(
        algorithm, t_texts, probs(len(t_texts)), d_texts, probs(len(d_texts)),
        lookahead,
    )


# --- closed-form acceptance rates --------------------------------------------


def _shared_texts(a: Vocabulary, b: Vocabulary) -> list[bytes]:
    return [t for t in a.texts if t in set(b.texts)]


def closed_form_alpha(
    algorithm: str,
    p_vec: np.ndarray,
    q_vec: np.ndarray,
    target_vocab: Vocabulary,
    draft_vocab: Vocabulary,
    table: FirstTokenTable | None = None,
) -> float:
    """Evaluate the predicted per-token acceptance rate.

    Homogeneous: sum of min(p, q).  Union: the same sum restricted to
    shared texts.  Renormalized intersection: min(p, q / shared mass)
    over shared texts, zero when the drafter has no shared mass.  Exact
    match: sum of p times first-token mass.  Rejection sampling: sum of
    min(p, first-token mass).  The last two need a first-token table.
    """
    p = np.asarray(p_vec, dtype=np.float64)
    q = np.asarray(q_vec, dtype=np.float64)
    if algorithm == "sd":
        if target_vocab != draft_vocab:
            raise VocabularyError("homogeneous rate needs identical vocabularies")
        return float(np.minimum(p, q).sum())
    if algorithm in ("union", "tli"):
        shared = _shared_texts(target_vocab, draft_vocab)
        if algorithm == "union":
            return float(
                sum(
                    min(p[target_vocab.id_of(t)], q[draft_vocab.id_of(t)])
                    for t in shared
                )
            )
        mass = sum(float(q[draft_vocab.id_of(t)]) for t in shared)
        if mass <= 0.0:
            return 0.0
        return float(
            sum(
                min(p[target_vocab.id_of(t)], q[draft_vocab.id_of(t)] / mass)
                for t in shared
            )
        )
    if algorithm in ("slem", "slrs"):
        if table is None:
            raise MissingFirstTokenTable(
                f"{algorithm} rate needs a first-token table"
            )
        psi = table.mass_vector()
        if algorithm == "slem":
            return float((p * psi).sum())
        return float(np.minimum(p, psi).sum())
    raise VocabularyError(f"unknown algorithm tag {algorithm!r}")


def instance_alpha(instance: Instance, node_budget: int | None = None) -> float:
    """Closed-form acceptance rate of an instance, building the
    first-token table on demand for string-level algorithms."""
    p = instance.target.probs(())
    q = instance.drafter.probs(())
    table = None
    if instance.algorithm in ("slem", "slrs"):
        table = compute_first_token_table(
            instance.drafter,
            (),
            instance.target_vocab,
            instance.resolved_policy(),
            node_budget,
        )
    return closed_form_alpha(
        instance.algorithm,
        p,
        q,
        instance.target_vocab,
        instance.draft_vocab,
        table,
    )


# --- exact enumeration oracle ------------------------------------------------


class EnumerationOracle:
    """Exact first-emitted-token distribution by summing every branch.

    The acceptance and residual arithmetic is spelled out inline, so the
    oracle shares no verification code with the engines; only the
    projected distributions themselves are taken from the implementation
    under test.  Instances beyond the size bounds raise InstanceTooLarge.
    """

    def __init__(self, max_vocab: int = 4, max_lookahead: int = 2):
        self.max_vocab = max_vocab
        self.max_lookahead = max_lookahead
        self._node_cap = 10**6

    def _check(self, instance: Instance) -> None:
        if (
            len(instance.target_vocab) > self.max_vocab
            or len(instance.draft_vocab) > self.max_vocab
        ):
            raise InstanceTooLarge(
                f"vocabulary exceeds oracle bound {self.max_vocab}"
            )
        if instance.lookahead > self.max_lookahead:
            raise InstanceTooLarge(
                f"lookahead exceeds oracle bound {self.max_lookahead}"
            )

    def exact_output_distribution(self, instance: Instance) -> np.ndarray:
        """Distribution of the first emitted token, over target ids."""
        self._check(instance)
        if instance.algorithm in ("sd", "union", "tli"):
            return self._token_level(instance)
        if instance.algorithm == "slem":
            return self._exact_match(instance)
        return self._rejection_sampled(instance)

    # The first emitted token is decided entirely by the first
    # verification: every later draw happens with total probability one
    # and cannot move the marginal, so branches beyond it sum out.
    def _token_level(self, instance: Instance) -> np.ndarray:
        proj = instance.projection()
        p_target = instance.target.probs(())
        n_t = len(instance.target_vocab)
        try:
            q_vec = proj.probs(())
        except EmptyIntersectionMass:
            return np.array(p_target, dtype=np.float64, copy=True)
        p_vec = proj.project_target(p_target)
        out = np.zeros(n_t)
        residual = None
        for d in np.flatnonzero(q_vec > 0):
            d = int(d)
            accept = min(1.0, p_vec[d] / q_vec[d]) if p_vec[d] > 0 else 0.0
            if accept > 0.0:
                out[d] += q_vec[d] * accept
            reject_mass = q_vec[d] * (1.0 - accept)
            if reject_mass > 0.0:
                if residual is None:
                    residual = engine.residual_distribution(p_vec, q_vec)
                out += reject_mass * residual[:n_t]
        return out

    def draft_sequences(self, instance: Instance) -> list[tuple[float, bytes]]:
        """Every positive-probability halted draft sequence as
        (probability, concatenated text), enumerated without memoization."""
        self._check(instance)
        policy = instance.resolved_policy().resolve(
            instance.target_vocab, instance.draft_vocab
        )
        q_model = instance.drafter
        texts = instance.draft_vocab.texts
        done: list[tuple[float, bytes]] = []
        stack: list[tuple[tuple[int, ...], bytes, float]] = [((), b"", 1.0)]
        nodes = 0
        while stack:
            ids, concat, prob = stack.pop()
            nodes += 1
            if nodes > self._node_cap:
                raise InstanceTooLarge("sequence enumeration exploded")
            if ids and policy.halts(concat, len(ids)):
                done.append((prob, concat))
                continue
            q = q_model.probs(list(ids))
            for d in np.flatnonzero(q > 0):
                d = int(d)
                stack.append((ids + (d,), concat + texts[d], prob * float(q[d])))
        return done

    def proposal_distribution(self, instance: Instance) -> np.ndarray:
        """First-target-token law of the halted drafting process, from
        the independent sequence enumeration."""
        out = np.zeros(len(instance.target_vocab))
        for prob, concat in self.draft_sequences(instance):
            first = instance.target_vocab.first_token(concat)
            if first is None:
                raise VocabularyError(
                    f"drafted text {concat!r} has no target-token prefix"
                )
            out[first.id] += prob
        return out

    def _exact_match(self, instance: Instance) -> np.ndarray:
        # Position 1 emits the target's own sample whether or not it
        # matches the proposal, so summing over proposals leaves p.
        p = instance.target.probs(())
        out = np.zeros(len(instance.target_vocab))
        for prob, concat in self.draft_sequences(instance):
            if instance.target_vocab.first_token(concat) is None:
                raise VocabularyError(
                    f"drafted text {concat!r} has no target-token prefix"
                )
            for t in np.flatnonzero(p > 0):
                out[int(t)] += prob * float(p[t])
        return out

    def _rejection_sampled(self, instance: Instance) -> np.ndarray:
        p = np.asarray(instance.target.probs(()), dtype=np.float64)
        psi = self.proposal_distribution(instance)
        out = np.zeros_like(p)
        residual = None
        for t in np.flatnonzero(psi > 0):
            t = int(t)
            accept = min(1.0, p[t] / psi[t]) if p[t] > 0 else 0.0
            if accept > 0.0:
                out[t] += psi[t] * accept
            reject_mass = psi[t] * (1.0 - accept)
            if reject_mass > 0.0:
                if residual is None:
                    residual = engine.residual_distribution(p, psi)
                out += reject_mass * residual
        return out


def exact_output_distribution(instance: Instance) -> np.ndarray:
    return EnumerationOracle().exact_output_distribution(instance)


# --- Monte Carlo -------------------------------------------------------------


@dataclass(frozen=True)
class RateReport:
    """Empirical acceptance against the closed form, with the first
    emitted token histogram.  ``trials`` counts actual verifications
    (one per requested trial unless the instance degenerates);
    ``ci_halfwidth`` is three binomial sigmas at the closed-form rate."""

    algorithm: str
    closed_form_alpha: float
    empirical_alpha: float
    trials: int
    ci_halfwidth: float
    histogram: tuple[int, ...]

    def within(self) -> bool:
        return abs(self.empirical_alpha - self.closed_form_alpha) <= (
            self.ci_halfwidth + _EXACT_TOL
        )

    def to_record(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "closed_form_alpha": self.closed_form_alpha,
            "empirical_alpha": self.empirical_alpha,
            "trials": self.trials,
            "ci_halfwidth": self.ci_halfwidth,
            "within_3_sigma": self.within(),
            "histogram": list(self.histogram),
        }


def _chunks(trials: int, replicas: int) -> list[int]:
    base, extra = divmod(trials, replicas)
    return [base + (1 if r < extra else 0) for r in range(replicas)]


def _bulk_pick(cdf: np.ndarray, last: int, u: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, last)


def run_monte_carlo(
    instance: Instance,
    trials: int,
    master_seed: int,
    replicas: int = 4,
) -> RateReport:
    """Vectorized replay of the instance's first verification.

    Replica ``r`` draws from stream ``r`` of the master seed; uniforms
    come in blocks (draft picks, acceptance uniforms, one residual pick
    per trial), which matches the per-step draw semantics without
    replaying the sequential engines draw for draw — those are exercised
    by their own distributional tests.  Token-level residuals go through
    the engine's residual arithmetic on the projected vectors.
    """
    if trials < 1:
        raise VocabularyError("trials must be >= 1")
    alpha = instance_alpha(instance)
    n_t = len(instance.target_vocab)
    accept_events = 0
    verifications = 0
    histogram = np.zeros(n_t, dtype=np.int64)

    if instance.algorithm in ("sd", "union", "tli"):
        proj = instance.projection()
        p_target = np.asarray(instance.target.probs(()), dtype=np.float64)
        try:
            q_vec = proj.probs(())
        except EmptyIntersectionMass:
            q_vec = None
        if q_vec is None:
            # Degenerate step: nothing is drafted, one target sample.
            cdf = np.cumsum(p_target)
            last = int(np.flatnonzero(p_target > 0)[-1])
            for r, n in enumerate(_chunks(trials, replicas)):
                if n == 0:
                    continue
                g = np.random.Generator(
                    np.random.Philox(key=master_seed).jumped(r)
                )
                toks = _bulk_pick(cdf, last, g.random(n))
                histogram += np.bincount(toks, minlength=n_t)
            return RateReport(
                instance.algorithm, alpha, 0.0, 0, 0.0, tuple(histogram)
            )
        p_vec = proj.project_target(p_target)
        ratio = np.zeros_like(q_vec)
        support = q_vec > 0
        ratio[support] = np.where(
            p_vec[support] > 0,
            np.minimum(1.0, p_vec[support] / q_vec[support]),
            0.0,
        )
        q_cdf = np.cumsum(q_vec)
        q_last = int(np.flatnonzero(q_vec > 0)[-1])
        try:
            residual = engine.residual_distribution(p_vec, q_vec)
            r_cdf = np.cumsum(residual)
            r_last = int(np.flatnonzero(residual > 0)[-1])
        except engine.DegenerateResidual:
            residual = None
        for r, n in enumerate(_chunks(trials, replicas)):
            if n == 0:
                continue
            g = np.random.Generator(np.random.Philox(key=master_seed).jumped(r))
            drafts = _bulk_pick(q_cdf, q_last, g.random(n))
            accepted = g.random(n) <= ratio[drafts]
            u_final = g.random(n)
            accept_events += int(accepted.sum())
            verifications += n
            first = drafts.copy()
            if not accepted.all():
                if residual is None:
                    raise engine.DegenerateResidual(
                        "rejection observed but residual is degenerate"
                    )
                first[~accepted] = _bulk_pick(r_cdf, r_last, u_final[~accepted])
            histogram += np.bincount(first[first < n_t], minlength=n_t)
            # accepted drafter-only tokens cannot occur: their ratio is 0

    else:
        oracle = EnumerationOracle()
        sequences = oracle.draft_sequences(instance)
        seq_probs = np.array([w for w, _ in sequences])
        firsts = np.array(
            [
                instance.target_vocab.first_token(concat).id
                for _, concat in sequences
            ],
            dtype=np.int64,
        )
        seq_cdf = np.cumsum(seq_probs)
        seq_last = int(np.flatnonzero(seq_probs > 0)[-1])
        p = np.asarray(instance.target.probs(()), dtype=np.float64)
        p_cdf = np.cumsum(p)
        p_last = int(np.flatnonzero(p > 0)[-1])
        table = compute_first_token_table(
            instance.drafter, (), instance.target_vocab, instance.resolved_policy()
        )
        psi = table.mass_vector()
        for r, n in enumerate(_chunks(trials, replicas)):
            if n == 0:
                continue
            g = np.random.Generator(np.random.Philox(key=master_seed).jumped(r))
            proposal = firsts[_bulk_pick(seq_cdf, seq_last, g.random(n))]
            if instance.algorithm == "slem":
                samples = _bulk_pick(p_cdf, p_last, g.random(n))
                accepted = samples == proposal
                emitted = samples
            else:
                u = g.random(n)
                u_final = g.random(n)
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratio = np.where(psi > 0, np.minimum(1.0, p / psi), 0.0)
                ratio = np.where(p > 0, ratio, 0.0)
                accepted = u <= ratio[proposal]
                emitted = proposal.copy()
                if not accepted.all():
                    residual = engine.residual_distribution(p, psi)
                    r_cdf = np.cumsum(residual)
                    r_last = int(np.flatnonzero(residual > 0)[-1])
                    emitted[~accepted] = _bulk_pick(
                        r_cdf, r_last, u_final[~accepted]
                    )
            accept_events += int(accepted.sum())
            verifications += n
            histogram += np.bincount(emitted, minlength=n_t)

    empirical = accept_events / verifications if verifications else 0.0
    sigma = (
        math.sqrt(alpha * (1.0 - alpha) / verifications) if verifications else 0.0
    )
    return RateReport(
        algorithm=instance.algorithm,
        closed_form_alpha=alpha,
        empirical_alpha=empirical,
        trials=verifications,
        ci_halfwidth=3.0 * sigma,
        histogram=tuple(int(c) for c in histogram),
    )


# --- decomposition census ----------------------------------------------------


@dataclass(frozen=True)
class CensusEntry:
    text: str
    count: int
    exact: bool


@dataclass(frozen=True)
class CensusReport:
    entries: tuple[CensusEntry, ...]
    mean: float
    sd: float
    median: float
    p75: float
    max_count: int

    def counts(self) -> list[int]:
        return [e.count for e in self.entries]

    def to_records(self) -> list[dict]:
        return [
            {"token_text": e.text, "count": e.count, "exact": e.exact}
            for e in self.entries
        ]

    def summary(self) -> dict:
        return {
            "tokens": len(self.entries),
            "mean": self.mean,
            "sd": self.sd,
            "median": self.median,
            "p75": self.p75,
            "max": self.max_count,
        }


def decomposition_census(
    draft_vocab: Vocabulary,
    token_texts: Iterable[bytes | str],
    op_budget: int | None = None,
) -> CensusReport:
    """Count, for each token text, the ways it concatenates from draft
    tokens.  A budget overrun marks the entry inexact instead of failing;
    summary statistics cover all entries."""
    budget = 10**6 if op_budget is None else op_budget
    entries = []
    for text in token_texts:
        data = text.encode("utf-8") if isinstance(text, str) else bytes(text)
        count, exceeded = draft_vocab.count_compositions(data, op_budget=budget)
        entries.append(
            CensusEntry(data.decode("utf-8", "backslashreplace"), count, not exceeded)
        )
    counts = np.array([e.count for e in entries], dtype=np.float64)
    return CensusReport(
        entries=tuple(entries),
        mean=float(counts.mean()),
        sd=float(counts.std()),
        median=float(np.median(counts)),
        p75=float(np.percentile(counts, 75)),
        max_count=int(counts.max()),
    )


# --- throughput cost model ---------------------------------------------------


@dataclass(frozen=True)
class CostModel:
    """Abstract per-iteration cost: ``lookahead`` drafter forwards plus
    one target forward (target cost normalized to 1)."""

    c_draft: float
    c_target: float = 1.0
    lookahead: int = 4

    def __post_init__(self):
        if self.c_draft <= 0 or self.c_target <= 0:
            raise VocabularyError("costs must be positive")
        if self.lookahead < 1:
            raise VocabularyError("lookahead must be >= 1")

    @property
    def cost_per_iteration(self) -> float:
        return self.lookahead * self.c_draft + self.c_target


@dataclass(frozen=True)
class ThroughputReport:
    expected_tokens_per_iteration: float
    cost_per_iteration: float
    tokens_per_cost: float
    simulated_tokens_per_iteration: float | None
    assumption: str = "acceptances i.i.d. with the given rate"

    def to_record(self) -> dict:
        return {
            "expected_tokens_per_iteration": self.expected_tokens_per_iteration,
            "cost_per_iteration": self.cost_per_iteration,
            "tokens_per_cost": self.tokens_per_cost,
            "simulated_tokens_per_iteration": self.simulated_tokens_per_iteration,
            "assumption": self.assumption,
        }


def simulate_throughput(
    cost: CostModel,
    alpha: float,
    n_iterations: int = 0,
    master_seed: int = 0,
) -> ThroughputReport:
    """Expected emitted tokens per unit cost under i.i.d. acceptance.

    One iteration emits the initial run of accepted drafts plus one
    (residual or bonus): expectation sum_{k=0..i} alpha^k.  With
    ``n_iterations`` > 0 a seeded simulation estimate rides along.
    """
    if not 0.0 <= alpha <= 1.0:
        raise VocabularyError("acceptance rate must lie in [0, 1]")
    i = cost.lookahead
    if alpha >= 1.0:
        expected = float(i + 1)
    else:
        expected = float((1.0 - alpha ** (i + 1)) / (1.0 - alpha))
    simulated = None
    if n_iterations:
        g = np.random.Generator(np.random.Philox(key=master_seed))
        accepted = g.random((n_iterations, i)) < alpha
        runs = accepted.cumprod(axis=1).sum(axis=1)
        simulated = float(runs.mean() + 1.0)
    return ThroughputReport(
        expected_tokens_per_iteration=expected,
        cost_per_iteration=cost.cost_per_iteration,
        tokens_per_cost=expected / cost.cost_per_iteration,
        simulated_tokens_per_iteration=simulated,
    )


# --- dominance sweep ---------------------------------------------------------


@dataclass(frozen=True)
class DominancePair:
    union_alpha: float
    tli_alpha: float
    drafter_only_mass: float

    @property
    def violated(self) -> bool:
        return self.union_alpha > self.tli_alpha + _EXACT_TOL


@dataclass(frozen=True)
class DominanceReport:
    pairs: tuple[DominancePair, ...]
    violations: int

    def to_record(self) -> dict:
        return {
            "instances": len(self.pairs),
            "violations": self.violations,
            "max_gap": max((p.tli_alpha - p.union_alpha) for p in self.pairs),
        }


def dominance_sweep(count: int, master_seed: int) -> DominanceReport:
    """Closed-form union rate versus renormalized-intersection rate on
    random heterogeneous pairs sharing at least one text."""
    rng = np.random.Generator(np.random.Philox(key=master_seed))
    pool = ["a", "b", "c", "d", "ab", "cd"]
    pairs = []
    for _ in range(count):
        t_size = int(rng.integers(2, 5))
        d_size = int(rng.integers(2, 6))
        while True:
            t_texts = list(rng.choice(pool, size=t_size, replace=False))
            d_texts = list(
                rng.choice(pool, size=min(d_size, len(pool)), replace=False)
            )
            if set(t_texts) & set(d_texts):
                break
        tv, dv = Vocabulary(t_texts), Vocabulary(d_texts)
        p = rng.dirichlet(np.ones(len(tv)))
        q = rng.dirichlet(np.ones(len(dv)))
        a_union = closed_form_alpha("union", p, q, tv, dv)
        a_tli = closed_form_alpha("tli", p, q, tv, dv)
        shared = set(tv.texts) & set(dv.texts)
        outside = sum(float(q[dv.id_of(t)]) for t in dv.texts if t not in shared)
        pairs.append(DominancePair(a_union, a_tli, outside))
    report = DominanceReport(
        pairs=tuple(pairs), violations=sum(p.violated for p in pairs)
    )
    return report


# --- verification gates ------------------------------------------------------


@dataclass(frozen=True)
class GateResult:
    name: str
    passed: bool
    detail: str

    def to_record(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass(frozen=True)
class VerificationReport:
    gates: tuple[GateResult, ...]

    @property
    def passed(self) -> bool:
        return all(g.passed for g in self.gates)

    def to_record(self) -> dict:
        return {
            "passed": self.passed,
            "gates": [g.to_record() for g in self.gates],
        }


def run_verification(
    master_seed: int = 0,
    trials: int = 20_000,
    instances_per_algorithm: int = 4,
    dominance_instances: int = 200,
    algorithms: Sequence[str] = ALGORITHMS,
) -> VerificationReport:
    """The full gate battery: exact losslessness on the bundled suite,
    acceptance rates within three sigma on random instances, the
    union-vs-intersection dominance sweep, and closed-form-vs-simulated
    throughput agreement within one percent."""
    gates: list[GateResult] = []
    oracle = EnumerationOracle()

    suite = [i for i in bundled_suite() if i.algorithm in algorithms]
    worst = 0.0
    worst_label = ""
    for inst in suite:
        out = oracle.exact_output_distribution(inst)
        gap = float(np.abs(out - inst.target.probs(())).max())
        if gap > worst:
            worst, worst_label = gap, inst.label
    gates.append(
        GateResult(
            "losslessness_oracle",
            worst <= _EXACT_TOL,
            f"max |output - p| = {worst:.3e} over {len(suite)} instances"
            + (f" (worst: {worst_label})" if worst_label else ""),
        )
    )

    rng = np.random.Generator(np.random.Philox(key=master_seed).jumped(1))
    failures = []
    checked = 0
    for algorithm in algorithms:
        for k in range(instances_per_algorithm):
            inst = random_instance(algorithm, rng)
            report = run_monte_carlo(
                inst, trials, master_seed + 1000 + checked
            )
            checked += 1
            if not report.within():
                failures.append(
                    f"{algorithm}#{k}: |{report.empirical_alpha:.4f}"
                    f" - {report.closed_form_alpha:.4f}|"
                    f" > {report.ci_halfwidth:.4f}"
                )
    gates.append(
        GateResult(
            "rate_identity",
            not failures,
            f"{checked} instances x {trials} trials"
            + ("; " + "; ".join(failures) if failures else ", all within 3 sigma"),
        )
    )

    dom = dominance_sweep(dominance_instances, master_seed + 2)
    gates.append(
        GateResult(
            "dominance",
            dom.violations == 0,
            f"{dom.violations} violations in {len(dom.pairs)} pairs",
        )
    )

    cost = CostModel(c_draft=0.05, lookahead=4)
    thr = simulate_throughput(cost, 0.8, n_iterations=200_000, master_seed=master_seed + 3)
    rel = abs(
        thr.simulated_tokens_per_iteration - thr.expected_tokens_per_iteration
    ) / thr.expected_tokens_per_iteration
    gates.append(
        GateResult(
            "throughput_model",
            rel <= 0.01,
            f"closed form {thr.expected_tokens_per_iteration:.4f} vs"
            f" simulated {thr.simulated_tokens_per_iteration:.4f}"
            f" ({100 * rel:.2f}% apart)",
        )
    )
    return VerificationReport(tuple(gates))


# --- traces ------------------------------------------------------------------


def read_trace(path: str | Path) -> tuple[dict, list[dict]]:
    """Read a JSON-lines trace: the first record is the resolved run
    configuration, the rest are per-step records."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    if not records:
        raise VocabularyError(f"{path}: empty trace")
    return records[0], records[1:]
