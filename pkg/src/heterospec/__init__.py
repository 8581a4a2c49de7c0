"""Lossless speculative decoding across mismatched tokenizer vocabularies.

A small drafter model proposes tokens, a larger target model verifies
them; this package implements that handshake for the hard case where
the two models do not share a vocabulary.  Five interchangeable
algorithms (token-level rejection sampling plus union, intersection and
two string-level variants), exact enumeration oracles, Monte Carlo
verification and a deterministic CLI — all at desk scale, with table
and n-gram models standing in for neural ones.
"""

from .engine import (
    DraftBatch,
    ProjectedDrafter,
    VerificationOutcome,
    as_projected,
    residual_distribution,
    sd_step,
    verify_token,
)
from .errors import (
    DegenerateResidual,
    EmptyIntersectionMass,
    ExpansionBudgetExceeded,
    HeterospecError,
    InstanceTooLarge,
    InvalidDraft,
    MissingFirstTokenTable,
    RealignmentFailure,
    SearchBudgetExceeded,
    TokenizationFailure,
    UnknownContext,
    VocabularyError,
)
from .decoding import GenerationResult, generate
from .lm import (
    NgramModel,
    SeededSampler,
    TableModel,
    Temperature,
    distribution,
    load_model,
    sample,
    save_model,
    train_ngram,
)
from .stringlevel import (
    FirstTokenTable,
    LookaheadPolicy,
    PrefixCache,
    RealignmentWindow,
    SlemEngine,
    SlrsEngine,
    compute_first_token_table,
    compute_max_lookahead,
    first_token_settled,
    realign,
    slem_step,
    slrs_verify,
)
from .vocab import (
    Normalizer,
    TextCodec,
    Token,
    Vocabulary,
    check_injectivity,
    complete_vocabulary,
    intersect,
    is_expressible,
    load_corpus,
    load_vocabulary,
    save_vocabulary,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # vocab
    "Token",
    "Vocabulary",
    "Normalizer",
    "TextCodec",
    "complete_vocabulary",
    "load_vocabulary",
    "save_vocabulary",
    "load_corpus",
    "intersect",
    "is_expressible",
    "check_injectivity",
    # models
    "TableModel",
    "NgramModel",
    "Temperature",
    "SeededSampler",
    "train_ngram",
    "distribution",
    "sample",
    "load_model",
    "save_model",
    # token-level engine
    "verify_token",
    "residual_distribution",
    "DraftBatch",
    "VerificationOutcome",
    "ProjectedDrafter",
    "as_projected",
    "sd_step",
    # string-level engines
    "LookaheadPolicy",
    "FirstTokenTable",
    "compute_first_token_table",
    "compute_max_lookahead",
    "first_token_settled",
    "RealignmentWindow",
    "realign",
    "PrefixCache",
    "SlemEngine",
    "SlrsEngine",
    "slem_step",
    "slrs_verify",
    # orchestration
    "generate",
    "GenerationResult",
    # errors
    "HeterospecError",
    "VocabularyError",
    "TokenizationFailure",
    "UnknownContext",
    "InvalidDraft",
    "DegenerateResidual",
    "EmptyIntersectionMass",
    "RealignmentFailure",
    "ExpansionBudgetExceeded",
    "SearchBudgetExceeded",
    "MissingFirstTokenTable",
    "InstanceTooLarge",
]
