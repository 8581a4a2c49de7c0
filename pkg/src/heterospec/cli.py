"""Command-line surface: run experiments and emit deterministic reports.

Subcommands: ``generate`` (decode text with any algorithm and write a
JSON-lines trace), ``verify`` (the gate battery; exit 1 on any failed
gate), ``census`` (decomposition counts), ``injectivity`` (round-trip
audit of a normalizer over a corpus), ``overlap`` (vocabulary
intersection metrics) and ``simulate`` (throughput cost model).

Every command is deterministic given ``--seed``: reports carry the
resolved configuration, never timestamps, so reruns are byte-identical.
Exit codes: 0 success, 1 failed gate or module error, 2 usage error,
3 exhausted search budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__, analysis
from .analysis import CostModel
from .errors import (
    ExpansionBudgetExceeded,
    HeterospecError,
    SearchBudgetExceeded,
)
from .decoding import generate
from .lm import SeededSampler, Temperature, load_model, train_ngram
from .stringlevel import LookaheadPolicy, RealignmentWindow, default_node_budget
from .vocab import (
    Normalizer,
    TextCodec,
    check_injectivity,
    complete_vocabulary,
    intersect,
    is_expressible,
    load_corpus,
    load_vocabulary,
)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_BUDGET = 3

ALGO_CHOICES = list(analysis.ALGORITHMS)
FORMAT_CHOICES = ["json", "csv", "md"]


# --- report writers ----------------------------------------------------------


def _cell(value) -> str:
    if isinstance(value, (dict, list, tuple)):
        return json.dumps(value, sort_keys=True)
    if isinstance(value, float):
        return f"{value:.10g}"
    return "" if value is None else str(value)


def _render(payload: dict, rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if not rows:
        rows = [{"empty": True}]
    fields = list(rows[0].keys())
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row.get(k)) for k in fields})
        return buf.getvalue()
    lines = [
        "| " + " | ".join(fields) + " |",
        "| " + " | ".join("---" for _ in fields) + " |",
    ]
    for row in rows:
        lines.append("| " + " | ".join(_cell(row.get(k)) for k in fields) + " |")
    return "\n".join(lines) + "\n"


def _emit(payload: dict, rows: list[dict], args) -> None:
    text = _render(payload, rows, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _resolve_budget(args) -> int:
    return args.budget if args.budget is not None else default_node_budget()


# --- model/config loading ----------------------------------------------------


def _load_role(args, parser, role: str):
    """A model plus its text codec, from either a table-model file or a
    vocabulary + training corpus."""
    model_path = getattr(args, role)
    vocab_path = getattr(args, f"{role}_vocab")
    normalizer = Normalizer.parse(getattr(args, f"{role}_normalizer"))
    if model_path:
        model = load_model(model_path)
    elif vocab_path and args.corpus:
        vocab = load_vocabulary(vocab_path)
        docs = [normalizer.apply(doc) for doc in load_corpus(args.corpus)]
        model = train_ngram(docs, vocab, args.order)
    else:
        parser.error(
            f"--{role} needs a model file, or --{role}-vocab with --corpus"
        )
    return model, TextCodec(model.vocab, normalizer)


def _generate_config(args, budget: int) -> dict:
    return {
        "command": "generate",
        "version": __version__,
        "algo": args.algo,
        "target": args.target or args.target_vocab,
        "drafter": args.drafter or args.drafter_vocab,
        "corpus": args.corpus,
        "order": args.order,
        "target_normalizer": args.target_normalizer,
        "drafter_normalizer": args.drafter_normalizer,
        "prompt": args.prompt,
        "n_tokens": args.n_tokens,
        "lookahead": args.lookahead,
        "policy": args.policy,
        "window": args.window,
        "temp": args.temp,
        "seed": args.seed,
        "budget": budget,
    }


# --- subcommands -------------------------------------------------------------


def cmd_generate(args, parser) -> int:
    budget = _resolve_budget(args)
    target, target_codec = _load_role(args, parser, "target")
    drafter, drafter_codec = _load_role(args, parser, "drafter")
    temp = Temperature(args.temp)
    policy = None
    if args.algo == "slrs":
        n = args.lookahead if args.policy == "fixed_n" else None
        policy = LookaheadPolicy(args.policy, n)
    result = generate(
        args.algo,
        target,
        drafter,
        args.prompt,
        args.n_tokens,
        SeededSampler(args.seed),
        lookahead=args.lookahead,
        policy=policy,
        window=RealignmentWindow(args.window),
        target_codec=target_codec,
        drafter_codec=drafter_codec,
        node_budget=budget,
        target_temp=temp,
        draft_temp=None if args.algo == "slrs" else temp,
    )
    sys.stdout.write(result.text.decode("utf-8", "backslashreplace") + "\n")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(_generate_config(args, budget), sort_keys=True) + "\n")
            for record in result.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_verify(args, parser) -> int:
    algorithms = ALGO_CHOICES if args.algo is None else args.algo.split(",")
    for tag in algorithms:
        if tag not in ALGO_CHOICES:
            parser.error(f"unknown algorithm tag {tag!r}")
    report = analysis.run_verification(
        master_seed=args.seed,
        trials=args.trials,
        instances_per_algorithm=args.instances,
        dominance_instances=args.dominance,
        algorithms=algorithms,
    )
    config = {
        "command": "verify",
        "version": __version__,
        "algorithms": algorithms,
        "trials": args.trials,
        "instances": args.instances,
        "dominance": args.dominance,
        "seed": args.seed,
    }
    payload = {"config": config, **report.to_record()}
    rows = [g.to_record() for g in report.gates]
    _emit(payload, rows, args)
    for gate in report.gates:
        status = "PASS" if gate.passed else "FAIL"
        sys.stderr.write(f"[{status}] {gate.name}: {gate.detail}\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_census(args, parser) -> int:
    budget = _resolve_budget(args)
    if args.complete:
        vocab = complete_vocabulary(args.alphabet, args.complete)
        symbol = args.alphabet[0]
        tokens = [symbol * m for m in range(1, args.complete + 1)]
        source = f"complete({args.alphabet},{args.complete})"
    elif args.drafter_vocab:
        vocab = load_vocabulary(args.drafter_vocab)
        if args.target_vocab:
            tokens = [t.decode("utf-8") for t in load_vocabulary(args.target_vocab).texts]
        else:
            tokens = [t.decode("utf-8") for t in vocab.texts]
        source = args.drafter_vocab
    else:
        parser.error("census needs --complete N or --drafter-vocab")
    report = analysis.decomposition_census(vocab, tokens, op_budget=budget)
    config = {
        "command": "census",
        "version": __version__,
        "source": source,
        "tokens": len(tokens),
        "budget": budget,
    }
    payload = {
        "config": config,
        "summary": report.summary(),
        "entries": report.to_records(),
    }
    _emit(payload, report.to_records(), args)
    return EXIT_OK


def cmd_injectivity(args, parser) -> int:
    vocab = load_vocabulary(args.vocab)
    normalizer = Normalizer.parse(args.normalizer)
    corpus = load_corpus(args.corpus)
    report = check_injectivity(vocab, normalizer, corpus, args.prefix_len)
    config = {
        "command": "injectivity",
        "version": __version__,
        "vocab": args.vocab,
        "normalizer": args.normalizer,
        "corpus": args.corpus,
        "prefix_len": args.prefix_len,
    }
    rows = [
        {"text": c.text, "passed": c.passed, "reason": c.reason}
        for c in report.checks
    ]
    payload = {"config": config, "injective": report.injective, "checks": rows}
    _emit(payload, rows, args)
    return EXIT_OK


def cmd_overlap(args, parser) -> int:
    target = load_vocabulary(args.target_vocab)
    drafter = load_vocabulary(args.drafter_vocab)
    shared, ratio = intersect(target, drafter)
    config = {
        "command": "overlap",
        "version": __version__,
        "target_vocab": args.target_vocab,
        "drafter_vocab": args.drafter_vocab,
    }
    row = {
        "target_size": len(target),
        "drafter_size": len(drafter),
        "shared": len(shared),
        "ratio": ratio,
        "target_expressible_in_drafter": is_expressible(target, drafter),
        "drafter_expressible_in_target": is_expressible(drafter, target),
    }
    payload = {
        "config": config,
        **row,
        "shared_texts": sorted(t.decode("utf-8") for t in shared),
    }
    _emit(payload, [row], args)
    return EXIT_OK


def cmd_simulate(args, parser) -> int:
    cost = CostModel(args.draft_cost, args.target_cost, args.lookahead)
    report = analysis.simulate_throughput(
        cost, args.alpha, n_iterations=args.trials, master_seed=args.seed
    )
    config = {
        "command": "simulate",
        "version": __version__,
        "alpha": args.alpha,
        "draft_cost": args.draft_cost,
        "target_cost": args.target_cost,
        "lookahead": args.lookahead,
        "trials": args.trials,
        "seed": args.seed,
    }
    payload = {"config": config, **report.to_record()}
    _emit(payload, [report.to_record()], args)
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def _add_output_flags(sub) -> None:
    sub.add_argument("--out", help="write the report here instead of stdout")
    sub.add_argument(
        "--format", choices=FORMAT_CHOICES, default="json",
        help="report format (default json)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heterospec",
        description="Lossless speculative decoding across mismatched "
        "tokenizer vocabularies, at desk scale.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser(
        "generate", help="decode text with a draft/target pair"
    )
    gen.add_argument("--algo", choices=ALGO_CHOICES, required=True)
    gen.add_argument("--target", help="target table-model JSON")
    gen.add_argument("--drafter", help="drafter table-model JSON")
    gen.add_argument("--target-vocab", help="target vocabulary JSON (with --corpus)")
    gen.add_argument("--drafter-vocab", help="drafter vocabulary JSON (with --corpus)")
    gen.add_argument("--corpus", help="training corpus for n-gram models")
    gen.add_argument("--order", type=int, default=2, help="n-gram order (default 2)")
    gen.add_argument("--target-normalizer", default="identity")
    gen.add_argument("--drafter-normalizer", default="identity")
    gen.add_argument("--prompt", default="")
    gen.add_argument("--n-tokens", type=int, default=32)
    gen.add_argument("--lookahead", type=int, default=2)
    gen.add_argument(
        "--policy", choices=["early_stop", "n_max", "fixed_n"],
        default="early_stop", help="drafting halt rule (slrs only)",
    )
    gen.add_argument("--window", type=int, default=5, help="realignment lookbehind")
    gen.add_argument("--temp", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--budget", type=int, default=None)
    gen.add_argument("--out", help="JSON-lines trace path")
    gen.add_argument(
        "--format", choices=FORMAT_CHOICES, default="json", help=argparse.SUPPRESS
    )
    gen.set_defaults(func=cmd_generate)

    ver = commands.add_parser("verify", help="run the verification gates")
    ver.add_argument("--algo", help="comma-separated tags (default: all)")
    ver.add_argument("--trials", type=int, default=20_000)
    ver.add_argument("--instances", type=int, default=4,
                     help="random instances per algorithm")
    ver.add_argument("--dominance", type=int, default=200,
                     help="instances in the dominance sweep")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--budget", type=int, default=None)
    _add_output_flags(ver)
    ver.set_defaults(func=cmd_verify)

    cen = commands.add_parser("census", help="decomposition counts")
    cen.add_argument("--drafter-vocab", help="vocabulary doing the composing")
    cen.add_argument("--target-vocab", help="whose token texts to census")
    cen.add_argument("--complete", type=int, default=None,
                     help="use the complete vocabulary up to this length")
    cen.add_argument("--alphabet", default="ab")
    cen.add_argument("--budget", type=int, default=None)
    _add_output_flags(cen)
    cen.set_defaults(func=cmd_census)

    inj = commands.add_parser("injectivity", help="normalizer round-trip audit")
    inj.add_argument("--vocab", required=True)
    inj.add_argument("--normalizer", default="identity")
    inj.add_argument("--corpus", required=True)
    inj.add_argument("--prefix-len", type=int, default=100)
    _add_output_flags(inj)
    inj.set_defaults(func=cmd_injectivity)

    ove = commands.add_parser("overlap", help="vocabulary intersection metrics")
    ove.add_argument("--target-vocab", required=True)
    ove.add_argument("--drafter-vocab", required=True)
    _add_output_flags(ove)
    ove.set_defaults(func=cmd_overlap)

    sim = commands.add_parser("simulate", help="throughput cost model")
    sim.add_argument("--alpha", type=float, required=True)
    sim.add_argument("--draft-cost", type=float, default=0.1)
    sim.add_argument("--target-cost", type=float, default=1.0)
    sim.add_argument("--lookahead", type=int, default=4)
    sim.add_argument("--trials", type=int, default=0,
                     help="simulation iterations (0: closed form only)")
    sim.add_argument("--seed", type=int, default=0)
    _add_output_flags(sim)
    sim.set_defaults(func=cmd_simulate)

    return parser


def _error_json(exc: Exception) -> str:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("budget", "position"):
        value = getattr(exc, attr, None)
        if value is not None:
            payload[attr] = value
    return json.dumps(payload, sort_keys=True)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except (ExpansionBudgetExceeded, SearchBudgetExceeded) as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return EXIT_BUDGET
    except (HeterospecError, FileNotFoundError) as exc:
        sys.stderr.write(_error_json(exc) + "\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
