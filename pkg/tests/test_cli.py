"""CLI behavior: determinism, exit codes, formats, error reporting."""

import json
import subprocess
import sys

import pytest

from heterospec import analysis
from heterospec.cli import main

MODELS = "data/models"


@pytest.fixture
def pair_args(data_dir):
    return [
        "--target", str(data_dir / "models" / "pair_target.json"),
        "--drafter", str(data_dir / "models" / "pair_drafter.json"),
    ]


@pytest.fixture
def ab_pair_args(data_dir):
    return [
        "--target", str(data_dir / "models" / "pair_target.json"),
        "--drafter", str(data_dir / "models" / "pair_drafter_ab.json"),
    ]


def test_generate_writes_trace_with_config_first(tmp_path, pair_args, capsys):
    out = tmp_path / "trace.jsonl"
    code = main(["generate", "--algo", "tli", *pair_args,
                 "--prompt", "a", "--n-tokens", "8", "--seed", "7",
                 "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out.strip()
    assert text.startswith("a")
    config, records = analysis.read_trace(out)
    assert config["command"] == "generate"
    assert config["seed"] == 7
    assert config["budget"] == 10**6
    assert records
    assert all("emitted" in r for r in records)


def test_generate_rerun_is_byte_identical(tmp_path, pair_args):
    args = ["generate", "--algo", "union", *pair_args,
            "--n-tokens", "12", "--seed", "3"]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.jsonl"
    assert main(["generate", "--algo", "union", *pair_args,
                 "--n-tokens", "12", "--seed", "4", "--out", str(c)]) == 0
    assert a.read_bytes() != c.read_bytes()


@pytest.mark.parametrize("algo", ["sd", "slem", "slrs"])
def test_generate_all_algorithms_run(tmp_path, ab_pair_args, algo):
    out = tmp_path / "t.jsonl"
    code = main(["generate", "--algo", algo, *ab_pair_args,
                 "--n-tokens", "6", "--seed", "2", "--out", str(out)])
    assert code == 0
    config, records = analysis.read_trace(out)
    assert config["algo"] == algo
    assert records


def test_verify_passes_and_reports(tmp_path, capsys):
    out = tmp_path / "verify.json"
    code = main(["verify", "--trials", "4000", "--instances", "2",
                 "--dominance", "50", "--seed", "0", "--out", str(out)])
    assert code == 0
    err = capsys.readouterr().err
    assert err.count("[PASS]") == 4
    payload = json.loads(out.read_text())
    assert payload["passed"] is True
    assert payload["config"]["trials"] == 4000


def test_verify_rerun_byte_identical(tmp_path):
    args = ["verify", "--trials", "3000", "--instances", "2",
            "--dominance", "40", "--seed", "1"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_verify_rejects_unknown_algo(capsys):
    with pytest.raises(SystemExit) as err:
        main(["verify", "--algo", "sd,warp"])
    assert err.value.code == 2


def test_census_complete_vocabulary(tmp_path):
    out = tmp_path / "census.json"
    code = main(["census", "--complete", "6", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    counts = [e["count"] for e in payload["entries"]]
    assert counts == [1, 2, 4, 8, 16, 32]


def test_census_formats(tmp_path, data_dir):
    vocab = str(data_dir / "vocabs" / "hello_parts.json")
    for fmt, check in [
        ("csv", lambda t: t.splitlines()[0] == "token_text,count,exact"),
        ("md", lambda t: t.startswith("| token_text | count | exact |")),
    ]:
        out = tmp_path / f"c.{fmt}"
        code = main(["census", "--drafter-vocab", vocab, "--format", fmt,
                     "--out", str(out)])
        assert code == 0
        assert check(out.read_text()), fmt


def test_injectivity_command(tmp_path, data_dir, capsys):
    code = main([
        "injectivity",
        "--vocab", str(data_dir / "vocabs" / "letters.json"),
        "--normalizer", "collapse_spaces",
        "--corpus", str(data_dir / "corpus" / "tiny.txt"),
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["injective"] is False
    flagged = [c for c in payload["checks"] if not c["passed"]]
    assert len(flagged) == 1 and "  " in flagged[0]["text"]


def test_overlap_command(data_dir, capsys):
    code = main([
        "overlap",
        "--target-vocab", str(data_dir / "vocabs" / "greeting_target.json"),
        "--drafter-vocab", str(data_dir / "vocabs" / "greeting_drafter.json"),
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["shared"] == 4
    assert payload["ratio"] == pytest.approx(0.8)
    assert payload["target_expressible_in_drafter"] is True


def test_simulate_command(capsys):
    code = main(["simulate", "--alpha", "0.8", "--lookahead", "4",
                 "--draft-cost", "0.05", "--trials", "50000", "--seed", "5"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["expected_tokens_per_iteration"] == pytest.approx(3.3616)
    sim = payload["simulated_tokens_per_iteration"]
    assert abs(sim - 3.3616) / 3.3616 < 0.01


def test_budget_exit_code(ab_pair_args, capsys):
    code = main(["generate", "--algo", "slrs", *ab_pair_args,
                 "--n-tokens", "4", "--seed", "1", "--budget", "1"])
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ExpansionBudgetExceeded"
    assert err["budget"] == 1


def test_budget_env_variable(ab_pair_args, capsys, monkeypatch):
    monkeypatch.setenv("HETEROSPEC_BUDGET", "1")
    assert main(["generate", "--algo", "slrs", *ab_pair_args,
                 "--n-tokens", "4", "--seed", "1"]) == 3
    capsys.readouterr()
    # an explicit flag beats the environment
    monkeypatch.setenv("HETEROSPEC_BUDGET", "1")
    assert main(["generate", "--algo", "slrs", *ab_pair_args,
                 "--n-tokens", "4", "--seed", "1", "--budget", "100000"]) == 0


def test_missing_file_is_module_error(capsys):
    code = main(["generate", "--algo", "sd",
                 "--target", "/nonexistent/model.json",
                 "--drafter", "/nonexistent/model.json"])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FileNotFoundError"


def test_expressibility_error_is_module_error(pair_args, capsys):
    # the {a,b,c} drafter cannot be re-tokenized by the {a,b} target
    code = main(["generate", "--algo", "slem", *pair_args, "--n-tokens", "4"])
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "VocabularyError"


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["generate", "--algo", "warp"])
    assert err.value.code == 2


def test_ngram_training_path(tmp_path, data_dir):
    vocab = str(data_dir / "vocabs" / "letters.json")
    corpus = str(data_dir / "corpus" / "tiny.txt")
    out = tmp_path / "t.jsonl"
    code = main(["generate", "--algo", "sd",
                 "--target-vocab", vocab, "--drafter-vocab", vocab,
                 "--corpus", corpus, "--order", "2",
                 "--prompt", "cab ", "--n-tokens", "8", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    config, _ = analysis.read_trace(out)
    assert config["order"] == 2


def test_console_entry_point(data_dir):
    """The installed script and `python -m` route both work."""
    run = subprocess.run(
        [sys.executable, "-m", "heterospec.cli", "simulate",
         "--alpha", "0.5", "--lookahead", "2"],
        capture_output=True, text=True, timeout=60,
    )
    assert run.returncode == 0
    assert json.loads(run.stdout)["expected_tokens_per_iteration"] == pytest.approx(1.75)
