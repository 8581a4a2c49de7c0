"""Instances, the exact enumeration oracle, Monte Carlo harness,
decomposition census, throughput model and the gate battery.

The MC checks pin their seeds; the gates' ability to fail is itself
tested by corrupting the math they audit.
"""

import numpy as np
import pytest
from scipy import stats

from heterospec import analysis, engine
from heterospec.analysis import (
    ALGORITHMS,
    CostModel,
    EnumerationOracle,
    bundled_suite,
    closed_form_alpha,
    decomposition_census,
    dominance_sweep,
    exact_output_distribution,
    instance_alpha,
    make_instance,
    random_instance,
    run_monte_carlo,
    run_verification,
    simulate_throughput,
)
from heterospec.errors import (
    InstanceTooLarge,
    MissingFirstTokenTable,
    VocabularyError,
)
from heterospec.stringlevel import LookaheadPolicy, compute_first_token_table
from heterospec.vocab import Vocabulary, complete_vocabulary

from conftest import HELLO_PARTS


# --- instances ---------------------------------------------------------------


def test_make_instance_shares_vocab_object_for_equal_texts():
    inst = make_instance("sd", ["a", "b"], (0.5, 0.5), ["a", "b"], (0.4, 0.6))
    assert inst.target_vocab is inst.draft_vocab


def test_instance_validation():
    with pytest.raises(VocabularyError):
        make_instance("nope", ["a"], (1.0,), ["a"], (1.0,))
    with pytest.raises(VocabularyError):
        make_instance("sd", ["a", "b"], (0.5, 0.5), ["a", "b"], (0.4, 0.6),
                      lookahead=0)


def test_bundled_suite_shape():
    suite = bundled_suite()
    assert len(suite) >= 20
    for algo in ALGORITHMS:
        assert sum(1 for i in suite if i.algorithm == algo) >= 4
    for inst in suite:
        assert len(inst.target_vocab) <= 4
        assert len(inst.draft_vocab) <= 4
        assert inst.lookahead <= 2
        assert inst.label


def test_random_instances_are_enumerable():
    rng = np.random.Generator(np.random.Philox(key=5))
    oracle = EnumerationOracle()
    for algo in ALGORITHMS:
        for _ in range(10):
            inst = random_instance(algo, rng)
            out = oracle.exact_output_distribution(inst)
            assert np.sum(out) == pytest.approx(1.0, abs=1e-9)


# --- closed forms ------------------------------------------------------------


def test_closed_form_sd_is_overlap():
    inst = make_instance("sd", ["a", "b"], (0.7, 0.3), ["a", "b"], (0.4, 0.6))
    assert instance_alpha(inst) == pytest.approx(0.7)  # min(.7,.4)+min(.3,.6)


def test_closed_form_tli_renormalizes():
    # uniform drafter over {a,b,c}, target (0.6,0.4) on {a,b}:
    # shared mass 2/3 -> q_hat (0.5,0.5) -> alpha 0.5 + 0.4 = 0.9
    inst = make_instance("tli", ["a", "b"], (0.6, 0.4),
                         ["a", "b", "c"], (1 / 3, 1 / 3, 1 / 3))
    assert instance_alpha(inst) == pytest.approx(0.9)


def test_closed_form_union_uses_raw_drafter_mass():
    inst = make_instance("union", ["a", "b"], (0.6, 0.4),
                         ["a", "b", "c"], (1 / 3, 1 / 3, 1 / 3))
    # no renormalization: min(.6,1/3) + min(.4,1/3) = 2/3
    assert instance_alpha(inst) == pytest.approx(2 / 3)


def test_closed_form_tli_zero_shared_mass():
    inst = make_instance("tli", ["a", "b"], (0.6, 0.4),
                         ["a", "b", "c"], (0.0, 0.0, 1.0))
    assert instance_alpha(inst) == 0.0


def test_closed_form_slem_is_collision_probability():
    inst = make_instance("slem", ["a", "b"], (0.5, 0.5), ["a", "b"], (0.5, 0.5))
    assert instance_alpha(inst) == pytest.approx(0.5)  # sum p*psi, psi=p
    skew = make_instance("slem", ["a", "b"], (0.7, 0.3), ["a", "b"], (0.7, 0.3))
    assert instance_alpha(skew) == pytest.approx(0.58)  # sum p^2 < 1


def test_closed_form_string_level_needs_table():
    inst = make_instance("slrs", ["a", "b"], (0.5, 0.5), ["a", "b"], (0.4, 0.6))
    with pytest.raises(MissingFirstTokenTable):
        closed_form_alpha("slrs", np.array([0.5, 0.5]), np.array([0.4, 0.6]),
                          inst.target_vocab, inst.draft_vocab)
    assert instance_alpha(inst) == pytest.approx(min(0.5, 0.4) + min(0.5, 0.6))


# --- the enumeration oracle --------------------------------------------------


def test_oracle_refuses_oversized_instances():
    texts = [f"t{i}" for i in range(6)]
    p = [1 / 6] * 6
    inst = make_instance("sd", texts, p, texts, p)
    with pytest.raises(InstanceTooLarge):
        EnumerationOracle(max_vocab=4).exact_output_distribution(inst)


def test_oracle_proposal_matches_first_token_table():
    """The oracle's brute-force proposal law must agree with the memoized
    table the implementation actually uses."""
    rng = np.random.Generator(np.random.Philox(key=77))
    oracle = EnumerationOracle()
    for _ in range(12):
        inst = random_instance("slrs", rng)
        psi_hat = oracle.proposal_distribution(inst)
        table = compute_first_token_table(
            inst.drafter, (), inst.target_vocab,
            inst.resolved_policy().resolve(inst.target_vocab, inst.draft_vocab))
        np.testing.assert_allclose(psi_hat, table.mass_vector(), atol=1e-12)


def test_oracle_equals_target_for_every_bundled_instance():
    worst = 0.0
    for inst in bundled_suite():
        out = exact_output_distribution(inst)
        p = np.asarray(inst.target.probs(()))
        worst = max(worst, float(np.max(np.abs(out - p))))
    assert worst <= 1e-12


# --- Monte Carlo -------------------------------------------------------------


def test_monte_carlo_is_deterministic():
    inst = make_instance("sd", ["a", "b"], (0.7, 0.3), ["a", "b"], (0.4, 0.6))
    a = run_monte_carlo(inst, 5000, master_seed=3)
    b = run_monte_carlo(inst, 5000, master_seed=3)
    assert a == b
    c = run_monte_carlo(inst, 5000, master_seed=4)
    assert a.empirical_alpha != c.empirical_alpha


def test_monte_carlo_trials_split_over_replicas():
    inst = make_instance("sd", ["a", "b"], (0.7, 0.3), ["a", "b"], (0.4, 0.6))
    rep = run_monte_carlo(inst, 10_001, master_seed=0, replicas=4)
    assert rep.trials == 10_001
    assert sum(rep.histogram) == 10_001


def test_monte_carlo_histogram_matches_oracle_chisquare():
    rng = np.random.Generator(np.random.Philox(key=12))
    for algo in ALGORITHMS:
        inst = random_instance(algo, rng)
        out = exact_output_distribution(inst)
        rep = run_monte_carlo(inst, 30_000, master_seed=9)
        hist = np.asarray(rep.histogram)
        keep = out > 1e-12
        assert hist[~keep].sum() == 0, algo
        chi2 = stats.chisquare(hist[keep], out[keep] * hist.sum())
        assert chi2.pvalue > 0.001, (algo, inst.label, hist, out)


def test_monte_carlo_degenerate_tli_reports_zero_trials():
    inst = make_instance("tli", ["a", "b"], (0.6, 0.4),
                         ["a", "b", "c"], (0.0, 0.0, 1.0))
    rep = run_monte_carlo(inst, 2000, master_seed=1)
    assert rep.trials == 0
    assert rep.empirical_alpha == 0.0
    assert rep.within()
    # emitted tokens still follow the target
    hist = np.asarray(rep.histogram, dtype=float)
    chi2 = stats.chisquare(hist, np.array([0.6, 0.4]) * hist.sum())
    assert chi2.pvalue > 0.001


# --- census ------------------------------------------------------------------


def test_census_power_law():
    v = complete_vocabulary(b"ab", 6)
    report = decomposition_census(v, ["a" * m for m in range(1, 7)])
    assert report.counts() == [1, 2, 4, 8, 16, 32]
    assert report.summary()["max"] == 32


def test_census_hello_vocabulary():
    report = decomposition_census(Vocabulary(HELLO_PARTS), ["Hello"])
    assert report.counts() == [14]
    assert report.entries[0].exact


def test_census_is_right_skewed_on_hello_parts():
    report = decomposition_census(Vocabulary(HELLO_PARTS), HELLO_PARTS)
    s = report.summary()
    assert s["mean"] > s["median"]  # a few long tokens carry the tail
    assert s["max"] == 14


def test_census_budget_marks_inexact():
    v = Vocabulary(["a", "aa"])
    report = decomposition_census(v, ["a" * 40], op_budget=3)
    assert not report.entries[0].exact


# --- throughput --------------------------------------------------------------


def test_throughput_closed_form_limits():
    cost = CostModel(0.1, lookahead=4)
    assert simulate_throughput(cost, 0.0).expected_tokens_per_iteration == 1.0
    assert simulate_throughput(cost, 1.0).expected_tokens_per_iteration == 5.0


def test_throughput_geometric_sum():
    rep = simulate_throughput(CostModel(0.05, lookahead=4), 0.8)
    want = (1 - 0.8**5) / (1 - 0.8)
    assert rep.expected_tokens_per_iteration == pytest.approx(want)
    assert rep.cost_per_iteration == pytest.approx(4 * 0.05 + 1.0)
    assert rep.tokens_per_cost == pytest.approx(want / 1.2)


def test_throughput_simulation_agrees_with_closed_form():
    rep = simulate_throughput(CostModel(0.05, lookahead=4), 0.8,
                              n_iterations=200_000, master_seed=3)
    rel = abs(rep.simulated_tokens_per_iteration
              - rep.expected_tokens_per_iteration) / rep.expected_tokens_per_iteration
    assert rel < 0.01


def test_cost_model_validation():
    with pytest.raises(VocabularyError):
        CostModel(0.0)
    with pytest.raises(VocabularyError):
        simulate_throughput(CostModel(0.1), 1.5)


# --- dominance ---------------------------------------------------------------


def test_dominance_sweep_clean():
    report = dominance_sweep(300, master_seed=2)
    assert report.violations == 0
    assert len(report.pairs) == 300


def test_dominance_strict_when_target_inside_drafter():
    """T subset of D with drafter mass outside T: renormalizing must
    strictly help."""
    p = (0.6, 0.4)
    q = (0.3, 0.3, 0.4)
    texts_t, texts_d = ["a", "b"], ["a", "b", "c"]
    union = instance_alpha(make_instance("union", texts_t, p, texts_d, q))
    tli = instance_alpha(make_instance("tli", texts_t, p, texts_d, q))
    assert union < tli


# --- gates -------------------------------------------------------------------


def test_run_verification_passes_at_pinned_seed():
    report = run_verification(master_seed=0, trials=5000,
                              instances_per_algorithm=2, dominance_instances=50)
    assert report.passed, [g.detail for g in report.gates if not g.passed]
    assert {g.name for g in report.gates} == {
        "losslessness_oracle", "rate_identity", "dominance", "throughput_model"
    }


def test_losslessness_gate_catches_broken_residual(monkeypatch):
    """Corrupt the residual law and the oracle gate must fail — the gate
    battery is not vacuous."""
    true_residual = engine.residual_distribution

    def biased(p_vec, q_vec):
        r = true_residual(p_vec, q_vec)
        r = r + 0.05
        return r / r.sum()

    monkeypatch.setattr(engine, "residual_distribution", biased)
    report = run_verification(master_seed=0, trials=2000,
                              instances_per_algorithm=1, dominance_instances=10)
    gate = {g.name: g for g in report.gates}["losslessness_oracle"]
    assert not gate.passed


def test_rate_gate_catches_broken_closed_form(monkeypatch):
    true_alpha = analysis.instance_alpha
    monkeypatch.setattr(analysis, "instance_alpha",
                        lambda inst, node_budget=None: min(1.0, true_alpha(inst) + 0.2))
    report = run_verification(master_seed=0, trials=5000,
                              instances_per_algorithm=2, dominance_instances=10)
    gate = {g.name: g for g in report.gates}["rate_identity"]
    assert not gate.passed


def test_read_trace_roundtrip(tmp_path):
    import json

    path = tmp_path / "t.jsonl"
    with open(path, "w") as fh:
        fh.write(json.dumps({"command": "generate", "seed": 1}) + "\n")
        fh.write(json.dumps({"step": 0, "emitted": [1]}) + "\n")
    config, records = analysis.read_trace(path)
    assert config["seed"] == 1
    assert records == [{"step": 0, "emitted": [1]}]


def test_read_trace_rejects_empty(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    with pytest.raises(VocabularyError):
        analysis.read_trace(path)
