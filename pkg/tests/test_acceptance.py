"""Acceptance suite: one test per acceptance criterion, each printing one status line."""

import json
import time

import pytest

from cika import experiments as ex
from cika.cli import main
from cika.icp import required_samples
from cika.pipeline import PipelineConfig
from cika.retrieval import ingest, query
from cika.simulator import CountingSimulator, SyntheticSimulator, prompts
from cika.simulator.endpoint import DEFAULT_NEGATIVE_CONTROLS
from cika.suites import latent_knowledge_suite, rq1_suite

import oracles
from test_retrieval import AVGDL, DOCS, write


def report(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {number} {'PASS' if ok else 'FAIL'}: {detail}")


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


def checks_ok(experiment, names=None):
    picked = [c for c in experiment.checks if names is None or c.name in names]
    return bool(picked) and all(c.passed for c in picked), "; ".join(c.line() for c in picked)


def test_criterion_01_backdoor_identity(capsys):
    experiment, secs = timed(ex.backdoor_identity)
    worst = max(r["residual"] for r in experiment.table.rows)
    ok = experiment.ok and experiment.summary["fixtures"] >= 5 and worst < 1e-12 and secs < 1.0
    report(capsys, 1, ok, f"{experiment.summary['fixtures']} fixtures, max residual {worst:.1e}, {secs:.2f}s")
    assert ok


def test_criterion_02_confounding_bias(capsys):
    experiment, secs = timed(ex.confounding_demo, seed=0, n_samples=100_000, w_ds=(4.0,))
    passed, lines = checks_ok(experiment, {"null-control", "strong-confounding"})
    ok = passed and secs < 30.0
    report(capsys, 2, ok, f"{lines}; {secs:.1f}s")
    assert ok


def test_criterion_03_convergence_rate(capsys):
    experiment, secs = timed(ex.icp_convergence, seed=0, ms=(10, 40, 160, 640), replications=200, jobs=1)
    slope = experiment.summary["slope"]
    ok = slope is not None and -0.6 <= slope <= -0.4 and secs < 120.0
    report(capsys, 3, ok, f"RMSE log-log slope {slope:.3f}, {secs:.1f}s")
    assert ok


def test_criterion_04_error_decomposition(capsys):
    experiment, secs = timed(ex.delta_decomposition, seed=0, deltas=(0.0, 0.1, 0.2, 0.4), ms=(100, 1000, 10_000),
                             jobs=1)
    passed, lines = checks_ok(experiment, {"plateau-monotone", "zero-delta-unbiased"})
    ok = passed and secs < 120.0
    report(capsys, 4, ok, f"{lines}; {secs:.1f}s")
    assert ok


def test_criterion_05_regret(capsys):
    experiment, secs = timed(ex.regret, seed=0, n_seeds=50, horizon=10_000, jobs=1)
    names = {f"{kind}-{label}" for kind in ("sign-test", "gamma0-equals-ucb1") for label in ("two-arm", "ten-arm")}
    passed, lines = checks_ok(experiment, names)
    p_values = [experiment.summary[label]["p_value"] for label in ("two-arm", "ten-arm")]
    ok = passed and len([c for c in experiment.checks if c.name in names]) == 4 and max(p_values) < 0.01 \
        and secs < 120.0
    report(capsys, 5, ok, f"sign-test p = {p_values[0]:.1e} / {p_values[1]:.1e}, gamma=0 traces equal; {secs:.1f}s")
    assert ok


def test_criterion_06_sample_complexity(capsys):
    n = required_samples(50, 0.1, 0.05)
    ok = n == 1521 and isinstance(n, int)
    report(capsys, 6, ok, f"required_samples(50, 0.1, 0.05) = {n}")
    assert ok


def test_criterion_07_nonidentifiability(capsys):
    experiment = ex.nonident_witness(seed=0, instances=100)
    diff = min(r["max_abs_diff"] for r in experiment.table.rows)
    resid = max(r["sigma_u_residual"] for r in experiment.table.rows)
    ok = experiment.ok and len(experiment.table.rows) == 100 and diff >= 1e-3 and resid < 1e-10
    report(capsys, 7, ok, f"100 instances, min witness gap {diff:.2e}, max residual {resid:.1e}")
    assert ok


def test_criterion_08_chain_identification(capsys):
    experiment = ex.chain_identification(seed=0, ns=(4, 5, 6, 7, 8), n_seeds=100, jobs=1)
    rates = {}
    for row in experiment.table.rows:
        rates.setdefault(row["n"], []).append(row["recovered"] and row["interventions"] == row["n"] - 1)
    ok = experiment.ok and sorted(rates) == [4, 5, 6, 7, 8] and all(sum(v) >= 95 and len(v) == 100
                                                                   for v in rates.values())
    report(capsys, 8, ok, ", ".join(f"n={n}: {sum(v)}/{len(v)}" for n, v in sorted(rates.items())))
    assert ok


def test_criterion_09_pipeline(capsys):
    config = PipelineConfig()
    counting = CountingSimulator(SyntheticSimulator())
    (experiment, results), secs = timed(ex.pipeline_study, latent_knowledge_suite(100), counting, None, config,
                                        seed=0)
    n_obs = config.obs_trials(counting)
    # independent tally: every simulator call is counted at the source and must match the formula
    formula = sum(1 if r.phase_solved.name == "SRV" else
                  1 + n_obs + config.m_trials * len(r.candidates) + len(r.mcts_trace) + len(r.lens_attempts)
                  for r in results)
    ledger = sum(r.llm_call_count for r in results)
    passed, lines = checks_ok(experiment, {"call-ledger", "cka-rate", "max-icp-split"})
    names = {c.name for c in experiment.checks}
    ok = passed and {"call-ledger", "cka-rate", "max-icp-split"} <= names and counting.trial_calls == ledger \
        == formula and secs < 600.0
    report(capsys, 9, ok, f"{lines}; {ledger} calls; {secs:.1f}s")
    assert ok


def test_criterion_10_rq1_protocol(capsys, tmp_path, mock_server):
    config = PipelineConfig(rq1_m_trials=400)
    experiment, rq1 = ex.rq1_study(rq1_suite(67), SyntheticSimulator(), None, config, seed=0)
    markdown = experiment.text["rq1-report.md"]
    table_ok = experiment.ok and len(rq1.table()) == 11 and markdown.count("\n") == 13 and "undefined" not in markdown

    app, url = mock_server
    statements = [f"Compute 6 times 7, variant {i}." for i in range(4)]
    problems = tmp_path / "problems.jsonl"
    problems.write_text("".join(json.dumps({"id": f"q{i}", "statement": s, "gold_answer": "42", "domain": "algebra"})
                                + "\n" for i, s in enumerate(statements)))
    audit = tmp_path / "audit.jsonl"
    code = main(["rq1", str(problems), "--mode", "endpoint", "--endpoint-url", url, "--model", "mock-7b",
                 "--audit-log", str(audit), "--jobs", "1", "--out", str(tmp_path / "out")])
    capsys.readouterr()
    bodies = [json.loads(line)["request_body"].encode() for line in audit.read_text().splitlines()]
    literal = (
        '{"model":"mock-7b","messages":[{"role":"system","content":"You are an expert mathematician."},'
        '{"role":"user","content":"Compute 6 times 7, variant 0.\\n\\nSolve the problem. '
        'Put the final answer in \\\\boxed{}."}],"temperature":0.7,"max_tokens":1024}'
    ).encode()
    documented = set()
    for s in statements:
        documented.add(prompts.request_body("mock-7b", prompts.baseline_messages(s), 0.7, 1024))
        documented.add(prompts.request_body("mock-7b", prompts.diagnostic_messages(s, ""), 0.7, 1024))
        for concept in ("Vieta's Formulas", "Stars and Bars", DEFAULT_NEGATIVE_CONTROLS["algebra"]):
            documented.add(prompts.request_body("mock-7b", prompts.intervention_messages(s, [concept]), 0.7, 1024))
    wire_ok = code == 0 and bodies == app.state.requests and bodies[0] == literal and \
        set(bodies) <= documented
    ok = table_ok and wire_ok
    report(capsys, 10, ok, f"{rq1.n} problems, 11-row report, top-1 {rq1.top1_mean:+.3f} vs control "
                           f"{rq1.control_mean:+.3f}; endpoint sent {len(bodies)} documented bodies, first is bit-exact")
    assert ok


def test_criterion_11_bm25(capsys, tmp_path):
    index = ingest(write(tmp_path / "corpus.jsonl", DOCS))
    self_hits = [query(index, doc["text"], 1)[0].doc_id == doc["id"] for doc in DOCS]
    hits = query(index, "roots", 5)
    expected = [oracles.bm25_term(1, 2, 3, 7, AVGDL), oracles.bm25_term(1, 2, 3, 8, AVGDL)]
    err = max(abs(h.score - e) for h, e in zip(hits, expected))
    ok = all(self_hits) and [h.doc_id for h in hits] == ["d3", "d2"] and err < 1e-9
    report(capsys, 11, ok, f"self-retrieval {sum(self_hits)}/{len(DOCS)}, max score error {err:.1e}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
