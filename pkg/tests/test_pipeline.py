import json

import pytest

from cika.pipeline import (Phase, PipelineConfig, PipelineResult, ProtocolError, assemble_candidates,
                           multi_lens_recover, run_pipeline, run_rq1_protocol, run_suite, summarize, summary_rows)
from cika.retrieval import Bm25Index, CorpusDoc
from cika.scm import DiscreteStudentScm
from cika.simulator import (LENSES, ConceptDiagnosis, CountingSimulator, Level, SimulatorError,
                            SyntheticSimulator, TrialOutcome)
from cika.simulator.base import ScmBinding, SimProblem
from cika.suites import (always_correct_problem, key_effect, latent_knowledge_problem, latent_knowledge_suite,
                         lens_problem, no_knowledge_problem, rq1_suite)

SIM = SyntheticSimulator()


def test_config_defaults():
    c = PipelineConfig()
    assert (c.m_trials, c.budget_b, c.beta, c.gamma, c.alpha, c.bm25_top_k) == (10, 60, 1.0, 0.5, 0.05, 8)
    assert c.lens_order == LENSES and c.reward_lambda is None
    assert c.obs_trials(SIM) == 10
    assert c.obs_trials(type("E", (), {"kind": "endpoint"})()) == 5
    assert PipelineConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ValueError):
        PipelineConfig(lens_order=LENSES[:-1])
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"m_trails": 3})


def test_always_correct_exits_at_srv():
    sim = CountingSimulator(SIM)
    result = run_pipeline(always_correct_problem(), sim, None, PipelineConfig(), 0)
    assert result.phase_solved is Phase.SRV and result.llm_call_count == 1
    assert result.icp_table == [] and sim.trial_calls == 1 and sim.counts["do"] == 0


def test_no_knowledge_attempts_everything():
    sim = CountingSimulator(SIM)
    result = run_pipeline(no_knowledge_problem(), sim, None, PipelineConfig(), 0)
    assert result.phase_solved is Phase.UNSOLVED and result.correct == 0
    assert len(result.icp_table) == 3 and result.activation_set == [] and result.mcts_trace == []
    assert result.lens_attempts == list(LENSES) and result.calls.lenses == 12
    assert result.llm_call_count == 1 + 10 + 30 + 0 + 12 == sim.trial_calls


def test_latent_knowledge_solved_at_mcts():
    problem = latent_knowledge_problem("lk", 6.0, ["Vieta's Formulas", "Law of Cosines", "Stars and Bars",
                                                   "Binomial Theorem"])
    assert key_effect(problem) == pytest.approx(0.9, abs=0.03)
    assert 0.03 < SIM.baseline_rate(problem) < 0.07
    phases = [run_pipeline(problem, SIM, None, PipelineConfig(), seed).phase_solved for seed in range(100)]
    failed = [p for p in phases if p is not Phase.SRV]
    assert sum(p is Phase.MCTS for p in failed) >= 0.95 * len(failed)


def test_call_ledger_matches_formula_on_suite():
    config = PipelineConfig()
    for problem in latent_knowledge_suite(40, seed=3):
        sim = CountingSimulator(SIM)
        result = run_pipeline(problem, sim, None, config, 1)
        assert result.llm_call_count == result.expected_call_count(config, 10) == sim.trial_calls
        assert result.calls.concept_gap == sim.counts["gap"] == (0 if result.phase_solved is Phase.SRV else 1)
        if result.phase_solved is Phase.SRV:
            assert result.icp_table == []


def test_default_budget_with_five_candidates():
    names = ["Vieta's Formulas", "Law of Cosines", "Stars and Bars", "Binomial Theorem", "Shoelace Formula",
             "Legendre's Formula"]
    problem = latent_knowledge_problem("five", 0.0, names)  # one HIGH concept, five candidates
    result = run_pipeline(problem, SIM, None, PipelineConfig(), 0)
    assert len(result.candidates) == 5
    assert result.llm_call_count <= 1 + 10 + 50 + 60 + 12


def test_replay_deterministic():
    problem = latent_knowledge_suite(5, seed=1)[2]
    a = run_pipeline(problem, SIM, None, PipelineConfig(), 11)
    b = run_pipeline(problem, SIM, None, PipelineConfig(), 11)
    assert a == b


def test_assemble_candidates_rules():
    class Scripted(SyntheticSimulator):
        def concept_gap(self, problem, failed_answer, rng):
            return [ConceptDiagnosis("hi", Level.HIGH), ConceptDiagnosis("med", Level.MEDIUM),
                    ConceptDiagnosis("low", Level.LOW)]

    problem = no_knowledge_problem()
    index = Bm25Index([CorpusDoc("d1", problem.statement, ("x", "y")), CorpusDoc("d2", "unrelated text", ("z",))])
    config = PipelineConfig()
    assert assemble_candidates(problem, Scripted(), "", index, config, 0) == ["med", "low", "x", "y"]
    overlap = Bm25Index([CorpusDoc("d1", problem.statement, ("x", "low"))])
    assert assemble_candidates(problem, Scripted(), "", overlap, config, 0) == ["med", "low", "x"]
    assert assemble_candidates(problem, Scripted(), "", None, config, 0) == ["med", "low"]


def test_empty_candidates_jump_to_lenses():
    class Silent(SyntheticSimulator):
        def concept_gap(self, problem, failed_answer, rng):
            return []

    result = run_pipeline(no_knowledge_problem(), Silent(), None, PipelineConfig(), 0)
    assert result.candidates == [] and result.graph is None and len(result.lens_attempts) == 12
    assert result.llm_call_count == 1 + 10 + 12


def test_lens_recovery_first_success():
    problem = lens_problem()
    out = multi_lens_recover(problem, SIM, PipelineConfig(), 0)
    assert out.lens_used == "extremal principle" and len(out.attempts) == 7
    order = ("extremal principle",) + tuple(lens for lens in LENSES if lens != "extremal principle")
    assert multi_lens_recover(problem, SIM, PipelineConfig(lens_order=order), 0).attempts == ["extremal principle"]
    result = run_pipeline(problem, SIM, None, PipelineConfig(), 0)
    assert result.phase_solved is Phase.RECOVERY and result.lens_used == "extremal principle"
    failed = multi_lens_recover(no_knowledge_problem(), SIM, PipelineConfig(), 0)
    assert failed.lens_used is None and len(failed.attempts) == 12


def test_simulator_error_gives_flagged_partial_result():
    class Flaky(SyntheticSimulator):
        def do_trial(self, problem, concepts, rng):
            raise SimulatorError("endpoint went away")

    result = run_pipeline(no_knowledge_problem(), Flaky(), None, PipelineConfig(), 0)
    assert result.error and "endpoint went away" in result.error
    assert result.last_phase == "ICP" and result.phase_solved is Phase.UNSOLVED and result.baseline is not None


def test_unknown_retrieved_concept_is_flagged():
    problem = no_knowledge_problem()
    index = Bm25Index([CorpusDoc("d", problem.statement, ("Not A Bound Concept",))])
    result = run_pipeline(problem, SIM, index, PipelineConfig(), 0)
    assert result.error is not None and "Not A Bound Concept" in result.error


def test_suite_summary_direction():
    suite = latent_knowledge_suite(60, seed=5)
    results = run_suite(suite, SIM, None, PipelineConfig(), seed=0)
    summary = summarize(results)
    assert summary["mean_max_icp_solved"] > summary["mean_max_icp_unsolved"]
    assert summary["cka_fraction"] > 0
    assert len(summary_rows(results)) == 60


def test_suite_parallel_and_resume(tmp_path):
    suite = latent_knowledge_suite(12, seed=8)
    serial = run_suite(suite, SIM, None, PipelineConfig(), seed=4)
    parallel = run_suite(suite, SIM, None, PipelineConfig(), seed=4, jobs=4)
    assert [r.to_dict() for r in serial] == [r.to_dict() for r in parallel]
    ckpt = tmp_path / "ckpt"
    run_suite(suite[:5], SIM, None, PipelineConfig(), seed=4, checkpoint_dir=ckpt)  # "killed" after 5
    assert len(list(ckpt.glob("*.json"))) == 5
    resumed = run_suite(suite, SIM, None, PipelineConfig(), seed=4, checkpoint_dir=ckpt)
    assert summary_rows(resumed) == summary_rows(serial)
    assert [r.to_dict() for r in resumed] == [r.to_dict() for r in serial]
    doc = json.loads(next(ckpt.glob("*.json")).read_text())
    assert PipelineResult.from_dict(doc).to_dict() == doc


# -- validation protocol -----------------------------------------------------------


def test_rq1_synthetic_suite_recovers_construction():
    suite = rq1_suite(67, seed=0)
    config = PipelineConfig(rq1_m_trials=400, rq1_n_obs=400)
    report = run_rq1_protocol(suite, SIM, None, config, 0)
    construction = sum(SIM.do_rate(p, [p.binding.concepts[0]]) - SIM.baseline_rate(p) for p in suite) / len(suite)
    assert report.n == 67
    assert abs(report.top1_mean - construction) <= 0.05
    assert abs(report.control_mean) <= 0.05
    assert report.cohens_d is not None and report.cohens_d > 0 and report.p_value < 1e-6
    assert "Top-1 ICP" in report.markdown() and "Cohen's d" in report.markdown()


def test_rq1_all_screened_out():
    with pytest.raises(ProtocolError):
        run_rq1_protocol([always_correct_problem("a"), always_correct_problem("b")], SIM, None, PipelineConfig(), 0)


def test_rq1_zero_variance_is_undefined():
    class Deterministic(SyntheticSimulator):
        def baseline_trial(self, problem, rng):
            return TrialOutcome(0)

        def do_trial(self, problem, concepts, rng):
            return TrialOutcome(1 if concepts[0] == "good" else 0)

    scm = DiscreteStudentScm((0.0,), (1.0,), ((0.0, 0.0),) * 3, (0.0, 0.0, 0.0, 0.0), 0.0)
    problems = [SimProblem(pid, "x", "42", "algebra", ScmBinding(scm, ("good", "bad", "ctrl"), control="ctrl"))
                for pid in ("p1", "p2")]
    report = run_rq1_protocol(problems, Deterministic(), None, PipelineConfig(screen_low=0.0), 0)
    assert report.paired_t is None and report.cohens_d is None and report.p_value is None
    assert report.advantage_mean == 1.0
    assert "undefined" in report.markdown()
