import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cika import fixtures
from cika.icp import BaselineStats, IcpEstimate, build_causal_graph
from cika.search import (STOP, Arm, BanditInstance, NodeStats, Policy, UcbParams, run_bandit, run_mcts,
                         shaped_reward, ten_arm_instance, two_arm_instance, ucb_score)
from cika.simulator import SyntheticSimulator, TrialOutcome

from conftest import bind

SIM = SyntheticSimulator()


def test_ucb_score_examples():
    assert ucb_score(NodeStats(0.0, 1, 1), UcbParams(3.0, 0.5), 0.0) == 0.0
    assert ucb_score(NodeStats(0.5, math.e ** 2, 2), UcbParams(1.0, 0.5), 0.2) == pytest.approx(1.6)
    with pytest.raises(ValueError):
        ucb_score(NodeStats(0.5, 0, 1), UcbParams(), 0.0)
    with pytest.raises(ValueError):
        ucb_score(NodeStats(0.5, 3, 0), UcbParams(), 0.0)
    with pytest.raises(ValueError):
        UcbParams(-1.0, 0.0)


stats = st.builds(NodeStats, st.floats(0, 1), st.integers(1, 10 ** 6), st.integers(1, 10 ** 6))


@given(stats, st.floats(0, 5), st.floats(-1, 1))
def test_gamma_zero_is_ucb1(s, beta, e):
    plain = s.q + beta * math.sqrt(math.log(s.n_state) / s.n_action)
    assert ucb_score(s, UcbParams(beta, 0.0), e) == pytest.approx(plain, abs=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=6), st.floats(-2, 2), stats)
def test_constant_shift_keeps_argmax(e_hats, shift, s):
    params = UcbParams(1.0, 0.5)
    scores = [ucb_score(s, params, e) for e in e_hats]
    shifted = [ucb_score(s, params, e + shift) for e in e_hats]
    top = max(scores)
    assume_gap = sorted(scores)[-2] < top - 1e-9 if len(scores) > 1 else True
    if assume_gap:
        assert int(np.argmax(scores)) == int(np.argmax(shifted))


def test_shaped_reward():
    assert shaped_reward(1, 0.2, 0.1) == pytest.approx(1.02)
    assert shaped_reward(0, 0.3, 0.3) == pytest.approx(0.09)
    assert shaped_reward(1, 0.7, 0.0) == 1.0 and shaped_reward(0, 0.7, 0.0) == 0.0
    with pytest.raises(ValueError):
        shaped_reward(1, 0.2, -0.1)


# -- bandits ----------------------------------------------------------------------


def test_single_arm_has_zero_regret():
    trace = run_bandit(BanditInstance((Arm("only", 0.3),)), Policy.causal(), 500, 0)
    assert trace.total == 0.0


def test_bandit_pulls_each_arm_first():
    trace = run_bandit(ten_arm_instance(), Policy.ucb1(), 50, 1)
    assert list(trace.arms[:10]) == list(range(10))
    with pytest.raises(ValueError):
        run_bandit(ten_arm_instance(), Policy.ucb1(), 5, 1)


@pytest.mark.parametrize("seed", range(10))
def test_gamma_zero_trace_equals_ucb1(seed):
    inst = ten_arm_instance()
    a = run_bandit(inst, Policy("MathCausalUCB", UcbParams(1.0, 0.0)), 3000, seed)
    b = run_bandit(inst, Policy.ucb1(), 3000, seed)
    assert np.array_equal(a.arms, b.arms) and np.array_equal(a.rewards, b.rewards)


def test_regret_monotone_and_bounded():
    inst = ten_arm_instance()
    trace = run_bandit(inst, Policy.causal(), 2000, 3)
    cum = trace.cumulative
    assert np.all(np.diff(cum) >= 0)
    assert cum[-1] <= 2000 * (inst.best_mean - inst.means.min()) + 1e-9


def test_causal_beats_ucb1_two_arm_small():
    inst = two_arm_instance()
    assert [a.e_hat for a in inst.arms] == pytest.approx([0.8, 0.0])
    wins = sum(run_bandit(inst, Policy.causal(), 2000, s).total < run_bandit(inst, Policy.ucb1(), 2000, s).total
               for s in range(20))
    assert wins >= 17


def test_adversarial_prior_still_sublinear():
    inst = two_arm_instance().with_e_hats([-0.8, 0.0])
    trace = run_bandit(inst, Policy.causal(), 20_000, 0)
    assert trace.total / 20_000 < 0.05


def test_regret_csv(tmp_path):
    path = tmp_path / "r.csv"
    run_bandit(two_arm_instance(), Policy.ucb1(), 20, 0).write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["step", "arm", "reward", "instantaneous_regret", "cumulative_regret"]
    assert len(rows) == 21 and rows[1][:2] == ["1", "0"] and rows[2][:2] == ["2", "1"]


def test_bandit_rejects_bad_means():
    with pytest.raises(ValueError):
        BanditInstance((Arm("x", 1.5),))


# -- MCTS --------------------------------------------------------------------------------


def graph_of(counts, n_obs=10, base_successes=0, config=None):
    base = BaselineStats(base_successes / n_obs, n_obs)
    return build_causal_graph([IcpEstimate.from_counts(c, s, 10, base) for c, s in counts], config)


def test_mcts_noop_on_empty_activation_set():
    result = run_mcts(bind(fixtures.table_x()), SIM, graph_of([("c0", 0)]), 60, UcbParams(), 0)
    assert result.outcome is None and result.iterations == 0 and result.trace == []


def test_mcts_near_deterministic_concept():
    scm = fixtures.DiscreteStudentScm((0.5,), (1.0,), ((-60.0, 0.0),), (-60.0, 120.0), 0.0)
    result = run_mcts(bind(scm), SIM, graph_of([("c0", 10)]), 60, UcbParams(), 0)
    assert result.solved and result.iterations <= 3 and result.activated == ("c0",)


def pair_graph():
    # the irrelevant c0 gets the largest estimated effect
    return graph_of([("c0", 6), ("c1", 4), ("c2", 4)])


def test_pair_fixture_single_clamps_are_weak():
    scm = fixtures.pair_threshold_scm()
    singles = [scm.outcome_marginal({i: 1}) for i in range(3)]
    assert max(singles) < 0.06 and scm.outcome_marginal({1: 1, 2: 1}) > 0.8


def test_mcts_finds_pair():
    problem = bind(fixtures.pair_threshold_scm())
    assert [e.concept for e in pair_graph().edges if e.significant] == ["c0", "c1", "c2"]
    solved = sum(run_mcts(problem, SIM, pair_graph(), 60, UcbParams(), seed).solved for seed in range(100))
    assert solved >= 90


def test_mcts_visit_invariant_and_budget():
    problem = bind(fixtures.pair_threshold_scm(), gold="never")

    class Never(SyntheticSimulator):
        def do_trial(self, problem, concepts, rng):
            return TrialOutcome(0, "", 0.0, 0)

    result = run_mcts(problem, Never(), pair_graph(), 40, UcbParams(), 0)
    assert not result.solved and result.iterations == 40 and len(result.trace) == 40
    for node in result.root.walk():
        if node.children:
            assert node.visits == sum(c.visits for c in node.children.values()) + 1
        assert all(c.action not in node.activated for c in node.children.values())
        if not node.activated:
            assert STOP not in node.children
    assert result.root.visits == 41


def test_mcts_unvisited_children_in_effect_order():
    class Never(SyntheticSimulator):
        def do_trial(self, problem, concepts, rng):
            return TrialOutcome(0, "", 0.0, 0)

    result = run_mcts(bind(fixtures.pair_threshold_scm()), Never(), pair_graph(), 3, UcbParams(), 0)
    assert [row["path"] for row in result.trace] == [["c0"], ["c1"], ["c2"]]


def test_mcts_shaped_reward_and_trace(tmp_path):
    problem = bind(fixtures.pair_threshold_scm())
    result = run_mcts(problem, SIM, pair_graph(), 60, UcbParams(), 0, reward_lambda=0.1)
    first = result.trace[0]
    assert first["reward"] == pytest.approx(first["correct"] + 0.1 * 0.6)
    path = tmp_path / "trace.jsonl"
    result.write_trace(path)
    rows = [json.loads(line) for line in open(path)]
    assert rows == result.trace and {"iteration", "path", "reward"} <= set(rows[0])


def test_mcts_deterministic_for_seed():
    problem = bind(fixtures.pair_threshold_scm())
    a = run_mcts(problem, SIM, pair_graph(), 60, UcbParams(), 5)
    b = run_mcts(problem, SIM, pair_graph(), 60, UcbParams(), 5)
    assert a.trace == b.trace


def test_mcts_bad_budget():
    with pytest.raises(ValueError):
        run_mcts(bind(fixtures.table_x()), SIM, pair_graph(), 0, UcbParams(), 0)
