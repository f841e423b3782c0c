"""Causal UCB scoring, a bandit regret harness and MCTS over concept sets."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .icp import CausalGraph, select_activation_set
from .simulator.base import SimProblem, Simulator, TrialOutcome
from .streams import Stream, as_stream

STOP = "<stop>"


@dataclass(frozen=True)
class UcbParams:
    beta: float = 1.0
    gamma: float = 0.5

    def __post_init__(self) -> None:
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")


@dataclass(frozen=True)
class NodeStats:
    q: float
    n_state: float
    n_action: float


def ucb_score(stats: NodeStats, params: UcbParams, e_hat: float) -> float:
    """``Q + beta * sqrt(ln N(s) / N(s,a)) + gamma * e_hat``."""
    if stats.n_state < 1:
        raise ValueError(f"N(s) must be >= 1, got {stats.n_state}")
    if stats.n_action < 1:
        raise ValueError("N(s,a) must be >= 1; unvisited actions are chosen before scoring")
    return stats.q + params.beta * math.sqrt(math.log(stats.n_state) / stats.n_action) + params.gamma * e_hat


def shaped_reward(correct: int, e_hat: float, lam: float) -> float:
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return correct + lam * e_hat


# -- bandits ---------------------------------------------------------------------


@dataclass(frozen=True)
class Arm:
    name: str
    mean: float
    e_hat: float = 0.0


@dataclass(frozen=True)
class BanditInstance:
    arms: tuple[Arm, ...]

    def __post_init__(self) -> None:
        if not self.arms:
            raise ValueError("a bandit needs at least one arm")
        for arm in self.arms:
            if not 0.0 <= arm.mean <= 1.0:
                raise ValueError(f"arm {arm.name} mean {arm.mean} outside [0, 1]")

    @property
    def means(self) -> np.ndarray:
        return np.array([a.mean for a in self.arms])

    @property
    def best_mean(self) -> float:
        return float(self.means.max())

    def with_e_hats(self, e_hats: Sequence[float]) -> "BanditInstance":
        if len(e_hats) != len(self.arms):
            raise ValueError("need one e_hat per arm")
        return BanditInstance(tuple(Arm(a.name, a.mean, float(e)) for a, e in zip(self.arms, e_hats)))

    def oracle(self) -> "BanditInstance":
        """Effects measured against the worst arm, as a do-contrast would."""
        low = self.means.min()
        return self.with_e_hats(self.means - low)


def two_arm_instance() -> BanditInstance:
    return BanditInstance((Arm("a0", 0.9), Arm("a1", 0.1))).oracle()


def ten_arm_instance() -> BanditInstance:
    means = [0.6, 0.55, 0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2, 0.15]
    return BanditInstance(tuple(Arm(f"a{i}", m) for i, m in enumerate(means))).oracle()


@dataclass(frozen=True)
class Policy:
    name: str
    params: UcbParams

    @classmethod
    def ucb1(cls, beta: float = 1.0) -> "Policy":
        return cls("UCB1", UcbParams(beta, 0.0))

    @classmethod
    def causal(cls, params: UcbParams | None = None) -> "Policy":
        return cls("MathCausalUCB", params or UcbParams())


@dataclass
class RegretTrace:
    arms: np.ndarray
    rewards: np.ndarray
    regret: np.ndarray  # instantaneous pseudo-regret

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def total(self) -> float:
        return float(self.regret.sum())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["step", "arm", "reward", "instantaneous_regret", "cumulative_regret"])
            for t, (a, r, g, c) in enumerate(zip(self.arms, self.rewards, self.regret, self.cumulative), start=1):
                writer.writerow([t, int(a), int(r), repr(float(g)), repr(float(c))])


def run_bandit(instance: BanditInstance, policy: Policy, horizon: int, rng: Stream | int) -> RegretTrace:
    """Play ``horizon`` rounds.

    Every arm is pulled once in index order, then the arm with the highest
    score is pulled, ties going to the lowest index.  Rewards come from a
    per-arm tape (the k-th pull of arm a always sees the same uniform), so
    two policies run on the same seed face identical luck.
    """
    k = len(instance.arms)
    if horizon < k:
        raise ValueError(f"horizon {horizon} is shorter than the number of arms {k}")
    tape = as_stream(rng).rng("bandit.rewards").random((k, horizon))
    means = [a.mean for a in instance.arms]
    bonus = [policy.params.gamma * a.e_hat for a in instance.arms]
    beta = policy.params.beta
    best = max(means)
    pulls = [0] * k
    sums = [0.0] * k
    arms = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon, dtype=np.int64)
    for t in range(horizon):
        if t < k:
            a = t
        else:
            log_n = math.log(t + 1)  # N(s): one root visit plus t pulls
            a, top = 0, -math.inf
            for i in range(k):
                score = sums[i] / pulls[i] + beta * math.sqrt(log_n / pulls[i]) + bonus[i]
                if score > top:
                    a, top = i, score
        r = 1 if tape[a, pulls[a]] < means[a] else 0
        pulls[a] += 1
        sums[a] += r
        arms[t] = a
        rewards[t] = r
    regret = best - np.asarray(means)[arms]
    return RegretTrace(arms, rewards, regret)


# -- MCTS -----------------------------------------------------------------------------


@dataclass
class SearchNode:
    activated: tuple[str, ...]
    action: str | None = None
    parent: "SearchNode | None" = None
    children: dict[str, "SearchNode"] = field(default_factory=dict)
    visits: int = 0
    value: float = 0.0
    last_outcome: TrialOutcome | None = None
    order: int = 0

    @property
    def terminal(self) -> bool:
        return self.action == STOP

    @property
    def q(self) -> float:
        return self.value / self.visits if self.visits else 0.0

    def path(self) -> list[str]:
        out, node = [], self
        while node.parent is not None:
            out.append(node.action)
            node = node.parent
        return out[::-1]

    def walk(self):
        yield self
        for child in self.children.values():
            yield from child.walk()


@dataclass
class MctsResult:
    outcome: TrialOutcome | None
    solved: bool
    iterations: int
    trace: list[dict]
    root: SearchNode
    activated: tuple[str, ...] = ()

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for row in self.trace:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _actions(node: SearchNode, pool: list[str]) -> list[str]:
    actions = [c for c in pool if c not in node.activated]
    if node.activated:
        actions.append(STOP)
    return actions


def run_mcts(problem: SimProblem, sim: Simulator, graph: CausalGraph, budget: int, params: UcbParams | None,
             rng: Stream | int, reward_lambda: float | None = None) -> MctsResult:
    """Search over activation sets drawn from the significant concepts.

    The root is the empty set.  Actions add one concept from K* (tried in
    K* order when unvisited) or STOP, which re-evaluates the current set.
    Each iteration runs exactly one do-trial.  Effects are the frozen
    Phase-1 estimates; STOP carries no effect term.  With
    ``reward_lambda`` set, backed-up rewards are shaped by the effect of
    the action that led to the rolled-out node.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    params = params or UcbParams()
    pool = select_activation_set(graph)
    e_hat = {e.concept: e.e_hat for e in graph.edges}
    e_hat[STOP] = 0.0
    root = SearchNode(activated=(), visits=1)
    if not pool:
        return MctsResult(None, False, 0, [], root)
    stream = as_stream(rng).child("mcts")
    trace: list[dict] = []
    created = 0
    for it in range(budget):
        node = root
        while True:
            actions = _actions(node, pool)
            if node.terminal or not actions:
                leaf = node
                break
            fresh = next((a for a in actions if a not in node.children), None)
            if fresh is not None:
                created += 1
                activated = node.activated if fresh == STOP else node.activated + (fresh,)
                leaf = SearchNode(activated, fresh, node, order=created)
                node.children[fresh] = leaf
                break
            best, top = None, -math.inf
            for a in actions:
                child = node.children[a]
                score = ucb_score(NodeStats(child.q, node.visits, child.visits), params, e_hat[a])
                if score > top:
                    best, top = child, score
            node = best
        outcome = sim.do_trial(problem, list(leaf.activated), stream.rng(it))
        reward = float(outcome.correct)
        if reward_lambda is not None:
            reward = shaped_reward(outcome.correct, e_hat[leaf.action], reward_lambda)
        leaf.last_outcome = outcome
        back = leaf
        while back is not None:
            back.visits += 1
            back.value += reward
            back = back.parent
        trace.append({"iteration": it, "path": leaf.path(), "activated": list(leaf.activated),
                      "reward": reward, "correct": outcome.correct})
        if outcome.correct:
            return MctsResult(outcome, True, it + 1, trace, root, leaf.activated)
    nodes = [n for n in root.walk() if n is not root and n.last_outcome is not None]
    best = max(nodes, key=lambda n: (n.q, n.visits, -n.order))
    return MctsResult(best.last_outcome, False, budget, trace, root, best.activated)


__all__ = [
    "Arm", "BanditInstance", "MctsResult", "NodeStats", "Policy", "RegretTrace", "STOP", "SearchNode", "UcbParams",
    "run_bandit", "run_mcts", "shaped_reward", "ten_arm_instance", "two_arm_instance", "ucb_score",
]
