"""Interventional capability probes.

An ICP estimate contrasts the success rate of M do-trials that assume one
concept is mastered against the unintervened baseline rate.  This module
also builds the significance-filtered concept graph, picks the activation
set, classifies probe results and hosts the confounding experiment and the
concentration formulas used to size the probes.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import NormalDist
from typing import Callable, Iterable, Sequence

import numpy as np

from .scm import DiscreteStudentScm, observational_conditional, sample_do, sample_observational, true_effect
from .simulator.base import SimProblem, Simulator, TrialOutcome
from .streams import Stream, as_stream


@dataclass(frozen=True)
class BaselineStats:
    p_bar_obs: float
    n_obs: int

    def __post_init__(self) -> None:
        if self.n_obs < 1:
            raise ValueError(f"n_obs must be >= 1, got {self.n_obs}")
        if not 0.0 <= self.p_bar_obs <= 1.0:
            raise ValueError(f"p_bar_obs must lie in [0, 1], got {self.p_bar_obs}")

    @property
    def successes(self) -> int:
        return int(round(self.p_bar_obs * self.n_obs))


def standard_error(p_int: float, m_trials: int, p_obs: float, n_obs: int) -> float:
    """Unpooled difference-of-proportions standard error."""
    return math.sqrt(p_int * (1 - p_int) / m_trials + p_obs * (1 - p_obs) / n_obs)


@dataclass(frozen=True)
class IcpEstimate:
    concept: str
    e_hat: float
    sigma_hat: float
    m_trials: int
    p_hat_int: float
    baseline: BaselineStats

    def __post_init__(self) -> None:
        if self.m_trials < 1:
            raise ValueError(f"m_trials must be >= 1, got {self.m_trials}")
        if self.e_hat != self.p_hat_int - self.baseline.p_bar_obs:
            raise ValueError("e_hat must equal p_hat_int - p_bar_obs")

    @classmethod
    def from_counts(cls, concept: str, successes: int, m_trials: int, baseline: BaselineStats) -> "IcpEstimate":
        p_int = successes / m_trials
        sigma = standard_error(p_int, m_trials, baseline.p_bar_obs, baseline.n_obs)
        return cls(concept, p_int - baseline.p_bar_obs, sigma, m_trials, p_int, baseline)

    @property
    def successes(self) -> int:
        return int(round(self.p_hat_int * self.m_trials))


@dataclass(frozen=True)
class GraphConfig:
    """Significance settings.

    ``continuity_correction`` only matters when the plain standard error is
    exactly zero (both rates at 0 or 1, common at M = 10).  With it on, the
    test uses rates smoothed by half a pseudo-success and half a
    pseudo-failure; with it off, any nonzero effect counts as significant.
    """

    alpha: float = 0.05
    continuity_correction: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def z_crit(self) -> float:
        return NormalDist().inv_cdf(1 - self.alpha / 2)


def effective_sigma(estimate: IcpEstimate, config: GraphConfig) -> float:
    """Standard error used for testing; 0.0 means "no scale available"."""
    if estimate.sigma_hat > 0 or not config.continuity_correction:
        return estimate.sigma_hat
    base = estimate.baseline
    p_int = (estimate.successes + 0.5) / (estimate.m_trials + 1)
    p_obs = (base.successes + 0.5) / (base.n_obs + 1)
    return standard_error(p_int, estimate.m_trials, p_obs, base.n_obs)


def _exceeds(effect: float, sigma: float, z: float) -> bool:
    if sigma == 0.0:
        return effect > 0.0
    return effect > z * sigma


@dataclass(frozen=True)
class Edge:
    concept: str
    e_hat: float
    sigma_hat: float
    z: float
    significant: bool

    @property
    def sign(self) -> int:
        return (self.e_hat > 0) - (self.e_hat < 0)


@dataclass(frozen=True)
class CausalGraph:
    """Concept -> correctness edges with two-sided significance flags."""

    edges: tuple[Edge, ...]
    config: GraphConfig = field(default_factory=GraphConfig)

    def edge(self, concept: str) -> Edge:
        for e in self.edges:
            if e.concept == concept:
                return e
        raise KeyError(concept)

    def significant(self) -> list[Edge]:
        return [e for e in self.edges if e.significant]

    def to_dict(self) -> dict:
        return {"alpha": self.config.alpha, "z_crit": self.config.z_crit,
                "edges": [{"concept": e.concept, "e_hat": e.e_hat, "sigma_hat": e.sigma_hat, "z": e.z,
                           "significant": e.significant, "sign": e.sign} for e in self.edges]}


def build_causal_graph(estimates: Sequence[IcpEstimate], config: GraphConfig | None = None) -> CausalGraph:
    if not estimates:
        raise ValueError("build_causal_graph needs at least one estimate")
    config = config or GraphConfig()
    z_crit = config.z_crit
    edges = []
    for est in estimates:
        sigma = effective_sigma(est, config)
        if sigma > 0:
            z = est.e_hat / sigma
        else:
            z = math.copysign(math.inf, est.e_hat) if est.e_hat else 0.0
        edges.append(Edge(est.concept, est.e_hat, est.sigma_hat, z, _exceeds(abs(est.e_hat), sigma, z_crit)))
    return CausalGraph(tuple(edges), config)


def select_activation_set(graph: CausalGraph) -> list[str]:
    """Concepts whose effect is significantly positive, largest effect first."""
    chosen = [e for e in graph.edges if e.significant and e.e_hat > 0]
    chosen.sort(key=lambda e: (-e.e_hat, e.concept))
    return [e.concept for e in chosen]


class IcpState(str, Enum):
    ACTIVATABLE = "ActivatableKnowledge"
    ABSENT = "AbsentOrIrrelevant"
    MISAPPLICATION = "Misapplication"


def classify_icp_state(estimate: IcpEstimate, config: GraphConfig | None = None) -> IcpState:
    config = config or GraphConfig()
    sigma = effective_sigma(estimate, config)
    if _exceeds(estimate.e_hat, sigma, config.z_crit):
        return IcpState.ACTIVATABLE
    if _exceeds(-estimate.e_hat, sigma, config.z_crit):
        return IcpState.MISAPPLICATION
    return IcpState.ABSENT


# -- estimation -------------------------------------------------------------


def run_trials(trial: Callable[[np.random.Generator], TrialOutcome], count: int, stream: Stream,
               executor: Executor | None = None) -> list[TrialOutcome]:
    """Run ``count`` trials, trial ``i`` on generator ``stream.rng(i)``.

    Results come back in index order whether or not an executor is used.
    Any failing trial aborts the whole batch.
    """
    if executor is None:
        return [trial(stream.rng(i)) for i in range(count)]
    return list(executor.map(lambda i: trial(stream.rng(i)), range(count)))


def estimate_baseline(sim: Simulator, problem: SimProblem, n_obs: int, rng: Stream | int,
                      executor: Executor | None = None) -> BaselineStats:
    if n_obs < 1:
        raise ValueError(f"n_obs must be >= 1, got {n_obs}")
    stream = as_stream(rng).child("baseline")
    outcomes = run_trials(lambda g: sim.baseline_trial(problem, g), n_obs, stream, executor)
    return BaselineStats(sum(o.correct for o in outcomes) / n_obs, n_obs)


def estimate_icp(sim: Simulator, problem: SimProblem, concept: str, m_trials: int, baseline: BaselineStats,
                 rng: Stream | int, executor: Executor | None = None) -> IcpEstimate:
    """Probe one concept with ``m_trials`` do-trials against ``baseline``.

    Trial streams hang off ``(rng, "icp", concept)``, so the probe for a
    concept does not depend on which other concepts were probed first.
    """
    if m_trials < 1:
        raise ValueError(f"m_trials must be >= 1, got {m_trials}")
    if not isinstance(baseline, BaselineStats):
        raise TypeError("baseline must be a BaselineStats")
    stream = as_stream(rng).child("icp", concept)
    outcomes = run_trials(lambda g: sim.do_trial(problem, [concept], g), m_trials, stream, executor)
    return IcpEstimate.from_counts(concept, sum(o.correct for o in outcomes), m_trials, baseline)


ICP_CSV_FIELDS = ("problem_id", "concept", "e_hat", "sigma_hat", "m", "p_bar_obs", "significant", "state")


def icp_rows(problem_id: str, estimates: Sequence[IcpEstimate], config: GraphConfig | None = None) -> list[dict]:
    config = config or GraphConfig()
    if not estimates:
        return []
    graph = build_causal_graph(estimates, config)
    return [{"problem_id": problem_id, "concept": est.concept, "e_hat": repr(est.e_hat),
             "sigma_hat": repr(est.sigma_hat), "m": est.m_trials, "p_bar_obs": repr(est.baseline.p_bar_obs),
             "significant": int(edge.significant), "state": classify_icp_state(est, config).value}
            for est, edge in zip(estimates, graph.edges)]


def write_icp_csv(rows: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=ICP_CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# -- confounding ---------------------------------------------------------------


@dataclass(frozen=True)
class ConfoundingReport:
    """Observational contrast vs interventional estimate of one concept's effect.

    ``beta_obs`` and its bias are None when one of the conditioning cells
    (m = 0 or m = 1) received no samples.
    """

    concept: int
    n_obs: int
    m_trials: int
    e_true: float
    beta_obs: float | None
    se_obs: float | None
    e_icp: float
    se_icp: float
    beta_obs_exact: float

    @property
    def bias_obs(self) -> float | None:
        return None if self.beta_obs is None else self.beta_obs - self.e_true

    @property
    def bias_icp(self) -> float:
        return self.e_icp - self.e_true

    @property
    def z_obs(self) -> float | None:
        if self.bias_obs is None or not self.se_obs:
            return None
        return self.bias_obs / self.se_obs

    @property
    def z_icp(self) -> float:
        return self.bias_icp / self.se_icp if self.se_icp else (0.0 if self.bias_icp == 0 else math.inf)


def confounding_bias_experiment(scm: DiscreteStudentScm, concept: int, n_obs: int, m_trials: int,
                                rng: Stream | int) -> ConfoundingReport:
    """Compare the naive observational contrast with do-trials on an exact SCM.

    The observational contrast is ``E[p | m=1] - E[p | m=0]`` over ``n_obs``
    passive samples.  The interventional estimate runs ``m_trials`` samples
    under ``do(m=1)`` and another ``m_trials`` under ``do(m=0)`` so that it
    targets the same quantity as the truth, ``P(p | do(1)) - P(p | do(0))``.
    """
    concept = scm.check_concept(concept)
    if n_obs < 1 or m_trials < 1:
        raise ValueError("n_obs and m_trials must be >= 1")
    stream = as_stream(rng)
    obs = sample_observational(scm, n_obs, stream.child("confounding", "obs"))
    mask = obs.masteries[:, concept] == 1
    n1, n0 = int(mask.sum()), int((~mask).sum())
    beta = se_obs = None
    if n1 and n0:
        p1, p0 = float(obs.outcome[mask].mean()), float(obs.outcome[~mask].mean())
        beta = p1 - p0
        se_obs = math.sqrt(p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0)
    hi = sample_do(scm, {concept: 1}, m_trials, stream.child("confounding", "do1")).outcome.mean()
    lo = sample_do(scm, {concept: 0}, m_trials, stream.child("confounding", "do0")).outcome.mean()
    exact_obs = observational_conditional(scm, concept, 1) - observational_conditional(scm, concept, 0)
    return ConfoundingReport(
        concept=concept, n_obs=n_obs, m_trials=m_trials, e_true=true_effect(scm, concept),
        beta_obs=beta, se_obs=se_obs, e_icp=float(hi - lo),
        se_icp=math.sqrt((hi * (1 - hi) + lo * (1 - lo)) / m_trials), beta_obs_exact=exact_obs,
    )


# -- concentration -------------------------------------------------------------


def hoeffding_tail(m_trials: int, epsilon: float) -> float:
    """Two-sided Hoeffding bound on ``P(|p_hat - p| >= epsilon)`` after M trials."""
    if m_trials < 1:
        raise ValueError(f"m_trials must be >= 1, got {m_trials}")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return 2.0 * math.exp(-2.0 * m_trials * epsilon ** 2)


def required_samples_exact(k_concepts: int, epsilon: float, delta: float) -> float:
    if k_concepts < 1:
        raise ValueError(f"k_concepts must be >= 1, got {k_concepts}")
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    return 2.0 / epsilon ** 2 * math.log(2 * k_concepts / delta)


def required_samples(k_concepts: int, epsilon: float, delta: float) -> int:
    """Trials per concept so all K probes are within epsilon w.p. 1 - delta."""
    return math.ceil(required_samples_exact(k_concepts, epsilon, delta))


__all__ = [
    "BaselineStats", "CausalGraph", "ConfoundingReport", "Edge", "GraphConfig", "ICP_CSV_FIELDS", "IcpEstimate",
    "IcpState", "build_causal_graph", "classify_icp_state", "confounding_bias_experiment", "estimate_baseline",
    "estimate_icp", "hoeffding_tail", "icp_rows", "required_samples",
    "required_samples_exact", "run_trials", "select_activation_set", "standard_error", "effective_sigma",
    "write_icp_csv",
]
