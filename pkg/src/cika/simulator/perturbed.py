"""Simulators with a controlled total-variation error on interventions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..streams import Stream, as_stream
from .base import SimProblem, Simulator, SimulatorFidelity, TrialOutcome


class PerturbedSimulator:
    """With probability ``delta`` a do-trial is answered from the baseline.

    The do-distribution becomes ``(1 - delta) P_do + delta P_obs``, so its
    total-variation distance from the inner simulator's is
    ``delta * |P_do - P_obs| <= delta``.  The corruption coin comes from a
    child spawned off the trial generator, which leaves the generator's own
    state untouched: at delta = 0 the trial stream is bit-identical to the
    inner simulator's.
    """

    def __init__(self, inner: Simulator, fidelity: SimulatorFidelity):
        self.inner = inner
        self.fidelity = fidelity
        self.kind = f"perturbed({inner.kind})"

    @property
    def delta(self) -> float:
        return self.fidelity.delta_m

    def do_trial(self, problem: SimProblem, concepts: Sequence[str], rng: np.random.Generator) -> TrialOutcome:
        coin = rng.spawn(1)[0].random()
        if coin < self.delta:
            return self.inner.baseline_trial(problem, rng)
        return self.inner.do_trial(problem, concepts, rng)

    def baseline_trial(self, problem, rng):
        return self.inner.baseline_trial(problem, rng)

    def lens_trial(self, problem, lens, rng):
        return self.inner.lens_trial(problem, lens, rng)

    def concept_gap(self, problem, failed_answer, rng):
        return self.inner.concept_gap(problem, failed_answer, rng)

    def negative_control(self, problem):
        return self.inner.negative_control(problem)

    def do_rate(self, problem: SimProblem, concepts: Sequence[str]) -> float:
        return (1 - self.delta) * self.inner.do_rate(problem, concepts) + self.delta * self.inner.baseline_rate(problem)

    def baseline_rate(self, problem: SimProblem) -> float:
        return self.inner.baseline_rate(problem)


def perturb(inner: Simulator, delta: SimulatorFidelity | float) -> PerturbedSimulator:
    fidelity = delta if isinstance(delta, SimulatorFidelity) else SimulatorFidelity(float(delta))
    return PerturbedSimulator(inner, fidelity)


@dataclass(frozen=True)
class TvGap:
    estimate: float
    se: float
    rate_a: float
    rate_b: float
    trials: int


def measure_tv_gap(sim_a: Simulator, sim_b: Simulator, problem: SimProblem, concept: str, trials: int,
                   rng: Stream | int, paired: bool = True) -> TvGap:
    """Estimate TV between two simulators' do(concept=1) answer distributions.

    For a binary verdict TV is the absolute rate difference.  ``paired``
    feeds both simulators the same trial generators (common random
    numbers); otherwise they draw from separate branches.  The standard
    error is the unpaired normal approximation, conservative when paired.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stream = as_stream(rng).child("tv-gap")
    branch_b = stream if paired else stream.child("b")
    a = sum(sim_a.do_trial(problem, [concept], stream.rng(i)).correct for i in range(trials))
    b = sum(sim_b.do_trial(problem, [concept], branch_b.rng(i)).correct for i in range(trials))
    pa, pb = a / trials, b / trials
    se = math.sqrt(pa * (1 - pa) / trials + pb * (1 - pb) / trials)
    return TvGap(abs(pa - pb), se, pa, pb, trials)
