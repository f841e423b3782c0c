from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, logit

from .base import (ConceptDiagnosis, Level, ScmBinding, SimProblem, SimulatorError, TrialOutcome,
                   check_concepts, check_lens)

HIGH_THRESHOLD = 0.7
LOW_THRESHOLD = 0.3


def level_for(marginal: float) -> Level:
    if marginal >= HIGH_THRESHOLD:
        return Level.HIGH
    if marginal >= LOW_THRESHOLD:
        return Level.MEDIUM
    return Level.LOW


def _binding(problem: SimProblem) -> ScmBinding:
    if problem.binding is None:
        raise SimulatorError(f"problem {problem.id!r} has no SCM binding; the synthetic simulator needs one")
    return problem.binding


@dataclass(frozen=True)
class SyntheticSimulator:
    """Answers trials by sampling the problem's bound :class:`DiscreteStudentScm`.

    Each trial consumes exactly ``n + 2`` uniforms from its generator, so a
    do-trial and a baseline trial on the same generator share D and the
    unclamped masteries.  ``gap_noise`` is the standard deviation of the
    Gaussian noise added to each mastery marginal's log-odds before the
    ConceptGap thresholds are applied.
    """

    gap_noise: float = 0.0
    kind: str = "synthetic"

    def _draw(self, problem: SimProblem, rng: np.random.Generator, clamped=None, offset: float = 0.0) -> TrialOutcome:
        scm = _binding(problem).scm
        u = rng.random(scm.n_concepts + 2)
        sample = scm.draw(u[None, :], clamped, offset)
        return TrialOutcome(correct=int(sample.outcome[0]))

    def baseline_trial(self, problem: SimProblem, rng: np.random.Generator) -> TrialOutcome:
        return self._draw(problem, rng)

    def do_trial(self, problem: SimProblem, concepts: Sequence[str], rng: np.random.Generator) -> TrialOutcome:
        binding = _binding(problem)
        clamped = {binding.index(c): 1 for c in check_concepts(concepts)}
        return self._draw(problem, rng, clamped)

    def lens_trial(self, problem: SimProblem, lens: str, rng: np.random.Generator) -> TrialOutcome:
        offset = _binding(problem).lens_log_odds.get(check_lens(lens), 0.0)
        return self._draw(problem, rng, offset=offset)

    def concept_gap(self, problem: SimProblem, failed_answer: str, rng: np.random.Generator) -> list[ConceptDiagnosis]:
        binding = _binding(problem)
        marginals = binding.scm.mastery_marginals()
        out = []
        for name in binding.candidates:
            q = float(marginals[binding.index(name)])
            if self.gap_noise > 0:
                q = float(expit(logit(np.clip(q, 1e-12, 1 - 1e-12)) + rng.normal(0.0, self.gap_noise)))
            out.append(ConceptDiagnosis(name, level_for(q)))
        return out

    def negative_control(self, problem: SimProblem) -> str | None:
        return _binding(problem).control

    # exact rates, for tests and experiment targets

    def baseline_rate(self, problem: SimProblem) -> float:
        return _binding(problem).scm.outcome_marginal()

    def do_rate(self, problem: SimProblem, concepts: Sequence[str]) -> float:
        binding = _binding(problem)
        return binding.scm.outcome_marginal({binding.index(c): 1 for c in check_concepts(concepts)})

    def lens_rate(self, problem: SimProblem, lens: str) -> float:
        binding = _binding(problem)
        return binding.scm.outcome_marginal(logit_offset=binding.lens_log_odds.get(check_lens(lens), 0.0))
