"""Synthetic problem suites with known causal structure."""

from __future__ import annotations

import numpy as np

from .fixtures import tuned_scm
from .scm import DiscreteStudentScm, true_effect
from .simulator.base import ScmBinding, SimProblem

CONCEPT_POOL = (
    "Vieta's Formulas", "AM-GM Inequality", "Modular Arithmetic", "Pigeonhole Principle", "Angle Bisector Theorem",
    "Chinese Remainder Theorem", "Cauchy-Schwarz Inequality", "Inclusion-Exclusion", "Stars and Bars",
    "Power of a Point", "Fermat's Little Theorem", "Law of Cosines", "Telescoping Sums", "Generating Functions",
    "Euler's Totient Function", "Complex Roots of Unity", "Binomial Theorem", "Triangle Inequality",
    "Legendre's Formula", "Shoelace Formula", "Recurrence Relations", "Polynomial Remainder Theorem",
    "Lifting the Exponent", "Ptolemy's Theorem",
)

DOMAINS = ("algebra", "number theory", "combinatorics", "geometry", "precalculus")

LATENT_SUPPORT = (0.0, 0.5, 1.0)
LATENT_PMF = (1 / 3, 1 / 3, 1 / 3)


def _statement(pid: str, concepts: list[str]) -> str:
    return f"[{pid}] A competition problem whose solution may rely on " + ", ".join(concepts) + "."


def latent_knowledge_problem(pid: str, key_weight: float, names: list[str], domain: str = "algebra",
                             w0: float = -3.0) -> SimProblem:
    """One rarely-mastered key concept plus irrelevant ones.

    ``names[0]`` is the key concept (mastery marginal about 0.04, weight
    ``key_weight``; zero means the problem carries no usable knowledge),
    ``names[1]`` is well mastered and irrelevant, the rest are half-mastered
    and irrelevant.  Concepts are listed to the simulator in the order of
    ``names``.
    """
    links = [(-3.0, 1.0), (3.0, 1.0)] + [(0.0, 1.0)] * (len(names) - 2)
    weights = [key_weight] + [0.0] * (len(names) - 1)
    scm = DiscreteStudentScm(LATENT_SUPPORT, LATENT_PMF, tuple(links), (w0, *weights), 1.0)
    return SimProblem(pid, _statement(pid, names), "42", domain, ScmBinding(scm, tuple(names)))


def latent_knowledge_suite(n: int = 100, seed: int = 0, knowledge_fraction: float = 0.7) -> list[SimProblem]:
    """Mix of problems with a latent key concept and problems with none.

    Key-concept weights are uniform on [2.5, 7.5], giving true effects from
    about 0.25 to 0.95 at an unintervened success rate of 0.03 to 0.06.
    """
    rng = np.random.default_rng([seed, 0xC1CA])
    problems = []
    for i in range(n):
        names = [str(x) for x in rng.choice(CONCEPT_POOL, size=4, replace=False)]
        weight = float(rng.uniform(2.5, 7.5)) if rng.random() < knowledge_fraction else 0.0
        domain = str(rng.choice(DOMAINS))
        problems.append(latent_knowledge_problem(f"lk-{i:03d}", weight, names, domain))
    return problems


def key_effect(problem: SimProblem) -> float:
    """Largest enumerated effect over the problem's concepts."""
    scm = problem.binding.scm
    return max(true_effect(scm, j) for j in range(scm.n_concepts))


def no_knowledge_problem(pid: str = "nk-0") -> SimProblem:
    """Nothing helps: the outcome is (numerically) never correct."""
    names = ["Vieta's Formulas", "Stars and Bars", "Law of Cosines"]
    scm = DiscreteStudentScm(LATENT_SUPPORT, LATENT_PMF, ((-1.0, 1.0), (0.0, 1.0), (-2.0, 0.0)),
                             (-60.0, 0.0, 0.0, 0.0), 0.0)
    return SimProblem(pid, _statement(pid, names), "42", "algebra", ScmBinding(scm, tuple(names)))


def always_correct_problem(pid: str = "ac-0") -> SimProblem:
    names = ["Vieta's Formulas", "Stars and Bars"]
    scm = DiscreteStudentScm((0.0,), (1.0,), ((0.0, 0.0), (0.0, 0.0)), (60.0, 0.0, 0.0), 0.0)
    return SimProblem(pid, _statement(pid, names), "42", "algebra", ScmBinding(scm, tuple(names)))


def lens_problem(pid: str = "lens-0", lens: str = "extremal principle") -> SimProblem:
    """Unsolvable except through one lens, which makes success certain."""
    base = no_knowledge_problem(pid)
    binding = ScmBinding(base.binding.scm, base.binding.concepts, None, {lens: 120.0})
    return SimProblem(pid, base.statement, "42", base.domain, binding)


def rq1_suite(n: int = 67, seed: int = 0, effect_range: tuple[float, float] = (0.15, 0.29),
              baseline_range: tuple[float, float] = (0.2, 0.4)) -> list[SimProblem]:
    """Problems with one helpful concept, two inert candidates and an inert control.

    The helpful concept's probe value (do-rate minus baseline) is drawn
    uniformly from ``effect_range``; the control concept has zero weight.
    """
    rng = np.random.default_rng([seed, 0x5A1])
    problems = []
    for i in range(n):
        names = [str(x) for x in rng.choice(CONCEPT_POOL, size=4, replace=False)]
        scm = tuned_scm(float(rng.uniform(*baseline_range)), float(rng.uniform(*effect_range)), n_null=3)
        pid = f"rq1-{i:03d}"
        binding = ScmBinding(scm, tuple(names), control=names[3])
        problems.append(SimProblem(pid, _statement(pid, names[:3]), "42", str(rng.choice(DOMAINS)), binding))
    return problems


__all__ = [
    "CONCEPT_POOL", "DOMAINS", "always_correct_problem", "key_effect", "latent_knowledge_problem",
    "latent_knowledge_suite", "lens_problem", "no_knowledge_problem", "rq1_suite",
]
