"""Problem and trial types plus the simulator contract."""

from __future__ import annotations

import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from ..scm import DiscreteStudentScm, scm_from_dict, scm_to_dict

LENSES: tuple[str, ...] = (
    "direct solution",
    "proof by contradiction",
    "mathematical induction",
    "contrapositive",
    "constructive proof",
    "pigeonhole principle",
    "extremal principle",
    "invariant",
    "coordinate transformation",
    "complexification",
    "graph transformation",
    "probabilistic method",
)


class SimulatorError(RuntimeError):
    """A trial could not be completed (never counted as an incorrect answer)."""


class Level(str, Enum):
    HIGH = "HIGH"
    MEDIUM = "MEDIUM"
    LOW = "LOW"


@dataclass(frozen=True)
class ConceptDiagnosis:
    concept: str
    level: Level


@dataclass(frozen=True)
class TrialOutcome:
    correct: int
    raw_answer: str = ""
    latency: float = 0.0
    strict_correct: int | None = None

    def __post_init__(self) -> None:
        if self.correct not in (0, 1):
            raise ValueError(f"correct must be 0 or 1, got {self.correct!r}")


@dataclass(frozen=True)
class SimulatorFidelity:
    delta_m: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.delta_m <= 1.0:
            raise ValueError(f"delta_m must be in [0, 1], got {self.delta_m}")


@dataclass(frozen=True)
class ScmBinding:
    """Ties a synthetic problem to its ground-truth SCM.

    ``concepts[j]`` names mastery coordinate j.  ``control`` (if set) names a
    zero-weight concept reserved as the negative control; it is never
    offered as a candidate.  ``lens_log_odds`` shifts the outcome logit
    when a lens prompt is used.
    """

    scm: DiscreteStudentScm
    concepts: tuple[str, ...]
    control: str | None = None
    lens_log_odds: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "concepts", tuple(self.concepts))
        if len(self.concepts) != self.scm.n_concepts:
            raise ValueError(f"{len(self.concepts)} names for {self.scm.n_concepts} concepts")
        if len(set(self.concepts)) != len(self.concepts):
            raise ValueError("concept names must be unique")
        if self.control is not None and self.control not in self.concepts:
            raise ValueError(f"control concept {self.control!r} is not bound")
        unknown = set(self.lens_log_odds) - set(LENSES)
        if unknown:
            raise ValueError(f"unknown lens names: {sorted(unknown)}")

    def index(self, name: str) -> int:
        try:
            return self.concepts.index(name)
        except ValueError:
            raise KeyError(f"unknown concept name {name!r}") from None

    @property
    def candidates(self) -> tuple[str, ...]:
        return tuple(c for c in self.concepts if c != self.control)

    def to_dict(self) -> dict:
        return {"scm": scm_to_dict(self.scm), "concepts": list(self.concepts), "control": self.control,
                "lens_log_odds": dict(self.lens_log_odds)}

    @classmethod
    def from_dict(cls, doc: dict) -> "ScmBinding":
        scm = scm_from_dict(doc["scm"])
        if not isinstance(scm, DiscreteStudentScm):
            raise ValueError("problem bindings must use a discrete_student SCM")
        return cls(scm=scm, concepts=tuple(doc["concepts"]), control=doc.get("control"),
                   lens_log_odds=dict(doc.get("lens_log_odds", {})))


@dataclass(frozen=True)
class SimProblem:
    id: str
    statement: str
    gold_answer: str
    domain: str = "general"
    binding: ScmBinding | None = None

    def to_dict(self) -> dict:
        doc = {"id": self.id, "statement": self.statement, "gold_answer": self.gold_answer, "domain": self.domain}
        if self.binding is not None:
            doc["binding"] = self.binding.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SimProblem":
        binding = ScmBinding.from_dict(doc["binding"]) if doc.get("binding") else None
        return cls(id=str(doc["id"]), statement=doc.get("statement", ""), gold_answer=str(doc.get("gold_answer", "")),
                   domain=doc.get("domain", "general"), binding=binding)


def load_problems(path: str | Path) -> list[SimProblem]:
    problems = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                problem = SimProblem.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed problem: {exc}") from exc
            if problem.id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate problem id {problem.id!r} (first on line {seen[problem.id]})")
            seen[problem.id] = lineno
            problems.append(problem)
    return problems


def save_problems(problems: Iterable[SimProblem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for problem in problems:
            fh.write(json.dumps(problem.to_dict()) + "\n")


class Simulator(Protocol):
    kind: str

    def baseline_trial(self, problem: SimProblem, rng: np.random.Generator) -> TrialOutcome: ...

    def do_trial(self, problem: SimProblem, concepts: Sequence[str], rng: np.random.Generator) -> TrialOutcome: ...

    def lens_trial(self, problem: SimProblem, lens: str, rng: np.random.Generator) -> TrialOutcome: ...

    def concept_gap(self, problem: SimProblem, failed_answer: str,
                    rng: np.random.Generator) -> list[ConceptDiagnosis]: ...

    def negative_control(self, problem: SimProblem) -> str | None: ...


def check_lens(lens: str) -> str:
    if lens not in LENSES:
        raise ValueError(f"unknown lens {lens!r}")
    return lens


def check_concepts(concepts: Sequence[str]) -> tuple[str, ...]:
    if isinstance(concepts, str):
        concepts = (concepts,)
    concepts = tuple(concepts)
    if not concepts:
        raise ValueError("do_trial needs at least one concept")
    return concepts


class CountingSimulator:
    """Wraps a simulator and counts calls by kind (thread-safe)."""

    def __init__(self, inner: Simulator):
        self.inner = inner
        self.kind = inner.kind
        self.counts: Counter[str] = Counter()
        self._lock = threading.Lock()

    def _tick(self, what: str) -> None:
        with self._lock:
            self.counts[what] += 1

    def baseline_trial(self, problem, rng):
        self._tick("baseline")
        return self.inner.baseline_trial(problem, rng)

    def do_trial(self, problem, concepts, rng):
        self._tick("do")
        return self.inner.do_trial(problem, concepts, rng)

    def lens_trial(self, problem, lens, rng):
        self._tick("lens")
        return self.inner.lens_trial(problem, lens, rng)

    def concept_gap(self, problem, failed_answer, rng):
        self._tick("gap")
        return self.inner.concept_gap(problem, failed_answer, rng)

    def negative_control(self, problem):
        return self.inner.negative_control(problem)

    @property
    def trial_calls(self) -> int:
        return self.counts["baseline"] + self.counts["do"] + self.counts["lens"]
