"""End-to-end solve loop and the probe-validation protocol.

``run_pipeline`` takes one problem through five phases: a plain attempt,
candidate assembly plus per-concept probes, the significance graph,
search over activation sets, and finally a sweep of solution lenses.
"""

from __future__ import annotations

import json
import logging
import math
import os
import re
import statistics
import tempfile
from concurrent.futures import Executor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from scipy import stats as sps

from .icp import (BaselineStats, CausalGraph, GraphConfig, IcpEstimate, build_causal_graph, estimate_baseline,
                  estimate_icp, select_activation_set)
from .retrieval import Bm25Index, extract_concepts
from .search import UcbParams, run_mcts
from .simulator.base import LENSES, Level, SimProblem, Simulator, TrialOutcome
from .streams import Stream, as_stream, tag_id

log = logging.getLogger(__name__)

DEFAULT_N_OBS = {"synthetic": 10, "endpoint": 5}


class Phase(str, Enum):
    SRV = "SRV"
    MCTS = "MCTS"
    RECOVERY = "Recovery"
    UNSOLVED = "Unsolved"


@dataclass(frozen=True)
class PipelineConfig:
    m_trials: int = 10
    budget_b: int = 60
    beta: float = 1.0
    gamma: float = 0.5
    alpha: float = 0.05
    n_obs: int | None = None  # None: 10 for synthetic simulators, 5 for endpoints
    bm25_top_k: int = 8
    lens_order: tuple[str, ...] = LENSES
    reward_lambda: float | None = None  # None: binary reward; otherwise shaped with this lambda
    continuity_correction: bool = True
    screen_low: float = 0.10
    screen_high: float = 0.50
    rq1_m_trials: int | None = None  # probe size for the validation protocol (default m_trials)
    rq1_n_obs: int | None = None

    def __post_init__(self) -> None:
        if self.m_trials < 1 or self.budget_b < 1 or self.bm25_top_k < 1:
            raise ValueError("m_trials, budget_b and bm25_top_k must be >= 1")
        if self.n_obs is not None and self.n_obs < 1:
            raise ValueError("n_obs must be >= 1")
        object.__setattr__(self, "lens_order", tuple(self.lens_order))
        if sorted(self.lens_order) != sorted(LENSES):
            raise ValueError("lens_order must be a permutation of the 12 lenses")
        UcbParams(self.beta, self.gamma)
        GraphConfig(self.alpha)
        if self.reward_lambda is not None and self.reward_lambda < 0:
            raise ValueError("reward_lambda must be >= 0")
        if not 0.0 <= self.screen_low <= self.screen_high <= 1.0:
            raise ValueError("screening band must satisfy 0 <= low <= high <= 1")

    @property
    def ucb(self) -> UcbParams:
        return UcbParams(self.beta, self.gamma)

    @property
    def graph(self) -> GraphConfig:
        return GraphConfig(self.alpha, self.continuity_correction)

    def obs_trials(self, sim: Simulator) -> int:
        if self.n_obs is not None:
            return self.n_obs
        return DEFAULT_N_OBS.get(getattr(sim, "kind", "synthetic"), DEFAULT_N_OBS["synthetic"])

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["lens_order"] = list(self.lens_order)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class CallLedger:
    srv: int = 0
    baseline: int = 0
    icp: int = 0
    rollouts: int = 0
    lenses: int = 0
    concept_gap: int = 0  # diagnostic calls, reported but not part of the trial total

    @property
    def total(self) -> int:
        return self.srv + self.baseline + self.icp + self.rollouts + self.lenses


@dataclass
class PipelineResult:
    problem_id: str
    phase_solved: Phase
    correct: int
    answer: str
    candidates: list[str] = field(default_factory=list)
    baseline: BaselineStats | None = None
    icp_table: list[IcpEstimate] = field(default_factory=list)
    graph: CausalGraph | None = None
    activation_set: list[str] = field(default_factory=list)
    mcts_trace: list[dict] = field(default_factory=list)
    mcts_activated: list[str] = field(default_factory=list)
    lens_attempts: list[str] = field(default_factory=list)
    lens_used: str | None = None
    calls: CallLedger = field(default_factory=CallLedger)
    error: str | None = None
    last_phase: str = "SRV"

    @property
    def llm_call_count(self) -> int:
        return self.calls.total

    @property
    def max_icp(self) -> float | None:
        return max((e.e_hat for e in self.icp_table), default=None)

    def expected_call_count(self, config: PipelineConfig, n_obs: int) -> int:
        """``1 + n_obs + M |K0| + rollouts + lenses`` for this run's path."""
        if self.phase_solved is Phase.SRV:
            return 1
        return 1 + n_obs + config.m_trials * len(self.candidates) + len(self.mcts_trace) + len(self.lens_attempts)

    def to_dict(self) -> dict:
        return {
            "problem_id": self.problem_id, "phase_solved": self.phase_solved.value, "correct": self.correct,
            "answer": self.answer, "candidates": self.candidates,
            "baseline": None if self.baseline is None else asdict(self.baseline),
            "icp_table": [{**asdict(e), "baseline": asdict(e.baseline)} for e in self.icp_table],
            "graph": None if self.graph is None else self.graph.to_dict(),
            "activation_set": self.activation_set, "mcts_trace": self.mcts_trace,
            "mcts_activated": self.mcts_activated, "lens_attempts": self.lens_attempts, "lens_used": self.lens_used,
            "calls": {**asdict(self.calls), "total": self.calls.total}, "llm_call_count": self.llm_call_count,
            "max_icp": self.max_icp, "error": self.error, "last_phase": self.last_phase,
        }

    @classmethod
    def from_dict(cls, doc: dict, config: PipelineConfig | None = None) -> "PipelineResult":
        config = config or PipelineConfig()
        icp = []
        for e in doc["icp_table"]:
            base = BaselineStats(**e["baseline"])
            icp.append(IcpEstimate(e["concept"], e["e_hat"], e["sigma_hat"], e["m_trials"], e["p_hat_int"], base))
        calls = {k: v for k, v in doc["calls"].items() if k != "total"}
        return cls(
            problem_id=doc["problem_id"], phase_solved=Phase(doc["phase_solved"]), correct=doc["correct"],
            answer=doc["answer"], candidates=list(doc["candidates"]),
            baseline=None if doc["baseline"] is None else BaselineStats(**doc["baseline"]),
            icp_table=icp, graph=build_causal_graph(icp, config.graph) if icp else None,
            activation_set=list(doc["activation_set"]), mcts_trace=list(doc["mcts_trace"]),
            mcts_activated=list(doc["mcts_activated"]), lens_attempts=list(doc["lens_attempts"]),
            lens_used=doc["lens_used"], calls=CallLedger(**calls), error=doc["error"], last_phase=doc["last_phase"],
        )


# -- phases -----------------------------------------------------------------------


def assemble_candidates(problem: SimProblem, sim: Simulator, failed_answer: str, index: Bm25Index | None,
                        config: PipelineConfig, rng: Stream | int) -> list[str]:
    """MEDIUM/LOW diagnoses first, then tags of the top BM25 hits, deduplicated."""
    stream = as_stream(rng)
    diagnoses = sim.concept_gap(problem, failed_answer, stream.rng("concept_gap"))
    names = [d.concept for d in diagnoses if d.level in (Level.MEDIUM, Level.LOW)]
    if index is not None:
        names += extract_concepts(index.query(problem.statement, config.bm25_top_k))
    return list(dict.fromkeys(names))


@dataclass
class LensResult:
    outcome: TrialOutcome | None
    lens_used: str | None
    attempts: list[str]


def multi_lens_recover(problem: SimProblem, sim: Simulator, config: PipelineConfig, rng: Stream | int) -> LensResult:
    """Try lenses in configured order and stop at the first correct answer."""
    stream = as_stream(rng).child("lens")
    attempts: list[str] = []
    last = None
    for lens in config.lens_order:
        attempts.append(lens)
        last = sim.lens_trial(problem, lens, stream.rng(lens))
        if last.correct:
            return LensResult(last, lens, attempts)
    return LensResult(last, None, attempts)


def run_pipeline(problem: SimProblem, sim: Simulator, index: Bm25Index | None, config: PipelineConfig | None,
                 rng: Stream | int, executor: Executor | None = None) -> PipelineResult:
    """Run all phases on one problem.

    Randomness hangs off ``(rng, "problem", problem.id)``, so a problem's
    result does not depend on which other problems share the run.  A
    simulator failure stops the run and returns what was gathered so far
    with ``error`` set and ``phase_solved`` = Unsolved.
    """
    config = config or PipelineConfig()
    stream = as_stream(rng).child("problem", problem.id)
    result = PipelineResult(problem.id, Phase.UNSOLVED, 0, "")
    try:
        _run_phases(problem, sim, index, config, stream, executor, result)
    except Exception as exc:  # noqa: BLE001 - every failure is reported on the result
        if isinstance(exc, (KeyboardInterrupt, SystemExit)):
            raise
        log.warning("problem %s aborted during %s: %s", problem.id, result.last_phase, exc)
        result.error = f"{type(exc).__name__}: {exc}"
        result.phase_solved = Phase.UNSOLVED
        result.correct = 0
    return result


def _run_phases(problem, sim, index, config, stream, executor, result: PipelineResult) -> None:
    calls = result.calls
    result.last_phase = "SRV"
    srv = sim.baseline_trial(problem, stream.rng("srv"))
    calls.srv += 1
    result.answer = srv.raw_answer
    if srv.correct:
        result.phase_solved, result.correct = Phase.SRV, 1
        return

    result.last_phase = "ICP"
    calls.concept_gap += 1
    result.candidates = assemble_candidates(problem, sim, srv.raw_answer, index, config, stream.child("candidates"))
    n_obs = config.obs_trials(sim)
    result.baseline = estimate_baseline(sim, problem, n_obs, stream, executor)
    calls.baseline += n_obs
    for concept in result.candidates:
        result.icp_table.append(estimate_icp(sim, problem, concept, config.m_trials, result.baseline, stream,
                                             executor))
        calls.icp += config.m_trials

    if result.icp_table:
        result.last_phase = "MCTS"
        result.graph = build_causal_graph(result.icp_table, config.graph)
        result.activation_set = select_activation_set(result.graph)
        search = run_mcts(problem, sim, result.graph, config.budget_b, config.ucb, stream, config.reward_lambda)
        calls.rollouts += search.iterations
        result.mcts_trace = search.trace
        result.mcts_activated = list(search.activated)
        if search.outcome is not None:
            result.answer = search.outcome.raw_answer
        if search.solved:
            result.phase_solved, result.correct = Phase.MCTS, 1
            return

    result.last_phase = "Recovery"
    lenses = multi_lens_recover(problem, sim, config, stream)
    calls.lenses += len(lenses.attempts)
    result.lens_attempts = lenses.attempts
    if lenses.lens_used is not None:
        result.phase_solved, result.correct = Phase.RECOVERY, 1
        result.lens_used = lenses.lens_used
        result.answer = lenses.outcome.raw_answer
    result.last_phase = "done"


# -- suites and checkpoints ---------------------------------------------------------------


def _checkpoint_name(problem_id: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", problem_id)
    return f"{safe}-{tag_id(problem_id):08x}.json"


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def run_suite(problems: Sequence[SimProblem], sim: Simulator, index: Bm25Index | None, config: PipelineConfig,
              seed: int, jobs: int = 1, checkpoint_dir: str | Path | None = None) -> list[PipelineResult]:
    """Run every problem, optionally in parallel and resumable.

    With ``checkpoint_dir`` each finished problem is written to
    ``<dir>/<id>-<hash>.json``; a rerun loads those files instead of
    recomputing, so an interrupted run resumes where it stopped.  Results
    come back in input order.
    """
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    def one(problem: SimProblem) -> PipelineResult:
        path = ckpt / _checkpoint_name(problem.id) if ckpt is not None else None
        if path is not None and path.exists():
            return PipelineResult.from_dict(json.loads(path.read_text(encoding="utf-8")), config)
        result = run_pipeline(problem, sim, index, config, Stream(seed))
        if path is not None and result.error is None:
            _write_atomic(path, json.dumps(result.to_dict(), ensure_ascii=False, sort_keys=True))
        return result

    if jobs <= 1:
        return [one(p) for p in problems]
    with ThreadPoolExecutor(jobs) as pool:
        return list(pool.map(one, problems))


SUMMARY_FIELDS = ("problem_id", "phase_solved", "correct", "n_candidates", "n_activation", "max_icp",
                  "llm_call_count", "concept_gap_calls", "lens_used", "error")


def summary_rows(results: Sequence[PipelineResult]) -> list[dict]:
    return [{"problem_id": r.problem_id, "phase_solved": r.phase_solved.value, "correct": r.correct,
             "n_candidates": len(r.candidates), "n_activation": len(r.activation_set),
             "max_icp": "" if r.max_icp is None else repr(r.max_icp), "llm_call_count": r.llm_call_count,
             "concept_gap_calls": r.calls.concept_gap, "lens_used": r.lens_used or "", "error": r.error or ""}
            for r in results]


def summarize(results: Sequence[PipelineResult]) -> dict[str, Any]:
    counts = {p.value: sum(r.phase_solved is p for r in results) for p in Phase}
    solved = [r.max_icp for r in results if r.correct and r.phase_solved is not Phase.SRV and r.max_icp is not None]
    unsolved = [r.max_icp for r in results if not r.correct and r.max_icp is not None]
    failed_srv = [r for r in results if r.phase_solved is not Phase.SRV]
    return {
        "problems": len(results), **{f"solved_{k}": v for k, v in counts.items()},
        "errors": sum(r.error is not None for r in results),
        "cka_fraction": (sum(r.correct for r in failed_srv) / len(failed_srv)) if failed_srv else None,
        "mean_max_icp_solved": statistics.fmean(solved) if solved else None,
        "mean_max_icp_unsolved": statistics.fmean(unsolved) if unsolved else None,
        "mean_llm_calls": statistics.fmean(r.llm_call_count for r in results) if results else None,
    }


# -- validation protocol -----------------------------------------------------------


class ProtocolError(ValueError):
    pass


@dataclass
class Rq1Row:
    problem_id: str
    baseline: float
    screened_in: bool
    candidates: list[str] = field(default_factory=list)
    top1_concept: str | None = None
    top1_icp: float | None = None
    top1_sigma: float | None = None
    control_concept: str | None = None
    control_icp: float | None = None
    control_sigma: float | None = None
    icp_positive_fraction: float | None = None
    skipped: str | None = None

    @property
    def advantage(self) -> float | None:
        if self.top1_icp is None or self.control_icp is None:
            return None
        return self.top1_icp - self.control_icp


@dataclass
class Rq1Report:
    rows: list[Rq1Row]
    n: int
    top1_mean: float
    top1_se: float
    top1_sigma_mean: float
    control_mean: float
    control_se: float
    control_sigma_mean: float
    advantage_mean: float
    advantage_se: float | None
    paired_t: float | None
    p_value: float | None
    cohens_d: float | None
    top1_positive_rate: float
    advantage_positive_rate: float
    icp_positive_fraction: float

    def table(self) -> list[tuple[str, str]]:
        def fmt(x, digits=3, sign=True):
            if x is None:
                return "undefined"
            return f"{x:+.{digits}f}" if sign else f"{x:.{digits}f}"

        return [
            ("Problems (after screening)", str(self.n)),
            ("Top-1 ICP", f"{fmt(self.top1_mean)} ±{self.top1_se:.3f}"),
            ("Neg. control ICP", f"{fmt(self.control_mean)} ±{self.control_se:.3f}"),
            ("Advantage (top-1 − control)", fmt(self.advantage_mean)),
            ("Paired t", fmt(self.paired_t, 2, sign=False)),
            ("p-value", "undefined" if self.p_value is None else f"{self.p_value:.2e}"),
            ("Cohen's d", fmt(self.cohens_d, 3, sign=False)),
            ("Top-1 ICP > 0", f"{self.top1_positive_rate:.1%}"),
            ("Advantage > 0", f"{self.advantage_positive_rate:.1%}"),
            ("Candidates with ICP > 0", f"{self.icp_positive_fraction:.1%}"),
            ("Mean per-problem σ̂ (top-1 / control)", f"{self.top1_sigma_mean:.3f} / {self.control_sigma_mean:.3f}"),
        ]

    def markdown(self) -> str:
        lines = ["| Metric | Value |", "|---|---|"]
        lines += [f"| {k} | {v} |" for k, v in self.table()]
        return "\n".join(lines) + "\n"


def _mean_se(xs: Sequence[float]) -> tuple[float, float]:
    mean = statistics.fmean(xs)
    se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
    return mean, se


def run_rq1_protocol(problems: Sequence[SimProblem], sim: Simulator, index: Bm25Index | None,
                     config: PipelineConfig | None, rng: Stream | int) -> Rq1Report:
    """Validate that top-ranked probes beat a negative-control concept.

    Problems whose estimated baseline falls outside the screening band are
    dropped.  Every remaining candidate is probed, the largest estimate is
    paired with the control concept's estimate, and paired statistics are
    computed over problems.  Statistics with zero spread are reported as
    undefined (None).
    """
    config = config or PipelineConfig()
    stream = as_stream(rng).child("rq1")
    m = config.rq1_m_trials or config.m_trials
    n_obs = config.rq1_n_obs or config.obs_trials(sim)
    rows: list[Rq1Row] = []
    for problem in problems:
        pstream = stream.child("problem", problem.id)
        base = estimate_baseline(sim, problem, n_obs, pstream)
        row = Rq1Row(problem.id, base.p_bar_obs, config.screen_low <= base.p_bar_obs <= config.screen_high)
        rows.append(row)
        if not row.screened_in:
            continue
        control = sim.negative_control(problem)
        if control is None:
            row.skipped = "no negative-control concept"
            continue
        candidates = [c for c in assemble_candidates(problem, sim, "", index, config, pstream.child("candidates"))
                      if c != control]
        if not candidates:
            row.skipped = "no candidates"
            continue
        row.candidates = candidates
        estimates = [estimate_icp(sim, problem, c, m, base, pstream) for c in candidates]
        top = sorted(estimates, key=lambda e: (-e.e_hat, e.concept))[0]
        ctrl = estimate_icp(sim, problem, control, m, base, pstream)
        row.top1_concept, row.top1_icp, row.top1_sigma = top.concept, top.e_hat, top.sigma_hat
        row.control_concept, row.control_icp, row.control_sigma = control, ctrl.e_hat, ctrl.sigma_hat
        row.icp_positive_fraction = sum(e.e_hat > 0 for e in estimates) / len(estimates)

    used = [r for r in rows if r.screened_in and r.skipped is None]
    if len(used) < 2:
        raise ProtocolError(f"only {len(used)} problem(s) survived screening; the protocol needs at least 2")
    top = [r.top1_icp for r in used]
    ctrl = [r.control_icp for r in used]
    adv = [r.advantage for r in used]
    top_mean, top_se = _mean_se(top)
    ctrl_mean, ctrl_se = _mean_se(ctrl)
    adv_mean = statistics.fmean(adv)
    sd = statistics.stdev(adv)
    n = len(used)
    if sd > 0:
        t = adv_mean / (sd / math.sqrt(n))
        p = float(2 * sps.t.sf(abs(t), df=n - 1))
        d = adv_mean / sd
        adv_se = sd / math.sqrt(n)
    else:
        t = p = d = adv_se = None
    n_cands = sum(len(r.candidates) for r in used)
    positive = sum(r.icp_positive_fraction * len(r.candidates) for r in used)
    return Rq1Report(
        rows=rows, n=n, top1_mean=top_mean, top1_se=top_se,
        top1_sigma_mean=statistics.fmean(r.top1_sigma for r in used), control_mean=ctrl_mean, control_se=ctrl_se,
        control_sigma_mean=statistics.fmean(r.control_sigma for r in used), advantage_mean=adv_mean,
        advantage_se=adv_se, paired_t=t, p_value=p, cohens_d=d,
        top1_positive_rate=sum(x > 0 for x in top) / n, advantage_positive_rate=sum(x > 0 for x in adv) / n,
        icp_positive_fraction=positive / n_cands,
    )


RQ1_FIELDS = ("problem_id", "baseline", "screened_in", "top1_concept", "top1_icp", "top1_sigma", "control_concept",
              "control_icp", "control_sigma", "advantage", "icp_positive_fraction", "skipped")


def rq1_rows(report: Rq1Report) -> list[dict]:
    def num(x):
        return "" if x is None else repr(x)

    return [{"problem_id": r.problem_id, "baseline": repr(r.baseline), "screened_in": int(r.screened_in),
             "top1_concept": r.top1_concept or "", "top1_icp": num(r.top1_icp), "top1_sigma": num(r.top1_sigma),
             "control_concept": r.control_concept or "", "control_icp": num(r.control_icp),
             "control_sigma": num(r.control_sigma), "advantage": num(r.advantage),
             "icp_positive_fraction": num(r.icp_positive_fraction), "skipped": r.skipped or ""}
            for r in report.rows]


__all__ = [
    "CallLedger", "LensResult", "Phase", "PipelineConfig", "PipelineResult", "ProtocolError", "RQ1_FIELDS",
    "Rq1Report", "Rq1Row", "SUMMARY_FIELDS", "assemble_candidates", "multi_lens_recover", "rq1_rows",
    "run_pipeline", "run_rq1_protocol", "run_suite", "summarize", "summary_rows",
]
