"""Seeded Monte Carlo studies behind the CLI, each returning rows plus checks.

Every study is a pure function of its arguments: the same seed gives
byte-identical CSV output whatever the worker count.  Each returns an
:class:`Experiment` holding the table, an optional set of extra tables,
a JSON-able summary and a list of named pass/fail checks.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.stats import binomtest

from . import fixtures
from .icp import (confounding_bias_experiment, estimate_baseline, estimate_icp, required_samples,
                  required_samples_exact)
from .pipeline import (Phase, PipelineConfig, PipelineResult, SUMMARY_FIELDS, RQ1_FIELDS, Rq1Report, rq1_rows,
                       run_rq1_protocol, run_suite, summarize, summary_rows)
from .retrieval import Bm25Index
from .scm import (DiscreteStudentScm, backdoor_adjusted, icp_target, interventional_distribution,
                  nonidentifiability_witness, reduced_form_covariance)
from .search import BanditInstance, Policy, UcbParams, run_bandit, ten_arm_instance, two_arm_instance
from .simulator import SyntheticSimulator, perturb
from .simulator.base import ConceptDiagnosis, ScmBinding, SimProblem, Simulator, TrialOutcome
from .streams import Stream
from .suites import key_effect
from .svar import identify_chain


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", bool(self.passed))

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass
class Table:
    fields: tuple[str, ...]
    rows: list[dict]


@dataclass
class Experiment:
    name: str
    table: Table
    summary: dict[str, Any] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    extra: dict[str, Table] = field(default_factory=dict)
    text: dict[str, str] = field(default_factory=dict)  # extra text artifacts, file name -> content

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failing(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def write(self, out_dir: str | Path) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [write_csv(out / f"{self.name}.csv", self.table)]
        for key, table in self.extra.items():
            paths.append(write_csv(out / f"{self.name}-{key}.csv", table))
        for fname, content in self.text.items():
            (out / fname).write_text(content, encoding="utf-8")
            paths.append(out / fname)
        summary = {"experiment": self.name, "summary": self.summary,
                   "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks]}
        path = out / f"{self.name}-summary.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")
        paths.append(path)
        return paths


def _json_default(x):
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_csv(path: str | Path, table: Table) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.fields)
        for row in table.rows:
            writer.writerow([_cell(row.get(f)) for f in table.fields])
    return Path(path)


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """``map`` over processes when ``jobs > 1``; results keep input order."""
    if jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(min(jobs, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float] | None:
    """Least-squares (slope, intercept) of log y on log x; None if any y <= 0."""
    if len(xs) < 2 or any(y <= 0 for y in ys):
        return None
    slope, intercept = np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)
    return float(slope), float(intercept)


def scm_problem(scm: DiscreteStudentScm, pid: str = "fixture") -> SimProblem:
    names = tuple(f"c{j}" for j in range(scm.n_concepts))
    return SimProblem(pid, f"Synthetic problem {pid}.", "42", "algebra", ScmBinding(scm, names))


# -- backdoor identity and confounding ----------------------------------------------------


def backdoor_identity(scms: dict[str, DiscreteStudentScm] | None = None) -> Experiment:
    scms = scms if scms is not None else fixtures.backdoor_fixtures()
    rows = []
    for name, scm in scms.items():
        for j in range(scm.n_concepts):
            for value in (0, 1):
                do = interventional_distribution(scm, j, value)
                adj = backdoor_adjusted(scm, j, value)
                rows.append({"fixture": name, "concept": j, "value": value, "interventional": do,
                             "backdoor": adj, "residual": abs(do - adj)})
    worst = max(r["residual"] for r in rows)
    check = Check("backdoor-identity", len(scms) >= 5 and worst < 1e-12,
                  f"{len(scms)} fixtures, {len(rows)} cells, max residual {worst:.2e} (< 1e-12)")
    table = Table(("fixture", "concept", "value", "interventional", "backdoor", "residual"), rows)
    return Experiment("backdoor-identity", table, {"fixtures": len(scms), "max_residual": worst}, [check])


def confounding_demo(seed: int = 0, n_samples: int = 100_000, w_ds: Sequence[float] = (0.0, 0.5, 1.0, 2.0, 4.0),
                     scm: DiscreteStudentScm | None = None, concept: int = 0) -> Experiment:
    """Observational contrast vs do-trials across a difficulty-weight sweep.

    The sweep rescales ``w_D`` of ``scm`` (default: the three-level sweep
    fixture).  A separate null-confounding row, where difficulty drives
    neither mastery nor the outcome, is the control.
    """
    base = scm if scm is not None else fixtures.confounded(0.0)
    cases = [("null-control", fixtures.null_confounding(3))]
    cases += [(f"w_D={w:g}", replace(base, outcome_difficulty_weight=float(w))) for w in w_ds]
    root = Stream(seed).child("confounding-demo")
    rows = []
    for label, model in cases:
        rep = confounding_bias_experiment(model, concept, n_samples, n_samples, root.child(label))
        residual = max(abs(interventional_distribution(model, j, v) - backdoor_adjusted(model, j, v))
                       for j in range(model.n_concepts) for v in (0, 1))
        rows.append({"case": label, "w_D": model.outcome_difficulty_weight, "n": n_samples, "e_true": rep.e_true,
                     "beta_obs_exact": rep.beta_obs_exact, "beta_obs": rep.beta_obs, "se_obs": rep.se_obs,
                     "bias_obs": rep.bias_obs, "z_obs": rep.z_obs, "e_icp": rep.e_icp, "se_icp": rep.se_icp,
                     "bias_icp": rep.bias_icp, "z_icp": rep.z_icp, "backdoor_residual": residual})
    null, strong = rows[0], rows[-1]
    checks = [
        Check("null-control", null["z_obs"] is not None and abs(null["z_obs"]) < 3 and abs(null["z_icp"]) < 3,
              f"|bias_obs|/SE = {_fmt_abs(null['z_obs'])}, |bias_icp|/SE = {abs(null['z_icp']):.2f} (both < 3)"),
        Check("strong-confounding", strong["z_obs"] is not None and strong["z_obs"] > 5 and abs(strong["z_icp"]) < 3,
              f"{strong['case']}: bias_obs/SE = {_fmt(strong['z_obs'])} (> 5), "
              f"|bias_icp|/SE = {abs(strong['z_icp']):.2f} (< 3)"),
        Check("backdoor-residuals", max(r["backdoor_residual"] for r in rows) < 1e-12,
              f"max residual {max(r['backdoor_residual'] for r in rows):.2e} (< 1e-12)"),
    ]
    fields = ("case", "w_D", "n", "e_true", "beta_obs_exact", "beta_obs", "se_obs", "bias_obs", "z_obs", "e_icp",
              "se_icp", "bias_icp", "z_icp", "backdoor_residual")
    return Experiment("confounding", Table(fields, rows), {"cases": len(rows), "n": n_samples}, checks)


def _fmt(x: float | None) -> str:
    return "undefined" if x is None else f"{x:.2f}"


def _fmt_abs(x: float | None) -> str:
    return "undefined" if x is None else f"{abs(x):.2f}"


# -- ICP convergence and the simulator-error decomposition ------------------------------


def _icp_draw(args: tuple) -> float:
    sim, problem, concept, m, n_obs, stream = args
    baseline = estimate_baseline(sim, problem, n_obs, stream)
    return estimate_icp(sim, problem, concept, m, baseline, stream).e_hat


def icp_convergence(seed: int = 0, ms: Sequence[int] = (10, 40, 160, 640), replications: int = 200,
                    scm: DiscreteStudentScm | None = None, concept: int = 0, sim: Simulator | None = None,
                    jobs: int = 1) -> Experiment:
    """RMSE of the probe against its population value, with ``n_obs = M``."""
    scm = scm if scm is not None else fixtures.effect_fixture(0.4)
    sim = sim if sim is not None else SyntheticSimulator()
    problem = scm_problem(scm, "convergence")
    name = problem.binding.concepts[concept]
    target = icp_target(scm, concept)
    root = Stream(seed).child("icp-replication")
    rows = []
    for m in ms:
        tasks = [(sim, problem, name, m, m, root.child("rep", r)) for r in range(replications)]
        draws = np.array(_map(_icp_draw, tasks, jobs))
        rows.append({"m": m, "n_obs": m, "replications": replications, "target": target,
                     "mean_e_hat": float(draws.mean()), "bias": float(draws.mean() - target),
                     "rmse": float(np.sqrt(np.mean((draws - target) ** 2)))})
    rmse = [r["rmse"] for r in rows]
    fit = loglog_slope(list(ms), rmse)
    summary = {"target": target, "slope": None if fit is None else fit[0],
               "intercept": None if fit is None else fit[1]}
    if all(x == 0 for x in rmse):
        check = Check("rmse-slope", True, "estimator is exact at every M (zero variance); slope undefined")
    elif fit is None:
        check = Check("rmse-slope", False, "some but not all RMSE values are zero; slope undefined")
    else:
        check = Check("rmse-slope", -0.6 <= fit[0] <= -0.4,
                      f"log-log slope {fit[0]:.3f} over M={list(ms)} with {replications} replications "
                      f"(in [-0.6, -0.4])")
    fields = ("m", "n_obs", "replications", "target", "mean_e_hat", "bias", "rmse")
    return Experiment("icp-convergence", Table(fields, rows), summary, [check])


def delta_decomposition(seed: int = 0, deltas: Sequence[float] = (0.0, 0.1, 0.2, 0.4),
                        ms: Sequence[int] = (100, 1000, 10_000), replications: int = 5,
                        scm: DiscreteStudentScm | None = None, concept: int = 0, jobs: int = 1) -> Experiment:
    """Bias of the probe under TV-perturbed simulators over a (delta, M) grid.

    Replication r uses the same trial streams at every delta (common
    random numbers), so differences across delta are the perturbation's,
    and the delta = 0 rows reproduce :func:`icp_convergence` exactly.
    The plateau is the mean error at the largest M; its bound is
    ``delta * |target|``, the distance the perturbation can move the
    interventional rate towards the baseline.
    """
    scm = scm if scm is not None else fixtures.effect_fixture(0.4)
    problem = scm_problem(scm, "delta")
    name = problem.binding.concepts[concept]
    target = icp_target(scm, concept)
    root = Stream(seed).child("icp-replication")
    rows = []
    for delta in deltas:
        sim = perturb(SyntheticSimulator(), delta)
        for m in ms:
            tasks = [(sim, problem, name, m, m, root.child("rep", r)) for r in range(replications)]
            errors = np.array(_map(_icp_draw, tasks, jobs)) - target
            se = float(errors.std(ddof=1) / math.sqrt(replications)) if replications > 1 else math.nan
            rows.append({"delta": delta, "m": m, "replications": replications, "target": target,
                         "mean_error": float(errors.mean()), "abs_bias": abs(float(errors.mean())), "se": se,
                         "rmse": float(np.sqrt(np.mean(errors ** 2))),
                         "bound": delta * abs(target)})
    top = max(ms)
    plateau = [r for r in rows if r["m"] == top]
    levels = [r["abs_bias"] for r in plateau]
    checks = [Check("plateau-monotone", all(b >= a for a, b in zip(levels, levels[1:])),
                    "plateau |bias| at M=%d: %s (nondecreasing in delta)"
                    % (top, ", ".join(f"{r['delta']:g}->{r['abs_bias']:.4f}" for r in plateau)))]
    zero = [r for r in plateau if r["delta"] == 0]
    if zero:
        z = zero[0]
        checks.append(Check("zero-delta-unbiased", z["abs_bias"] < 3 * z["se"],
                            f"|bias| {z['abs_bias']:.4f} vs 3*SE {3 * z['se']:.4f}"))
    checks.append(Check("plateau-within-bound", all(r["abs_bias"] <= r["bound"] + 3 * r["se"] for r in plateau),
                        "plateau |bias| <= delta*|target| + 3*SE at every delta"))
    fields = ("delta", "m", "replications", "target", "mean_error", "abs_bias", "se", "rmse", "bound")
    return Experiment("delta-decomposition", Table(fields, rows), {"target": target, "plateau_m": top}, checks)


# -- bandit regret --------------------------------------------------------------------


class ArmSimulator:
    """A bandit seen as a problem: do(arm) succeeds with the arm's mean.

    The unintervened baseline is the worst arm's mean, so the probe's
    population value for an arm equals its oracle effect.
    """

    kind = "bandit"

    def __init__(self, instance: BanditInstance):
        self.means = {a.name: a.mean for a in instance.arms}
        self.low = min(self.means.values())

    def baseline_trial(self, problem, rng):
        return TrialOutcome(int(rng.random() < self.low))

    def do_trial(self, problem, concepts, rng):
        return TrialOutcome(int(rng.random() < self.means[concepts[0]]))

    def lens_trial(self, problem, lens, rng):
        return self.baseline_trial(problem, rng)

    def concept_gap(self, problem, failed_answer, rng) -> list[ConceptDiagnosis]:
        return []

    def negative_control(self, problem):
        return None

    def do_rate(self, problem, concepts):
        return self.means[concepts[0]]

    def baseline_rate(self, problem):
        return self.low


def estimated_instance(instance: BanditInstance, delta: float, m_trials: int, stream: Stream) -> BanditInstance:
    """Replace each arm's effect by a probe run through a ``perturb(delta)`` simulator."""
    sim = perturb(ArmSimulator(instance), delta)
    names = tuple(a.name for a in instance.arms)
    problem = SimProblem("bandit", "bandit", "1", "algebra",
                         ScmBinding(DiscreteStudentScm((0.0,), (1.0,), ((0.0, 0.0),) * len(names),
                                                       (0.0,) * (len(names) + 1), 0.0), names))
    baseline = estimate_baseline(sim, problem, m_trials, stream)
    return instance.with_e_hats([estimate_icp(sim, problem, n, m_trials, baseline, stream).e_hat for n in names])


def _regret_pair(args: tuple) -> tuple[float, float, bool]:
    instance, horizon, seed, params = args
    stream = Stream(seed).child("regret")
    ucb = run_bandit(instance, Policy.ucb1(params.beta), horizon, stream)
    causal = run_bandit(instance, Policy.causal(params), horizon, stream)
    flat = run_bandit(instance, Policy.causal(UcbParams(params.beta, 0.0)), horizon, stream)
    return ucb.total, causal.total, bool(np.array_equal(flat.arms, ucb.arms))


def _regret_curve(instance: BanditInstance, policy: Policy, horizon: int, seeds: Sequence[int],
                  points: Sequence[int]) -> list[float]:
    total = np.zeros(len(points))
    idx = np.asarray(points) - 1
    for s in seeds:
        total += run_bandit(instance, policy, horizon, Stream(s).child("regret")).cumulative[idx]
    return list(total / len(seeds))


def regret(seed: int = 0, n_seeds: int = 50, horizon: int = 10_000, params: UcbParams | None = None,
           deltas: Sequence[float] = (0.0, 0.2, 0.4), probe_trials: int = 200, curve_points: int = 50,
           jobs: int = 1) -> Experiment:
    """Causal UCB with oracle effects vs UCB1 on the two designated instances.

    Per seed both policies face the same reward tape.  A one-sided sign
    test over seeds asks whether the causal policy has lower regret more
    often than not.  The delta table repeats the comparison with effects
    estimated through perturbed simulators.
    """
    params = params or UcbParams()
    seeds = [seed * 100_003 + s for s in range(n_seeds)]
    instances = {"two-arm": two_arm_instance(), "ten-arm": ten_arm_instance()}
    rows, checks, summary = [], [], {}
    points = sorted({int(round(x)) for x in np.geomspace(1, horizon, curve_points)})
    curves = []
    for label, instance in instances.items():
        results = _map(_regret_pair, [(instance, horizon, s, params) for s in seeds], jobs)
        wins = sum(c < u for u, c, _ in results)
        losses = sum(c > u for u, c, _ in results)
        p = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
        for s, (u, c, same) in zip(seeds, results):
            rows.append({"instance": label, "seed": s, "ucb1_regret": u, "causal_regret": c,
                         "causal_wins": c < u, "gamma0_equal": same})
        summary[label] = {"wins": wins, "losses": losses, "ties": n_seeds - wins - losses, "p_value": p,
                          "mean_ucb1": statistics.fmean(u for u, _, _ in results),
                          "mean_causal": statistics.fmean(c for _, c, _ in results)}
        checks.append(Check(f"sign-test-{label}", p < 0.01,
                            f"causal wins {wins}/{wins + losses} non-tied seeds, one-sided p = {p:.2e} (< 0.01)"))
        checks.append(Check(f"gamma0-equals-ucb1-{label}", all(same for _, _, same in results),
                            "gamma=0 pull sequence identical to UCB1 on every seed"))
        for policy in (Policy.ucb1(params.beta), Policy.causal(params)):
            for t, value in zip(points, _regret_curve(instance, policy, horizon, seeds[:10], points)):
                curves.append({"instance": label, "policy": policy.name, "step": t, "mean_cumulative_regret": value})
    delta_rows = []
    instance = instances["two-arm"]
    for delta in deltas:
        totals = []
        for s in seeds:
            stream = Stream(s).child("regret-delta")
            est = estimated_instance(instance, delta, probe_trials, stream)
            totals.append(run_bandit(est, Policy.causal(params), horizon, Stream(s).child("regret")).total)
        delta_rows.append({"instance": "two-arm", "delta": delta, "probe_trials": probe_trials, "seeds": n_seeds,
                           "mean_regret": statistics.fmean(totals)})
    means = [r["mean_regret"] for r in delta_rows]
    checks.append(Check("delta-regret-monotone", all(b >= a for a, b in zip(means, means[1:])),
                        "mean regret by delta: " + ", ".join(f"{r['delta']:g}->{r['mean_regret']:.2f}"
                                                            for r in delta_rows)))
    fields = ("instance", "seed", "ucb1_regret", "causal_regret", "causal_wins", "gamma0_equal")
    extra = {"curves": Table(("instance", "policy", "step", "mean_cumulative_regret"), curves),
             "delta": Table(("instance", "delta", "probe_trials", "seeds", "mean_regret"), delta_rows)}
    summary.update({"horizon": horizon, "seeds": n_seeds, "beta": params.beta, "gamma": params.gamma})
    return Experiment("regret", Table(fields, rows), summary, checks, extra)


# -- SVAR identification ------------------------------------------------------------------


def _chain_case(args: tuple) -> dict:
    n, seed, m_trials, coef = args
    order = [int(x) for x in np.random.default_rng([seed, n, 0xC4A1]).permutation(n)]
    result = identify_chain(fixtures.chain_svar(n, coef=coef, order=order), n, m_trials, Stream(seed).child("chain", n))
    truth = [f"c{i}" for i in order]
    recovered = result.ok and result.order == truth and result.interventions_used == n - 1
    return {"n": n, "seed": seed, "truth": " ".join(truth), "recovered_order": " ".join(result.order or []),
            "interventions": result.interventions_used, "ambiguous": bool(result.ambiguous), "recovered": recovered}


def chain_identification(seed: int = 0, ns: Sequence[int] = (4, 5, 6, 7, 8), n_seeds: int = 100,
                         m_trials: int = 2000, coef: float = 0.8, jobs: int = 1) -> Experiment:
    """Recover scrambled concept chains with n - 1 single-node interventions."""
    tasks = [(n, seed * 100_003 + s, m_trials, coef) for n in ns for s in range(n_seeds)]
    rows = _map(_chain_case, tasks, jobs)
    checks, summary = [], {}
    for n in ns:
        hits = sum(r["recovered"] for r in rows if r["n"] == n)
        summary[f"n={n}"] = hits / n_seeds
        checks.append(Check(f"chain-n{n}", hits >= 0.95 * n_seeds,
                            f"{hits}/{n_seeds} chains recovered with exactly {n - 1} interventions (>= 95%)"))
    fields = ("n", "seed", "truth", "recovered_order", "interventions", "ambiguous", "recovered")
    return Experiment("chain-ident", Table(fields, rows), summary, checks)


def nonident_witness(seed: int = 0, instances: int = 100) -> Experiment:
    """Observationally equivalent SVARs: a different B0 with the same reduced form."""
    rows = []
    for i in range(instances):
        s = seed * 100_003 + i
        b0, cov = fixtures.random_svar_pair(s)
        b0_w, cov_w = nonidentifiability_witness(b0, cov, Stream(s).child("witness"))
        residual = float(np.linalg.norm(reduced_form_covariance(b0_w, cov_w) - reduced_form_covariance(b0, cov)))
        rows.append({"instance": s, "dim": b0.shape[0], "max_abs_diff": float(np.max(np.abs(b0_w - b0))),
                     "sigma_u_residual": residual})
    gap = min(r["max_abs_diff"] for r in rows)
    worst = max(r["sigma_u_residual"] for r in rows)
    checks = [Check("witness-differs", gap >= 1e-3, f"min max-norm difference {gap:.3g} (>= 1e-3)"),
              Check("sigma-u-preserved", worst < 1e-10, f"max Frobenius residual {worst:.2e} (< 1e-10)")]
    fields = ("instance", "dim", "max_abs_diff", "sigma_u_residual")
    return Experiment("nonident-witness", Table(fields, rows), {"instances": instances}, checks)


def sample_complexity(k_concepts: int = 50, epsilon: float = 0.1, delta: float = 0.05,
                      grid: Iterable[int] = (1, 5, 10, 20, 50, 100, 200)) -> Experiment:
    """Trials per concept for a uniform epsilon guarantee over K probes."""
    ks = sorted(set(grid) | {k_concepts})
    rows = [{"k": k, "epsilon": epsilon, "delta": delta, "exact": required_samples_exact(k, epsilon, delta),
             "required": required_samples(k, epsilon, delta)} for k in ks]
    value = required_samples(k_concepts, epsilon, delta)
    exact = required_samples_exact(k_concepts, epsilon, delta)
    summary = {"k": k_concepts, "epsilon": epsilon, "delta": delta, "required": value, "exact": exact}
    checks = []
    if (k_concepts, epsilon, delta) == (50, 0.1, 0.05):
        checks.append(Check("reference-value", value == 1521,
                            f"required_samples(50, 0.1, 0.05) = {value} (ceiling of {exact:.2f}; expected 1521)"))
    fields = ("k", "epsilon", "delta", "exact", "required")
    return Experiment("sample-complexity", Table(fields, rows), summary, checks)


# -- pipeline and validation protocol ------------------------------------------------------------


def pipeline_study(problems: Sequence[SimProblem], sim: Simulator, index: Bm25Index | None,
                   config: PipelineConfig, seed: int = 0, jobs: int = 1, checkpoint_dir: str | Path | None = None,
                   effect_threshold: float = 0.5, min_cka_rate: float = 0.8) -> tuple[Experiment, list[PipelineResult]]:
    """Run the suite and check the activation claims that synthetic problems make checkable.

    The CKA check uses enumerated effects, so it only applies to problems
    bound to a synthetic model.
    """
    results = run_suite(problems, sim, index, config, seed, jobs=jobs, checkpoint_dir=checkpoint_dir)
    n_obs = config.obs_trials(sim)
    summary = summarize(results)
    checks = []
    mismatched = [r.problem_id for r in results if r.llm_call_count != r.expected_call_count(config, n_obs)]
    checks.append(Check("call-ledger", not mismatched,
                        "ledger = 1 + n_obs + M*|K0| + rollouts + lenses on every problem" if not mismatched
                        else f"mismatch on {', '.join(mismatched[:5])}"))
    errors = [r.problem_id for r in results if r.error]
    checks.append(Check("no-errors", not errors, "no problem ended with an error" if not errors
                        else f"{len(errors)} errored, first: {errors[0]}"))
    by_id = {p.id: p for p in problems}
    eligible = [r for r in results if r.phase_solved is not Phase.SRV and by_id[r.problem_id].binding is not None
                and key_effect(by_id[r.problem_id]) >= effect_threshold]
    if eligible:
        cka = sum(r.phase_solved is Phase.MCTS for r in eligible)
        summary["cka_eligible"] = len(eligible)
        summary["cka_solved"] = cka
        checks.append(Check("cka-rate", cka >= min_cka_rate * len(eligible),
                            f"MCTS phase solved {cka}/{len(eligible)} SRV-failed problems with e* >= "
                            f"{effect_threshold:g} (>= {min_cka_rate:.0%})"))
    solved, unsolved = summary["mean_max_icp_solved"], summary["mean_max_icp_unsolved"]
    if solved is None and unsolved is None:
        pass  # no problem got past SRV, so there is no split to compare
    elif solved is None or unsolved is None:
        empty = "solved" if solved is None else "unsolved"
        checks.append(Check("max-icp-split", False, f"direction undefined: no {empty} problem carries a probe"))
    else:
        checks.append(Check("max-icp-split", solved > unsolved,
                            f"mean max-ICP solved {solved:.3f} vs unsolved {unsolved:.3f} (solved > unsolved)"))
    rows = summary_rows(results)
    for row, problem in zip(rows, problems):
        row["e_star"] = key_effect(problem) if problem.binding is not None else None
    experiment = Experiment("pipeline", Table((*SUMMARY_FIELDS, "e_star"), rows), summary, checks)
    experiment.text["pipeline-results.jsonl"] = "".join(
        json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n" for r in results)
    return experiment, results


def rq1_study(problems: Sequence[SimProblem], sim: Simulator, index: Bm25Index | None, config: PipelineConfig,
              seed: int = 0) -> tuple[Experiment, Rq1Report]:
    report = run_rq1_protocol(problems, sim, index, config, Stream(seed))
    fields = [report.top1_mean, report.control_mean, report.advantage_mean, report.paired_t, report.p_value,
              report.cohens_d]
    complete = all(x is not None and math.isfinite(x) for x in fields)
    checks = [Check("report-complete", report.n > 0 and complete,
                    f"{report.n} problems after screening; paired t and Cohen's d "
                    + ("finite" if complete else "undefined"))]
    summary = {k: v for k, v in vars(report).items() if k != "rows"}
    experiment = Experiment("rq1", Table(RQ1_FIELDS, rq1_rows(report)), summary, checks)
    experiment.text["rq1-report.md"] = report.markdown()
    return experiment, report


__all__ = [
    "ArmSimulator", "Check", "Experiment", "Table", "backdoor_identity", "chain_identification", "confounding_demo",
    "delta_decomposition", "estimated_instance", "icp_convergence", "loglog_slope", "nonident_witness",
    "pipeline_study", "read_csv", "regret", "rq1_study", "sample_complexity", "scm_problem", "write_csv",
]
