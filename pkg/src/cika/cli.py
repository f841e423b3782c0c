"""Command-line entry point: ``cika <command> [flags]``.

Every experiment command writes its CSVs and a ``<name>-summary.json``
under ``--out``, prints one line per check and exits 0 only when all
checks pass (1 otherwise, naming the failures).  Usage and configuration
errors exit with 2.
"""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

from . import experiments as ex
from .pipeline import PipelineConfig, ProtocolError
from .report import ReportError, build_report
from .retrieval import CorpusError, ingest, load_any, save_index
from .scm import DiscreteStudentScm, load_scm
from .search import UcbParams
from .simulator import SyntheticSimulator, perturb
from .simulator.base import load_problems, save_problems
from .simulator.endpoint import EndpointConfig, EndpointSimulator
from .suites import latent_knowledge_suite, rq1_suite

MODES = ("synthetic", "perturbed", "endpoint")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "synthetic"
    delta: float = 0.0
    scm: str | None = None
    seed: int = 0
    jobs: int = field(default_factory=lambda: os.cpu_count() or 1)
    out: str = "results"
    endpoint_url: str | None = None
    model: str | None = None
    temperature: float = 0.7
    max_in_flight: int = 8
    audit_log: str | None = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    params: dict[str, Any] = field(default_factory=dict)  # keyword overrides for the experiment function

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError(f"delta must lie in [0, 1], got {self.delta}")
        if self.mode != "perturbed" and self.delta:
            raise ConfigError("--delta only applies to --mode perturbed")
        has_endpoint = self.endpoint_url is not None or self.model is not None
        if self.mode == "endpoint" and (self.endpoint_url is None or self.model is None):
            raise ConfigError("--mode endpoint needs both --endpoint-url and --model")
        if self.mode != "endpoint" and has_endpoint:
            raise ConfigError("--endpoint-url and --model are only valid with --mode endpoint")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")


PIPELINE_FLAGS = {"top_k": "bm25_top_k", "budget": "budget_b", "m_trials": "m_trials", "alpha": "alpha",
                  "beta": "beta", "gamma": "gamma"}
RUN_FLAGS = ("mode", "delta", "scm", "seed", "jobs", "out", "endpoint_url", "model", "temperature", "max_in_flight",
             "audit_log")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file first, then every flag the user actually passed."""
    doc: dict[str, Any] = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    pipeline = dict(doc.pop("pipeline", {}) or {})
    params = dict(doc.pop("params", {}) or {})
    for name in RUN_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            doc[name] = value
    for flag, key in PIPELINE_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            pipeline[key] = value
    try:
        return RunConfig(**doc, pipeline=PipelineConfig.from_dict(pipeline), params=params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def make_simulator(run: RunConfig):
    if run.mode == "endpoint":
        return EndpointSimulator(EndpointConfig(base_url=run.endpoint_url, model=run.model,
                                                temperature=run.temperature, max_in_flight=run.max_in_flight,
                                                audit_log=run.audit_log))
    if run.mode == "perturbed":
        return perturb(SyntheticSimulator(), run.delta)
    return SyntheticSimulator()


def _close(sim) -> None:
    close = getattr(sim, "close", None)
    if close is not None:
        close()


def _discrete_scm(run: RunConfig) -> DiscreteStudentScm | None:
    if run.scm is None:
        return None
    try:
        scm = load_scm(run.scm)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load SCM fixture {run.scm}: {exc}") from exc
    if not isinstance(scm, DiscreteStudentScm):
        raise ConfigError(f"{run.scm} holds a linear SVAR; this command needs a discrete student model")
    return scm


def _synthetic_only(run: RunConfig, command: str) -> None:
    if run.mode == "endpoint":
        raise ConfigError(f"{command} runs on synthetic models only")


def _problems(path: str | None, default):
    if path is None:
        return default()
    try:
        return load_problems(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load problems from {path}: {exc}") from exc


def _index(path: str | None):
    if path is None:
        return None
    try:
        return load_any(path)
    except (OSError, CorpusError) as exc:
        raise ConfigError(f"cannot load corpus or index {path}: {exc}") from exc


def _call(fn, run: RunConfig, **kwargs):
    allowed = set(inspect.signature(fn).parameters) - set(kwargs)
    unknown = set(run.params) - allowed
    if unknown:
        raise ConfigError(f"unknown params {sorted(unknown)}; {fn.__name__} accepts {sorted(allowed)}")
    return fn(**kwargs, **run.params)


# -- commands -------------------------------------------------------------------------


def cmd_confounding_demo(args, run: RunConfig) -> ex.Experiment:
    _synthetic_only(run, "confounding-demo")
    experiment = _call(ex.confounding_demo, run, seed=run.seed, scm=_discrete_scm(run))
    identity = ex.backdoor_identity()
    experiment.extra["backdoor"] = identity.table
    experiment.checks.extend(identity.checks)
    return experiment


def cmd_icp_convergence(args, run: RunConfig) -> ex.Experiment:
    _synthetic_only(run, "icp-convergence")
    return _call(ex.icp_convergence, run, seed=run.seed, scm=_discrete_scm(run), sim=make_simulator(run),
                 jobs=run.jobs)


def cmd_delta_decomposition(args, run: RunConfig) -> ex.Experiment:
    _synthetic_only(run, "delta-decomposition")
    return _call(ex.delta_decomposition, run, seed=run.seed, scm=_discrete_scm(run), jobs=run.jobs)


def cmd_regret(args, run: RunConfig) -> ex.Experiment:
    _synthetic_only(run, "regret")
    params = UcbParams(run.pipeline.beta, run.pipeline.gamma)
    return _call(ex.regret, run, seed=run.seed, params=params, jobs=run.jobs)


def cmd_chain_ident(args, run: RunConfig) -> ex.Experiment:
    _synthetic_only(run, "chain-ident")
    return _call(ex.chain_identification, run, seed=run.seed, jobs=run.jobs)


def cmd_nonident_witness(args, run: RunConfig) -> ex.Experiment:
    _synthetic_only(run, "nonident-witness")
    return _call(ex.nonident_witness, run, seed=run.seed)


def cmd_sample_complexity(args, run: RunConfig) -> ex.Experiment:
    try:
        return ex.sample_complexity(args.k, args.epsilon, args.failure_prob)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_pipeline(args, run: RunConfig) -> ex.Experiment:
    problems = _problems(args.problems, lambda: latent_knowledge_suite(100, seed=run.seed))
    index = _index(args.corpus)
    sim = make_simulator(run)
    try:
        experiment, _ = ex.pipeline_study(problems, sim, index, run.pipeline, run.seed, jobs=run.jobs,
                                          checkpoint_dir=args.checkpoint)
    finally:
        _close(sim)
    return experiment


def cmd_rq1(args, run: RunConfig) -> ex.Experiment:
    problems = _problems(args.problems, lambda: rq1_suite(67, seed=run.seed))
    index = _index(args.corpus)
    sim = make_simulator(run)
    try:
        experiment, report = ex.rq1_study(problems, sim, index, run.pipeline, run.seed)
    except ProtocolError as exc:
        return ex.Experiment("rq1", ex.Table(("problem_id",), []), {}, [ex.Check("report-complete", False, str(exc))])
    finally:
        _close(sim)
    print(report.markdown(), end="")
    return experiment


def cmd_report(args, run: RunConfig) -> int:
    try:
        drawn = build_report(args.results_dir, args.out)
    except ReportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name in drawn:
        print(f"wrote {Path(args.out or args.results_dir) / name}")
    return 0


def cmd_mock_server(args, run: RunConfig) -> int:
    import uvicorn

    from .simulator.mock_server import ScriptedResponder, create_app

    responder: Any = args.reply
    if args.script:
        rules = json.loads(Path(args.script).read_text(encoding="utf-8"))
        responder = ScriptedResponder([(needle, replies) for needle, replies in rules], default=args.reply)
    uvicorn.run(create_app(responder, fail_first=args.fail_first), host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_ingest(args, run: RunConfig) -> int:
    try:
        index = ingest(args.corpus)
    except (OSError, CorpusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    save_index(index, args.index)
    print(f"indexed {len(index)} documents into {args.index}")
    return 0


def cmd_make_suite(args, run: RunConfig) -> int:
    if args.kind == "latent":
        problems = latent_knowledge_suite(args.n, seed=run.seed)
    else:
        problems = rq1_suite(args.n, seed=run.seed)
    save_problems(problems, args.path)
    print(f"wrote {len(problems)} problems to {args.path}")
    return 0


EXPERIMENTS = {
    "confounding-demo": (cmd_confounding_demo, "observational vs interventional bias over a w_D sweep"),
    "icp-convergence": (cmd_icp_convergence, "RMSE of the probe vs M and its log-log slope"),
    "delta-decomposition": (cmd_delta_decomposition, "probe bias under TV-perturbed simulators"),
    "regret": (cmd_regret, "causal UCB vs UCB1 regret with a paired sign test"),
    "chain-ident": (cmd_chain_ident, "recover scrambled SVAR chains with n-1 interventions"),
    "nonident-witness": (cmd_nonident_witness, "observationally equivalent SVAR pairs"),
    "sample-complexity": (cmd_sample_complexity, "trials per concept for a uniform epsilon guarantee"),
    "pipeline": (cmd_pipeline, "run the activation pipeline over a problem suite"),
    "rq1": (cmd_rq1, "top-1 probe vs negative-control validation protocol"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options (override --config)")
    g.add_argument("--config", help="JSON config: run options plus 'pipeline' and 'params' objects")
    g.add_argument("--mode", choices=MODES)
    g.add_argument("--delta", type=float, help="TV error of the perturbed simulator")
    g.add_argument("--scm", help="JSON SCM fixture")
    g.add_argument("--seed", type=int)
    g.add_argument("--jobs", type=int, help="worker count (default: logical cores)")
    g.add_argument("--out", help="output directory (default: results)")
    g.add_argument("--endpoint-url", dest="endpoint_url")
    g.add_argument("--model")
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    g.add_argument("--audit-log", dest="audit_log", help="JSONL log of every endpoint request and response")
    g.add_argument("--top-k", dest="top_k", type=int, help="BM25 documents per query")
    g.add_argument("--budget", type=int, help="MCTS rollout budget B")
    g.add_argument("--m-trials", dest="m_trials", type=int, help="do-trials per concept")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--gamma", type=float)

    parser = argparse.ArgumentParser(prog="cika", description="Causal knowledge-activation workbench.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}
    for name, (_, help_text) in EXPERIMENTS.items():
        subs[name] = sub.add_parser(name, parents=[common], help=help_text)
    sc = subs["sample-complexity"]
    sc.add_argument("k", nargs="?", type=int, default=50, help="number of concepts K")
    sc.add_argument("epsilon", nargs="?", type=float, default=0.1)
    sc.add_argument("failure_prob", nargs="?", type=float, default=0.05, help="overall failure probability")
    for name in ("pipeline", "rq1"):
        subs[name].add_argument("problems", nargs="?", help="problems JSONL (default: built-in synthetic suite)")
        subs[name].add_argument("--corpus", help="corpus JSONL or saved BM25 index")
    subs["pipeline"].add_argument("--checkpoint", help="directory for per-problem checkpoints (resumable)")

    rep = sub.add_parser("report", help="SVG charts from experiment CSVs")
    rep.add_argument("results_dir")
    rep.add_argument("--out", help="where to write SVGs (default: results_dir)")

    mock = sub.add_parser("mock-server", help="serve the scriptable chat-completions mock")
    mock.add_argument("--host", default="127.0.0.1")
    mock.add_argument("--port", type=int, default=8000)
    mock.add_argument("--reply", default="\\boxed{42}", help="default reply text")
    mock.add_argument("--script", help="JSON list of [substring, [replies...]] rules")
    mock.add_argument("--fail-first", dest="fail_first", type=int, default=0)

    ing = sub.add_parser("ingest", help="build a BM25 index from a corpus JSONL")
    ing.add_argument("corpus")
    ing.add_argument("index", help="output index JSON")

    ms = sub.add_parser("make-suite", help="write a synthetic problem suite as JSONL")
    ms.add_argument("kind", choices=("latent", "rq1"))
    ms.add_argument("path")
    ms.add_argument("--n", type=int, default=None)
    ms.add_argument("--seed", type=int)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "report":
        return cmd_report(args, RunConfig())
    if args.command == "mock-server":
        return cmd_mock_server(args, RunConfig())
    if args.command == "ingest":
        return cmd_ingest(args, RunConfig())
    if args.command == "make-suite":
        if args.n is None:
            args.n = 100 if args.kind == "latent" else 67
        return cmd_make_suite(args, RunConfig(seed=args.seed or 0))
    try:
        run = resolve_config(args)
        experiment = EXPERIMENTS[args.command][0](args, run)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in experiment.write(run.out):
        print(f"wrote {path}")
    for check in experiment.checks:
        print(check.line())
    if experiment.ok:
        return 0
    print(f"FAILED: {', '.join(experiment.failing)}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
