"""SVG charts from the CSVs the experiment commands write.

Each plotting function returns the series it drew so tests can check the
numbers without parsing SVG.  Output is deterministic: no timestamp in the
metadata and a fixed hash salt for element ids.
"""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from .experiments import loglog_slope, read_csv

matplotlib.rcParams["svg.hashsalt"] = "cika"


class ReportError(ValueError):
    pass


def _save(fig: Figure, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def plot_regret(csv_path: str | Path, out: str | Path) -> dict[tuple[str, str], tuple[list[int], list[float]]]:
    """Mean cumulative regret vs step, one panel per instance, one line per policy."""
    series: dict[tuple[str, str], tuple[list[int], list[float]]] = {}
    for row in read_csv(csv_path):
        steps, values = series.setdefault((row["instance"], row["policy"]), ([], []))
        steps.append(int(row["step"]))
        values.append(float(row["mean_cumulative_regret"]))
    if not series:
        raise ReportError(f"{csv_path}: no regret rows")
    instances = sorted({k[0] for k in series})
    fig = Figure(figsize=(5 * len(instances), 4))
    for i, inst in enumerate(instances):
        ax = fig.add_subplot(1, len(instances), i + 1)
        for (name, policy), (steps, values) in sorted(series.items()):
            if name == inst:
                ax.plot(steps, values, label=policy)
        ax.set_xscale("log")
        ax.set_title(inst)
        ax.set_xlabel("step")
        ax.set_ylabel("mean cumulative pseudo-regret")
        ax.legend()
    fig.tight_layout()
    _save(fig, Path(out))
    return series


def plot_convergence(csv_path: str | Path, out: str | Path) -> dict:
    """RMSE vs M on log-log axes with the least-squares slope annotated."""
    rows = read_csv(csv_path)
    if not rows:
        raise ReportError(f"{csv_path}: no convergence rows")
    ms = [int(r["m"]) for r in rows]
    rmse = [float(r["rmse"]) for r in rows]
    fit = loglog_slope(ms, rmse)
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.plot(ms, rmse, marker="o", label="RMSE")
    if fit is not None:
        slope, intercept = fit
        ax.plot(ms, [math.exp(intercept) * m ** slope for m in ms], linestyle="--",
                label=f"fit, slope {slope:.3f}")
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("M (do-trials; n_obs = M)")
    ax.set_ylabel("RMSE of probe")
    ax.legend()
    fig.tight_layout()
    _save(fig, Path(out))
    return {"m": ms, "rmse": rmse, "slope": None if fit is None else fit[0]}


def plot_delta(csv_path: str | Path, out: str | Path) -> dict[float, tuple[list[int], list[float]]]:
    """Absolute bias vs M, one line per delta, with each delta's bound dashed."""
    series: dict[float, tuple[list[int], list[float]]] = {}
    bounds: dict[float, float] = {}
    for row in read_csv(csv_path):
        delta = float(row["delta"])
        ms, bias = series.setdefault(delta, ([], []))
        ms.append(int(row["m"]))
        bias.append(float(row["abs_bias"]))
        bounds[delta] = float(row["bound"])
    if not series:
        raise ReportError(f"{csv_path}: no delta rows")
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    for delta, (ms, bias) in sorted(series.items()):
        line, = ax.plot(ms, bias, marker="o", label=f"delta = {delta:g}")
        if bounds[delta] > 0:
            ax.axhline(bounds[delta], color=line.get_color(), linestyle="--", linewidth=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("M (do-trials; n_obs = M)")
    ax.set_ylabel("|mean error| of probe")
    ax.legend()
    fig.tight_layout()
    _save(fig, Path(out))
    return series


def plot_confounding(csv_path: str | Path, out: str | Path) -> dict[str, tuple[float | None, float]]:
    """Observational vs interventional bias per case, as grouped bars."""
    rows = read_csv(csv_path)
    if not rows:
        raise ReportError(f"{csv_path}: no confounding rows")
    cases = [r["case"] for r in rows]
    obs = [float(r["bias_obs"]) if r["bias_obs"] else None for r in rows]
    icp = [float(r["bias_icp"]) for r in rows]
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot()
    xs = range(len(cases))
    ax.bar([x - 0.2 for x in xs], [0.0 if o is None else o for o in obs], width=0.4, label="observational")
    ax.bar([x + 0.2 for x in xs], icp, width=0.4, label="interventional")
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(list(xs), cases, rotation=30)
    ax.set_ylabel("estimate - true effect")
    ax.legend()
    fig.tight_layout()
    _save(fig, Path(out))
    return dict(zip(cases, zip(obs, icp)))


def plot_pipeline(csv_path: str | Path, out: str | Path) -> dict[str, int]:
    """Problems by the phase that solved them."""
    counts: dict[str, int] = defaultdict(int)
    for row in read_csv(csv_path):
        counts[row["phase_solved"]] += 1
    if not counts:
        raise ReportError(f"{csv_path}: no pipeline rows")
    order = ["SRV", "MCTS", "Recovery", "Unsolved"]
    labels = [p for p in order if p in counts] + sorted(set(counts) - set(order))
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.bar(labels, [counts[p] for p in labels])
    ax.set_ylabel("problems")
    fig.tight_layout()
    _save(fig, Path(out))
    return {p: counts[p] for p in labels}


PLOTS = {
    "regret-curves.csv": ("regret.svg", plot_regret),
    "icp-convergence.csv": ("icp-convergence.svg", plot_convergence),
    "delta-decomposition.csv": ("delta-decomposition.svg", plot_delta),
    "confounding.csv": ("confounding.svg", plot_confounding),
    "pipeline.csv": ("pipeline.svg", plot_pipeline),
}


def build_report(results_dir: str | Path, out_dir: str | Path | None = None) -> dict[str, object]:
    """Draw every chart whose CSV is present; returns series keyed by SVG name."""
    src = Path(results_dir)
    if not src.is_dir():
        raise ReportError(f"{src} is not a directory")
    dest = Path(out_dir) if out_dir is not None else src
    dest.mkdir(parents=True, exist_ok=True)
    drawn = {}
    for csv_name, (svg_name, plot) in PLOTS.items():
        path = src / csv_name
        if path.exists():
            drawn[svg_name] = plot(path, dest / svg_name)
    if not drawn:
        raise ReportError(f"{src}: no experiment CSVs to plot (expected one of {', '.join(PLOTS)})")
    return drawn


__all__ = ["PLOTS", "ReportError", "build_report", "plot_confounding", "plot_convergence", "plot_delta",
           "plot_pipeline", "plot_regret"]
