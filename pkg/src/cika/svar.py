"""Intervention-based estimation on linear SVAR concept-state models.

The last coordinate of every model is the correctness signal p; the others
are concept states.  Observational covariances cannot pin down B0 (any
rotation of the shocks fits equally well), so everything here works from
clamped trajectories instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .scm import LinearSvarScm, draw_svar_noise, simulate_svar_batch
from .streams import Stream, as_stream

# absolute floor below which a coupled difference is treated as round-off
SHIFT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SvarSimulator:
    """Trajectory source over a linear SVAR with named concept coordinates."""

    scm: LinearSvarScm
    names: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        names = tuple(self.names) or tuple(f"c{i}" for i in range(self.scm.dim - 1))
        if len(names) != self.scm.dim - 1:
            raise ValueError(f"expected {self.scm.dim - 1} concept names, got {len(names)}")
        object.__setattr__(self, "names", names)

    @property
    def n_concepts(self) -> int:
        return self.scm.dim - 1

    @property
    def p_index(self) -> int:
        return self.scm.dim - 1

    def noise(self, count: int, horizon: int, stream: Stream, *tag) -> np.ndarray:
        return draw_svar_noise(self.scm, count, horizon, stream.rng(*tag))

    def run(self, noise: np.ndarray, interventions=()) -> np.ndarray:
        return simulate_svar_batch(self.scm, noise, interventions)


@dataclass
class SvarEstimate:
    names: tuple[str, ...]
    contemporaneous: np.ndarray | None = None
    contemporaneous_se: np.ndarray | None = None
    horizons: tuple[int, ...] = ()
    lagged: np.ndarray | None = None  # (concepts, horizons)
    lagged_se: np.ndarray | None = None
    m_trials: int = 0

    def write_csv(self, path: str | Path) -> None:
        """Rows are quantities (contemporaneous, lag_1, ...), columns are concepts."""
        rows = []
        if self.contemporaneous is not None:
            rows.append(("contemporaneous", self.contemporaneous))
            rows.append(("contemporaneous_se", self.contemporaneous_se))
        for j, h in enumerate(self.horizons):
            rows.append((f"lag_{h}", self.lagged[:, j]))
            rows.append((f"lag_{h}_se", self.lagged_se[:, j]))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["quantity", *self.names])
            for label, values in rows:
                writer.writerow([label, *(repr(float(v)) for v in values)])


def _check(sim: SvarSimulator | LinearSvarScm) -> SvarSimulator:
    return sim if isinstance(sim, SvarSimulator) else SvarSimulator(sim)


def estimate_contemporaneous(sim: SvarSimulator | LinearSvarScm, m_trials: int, rng: Stream | int) -> SvarEstimate:
    """Same-period effect of each concept on p.

    For concept i the p coordinate is averaged over ``m_trials`` draws under
    do(c_i = 1) and, on an independent batch, under do(c_i = 0); the
    estimate is the difference of means.
    """
    sim = _check(sim)
    if m_trials < 2:
        raise ValueError(f"m_trials must be >= 2, got {m_trials}")
    stream = as_stream(rng).child("svar.contemporaneous")
    est = np.empty(sim.n_concepts)
    se = np.empty(sim.n_concepts)
    for i in range(sim.n_concepts):
        arms = []
        for value in (1, 0):
            x = sim.run(sim.noise(m_trials, 1, stream, i, value), [(1, i, float(value))])
            arms.append(x[:, 0, sim.p_index])
        est[i] = arms[0].mean() - arms[1].mean()
        se[i] = math.sqrt((arms[0].var(ddof=1) + arms[1].var(ddof=1)) / m_trials)
    return SvarEstimate(sim.names, est, se, m_trials=m_trials)


def estimate_lagged(sim: SvarSimulator | LinearSvarScm, horizons: Sequence[int], m_trials: int,
                    rng: Stream | int, horizon_limit: int | None = None) -> SvarEstimate:
    """Mean shift of p at t + l after a one-shot clamp c_i = 1 at t.

    Each clamped trajectory is paired with the unclamped trajectory driven
    by the same shocks, and the shift is the mean of the paired
    differences.  ``horizon_limit`` caps the simulated length; asking for a
    horizon beyond it is an error.
    """
    sim = _check(sim)
    horizons = tuple(int(h) for h in horizons)
    if not horizons or min(horizons) < 1:
        raise ValueError("horizons must be a nonempty list of positive integers")
    if m_trials < 2:
        raise ValueError(f"m_trials must be >= 2, got {m_trials}")
    length = max(horizons) + 1
    if horizon_limit is not None and length > horizon_limit:
        raise ValueError(f"horizon {max(horizons)} exceeds the simulated length {horizon_limit}")
    stream = as_stream(rng).child("svar.lagged")
    est = np.empty((sim.n_concepts, len(horizons)))
    se = np.empty_like(est)
    cols = [h for h in horizons]  # time index t + h with the clamp at t = 1 (array index 0)
    for i in range(sim.n_concepts):
        noise = sim.noise(m_trials, length, stream, i)
        diff = sim.run(noise, [(1, i, 1.0)]) - sim.run(noise)
        shifts = diff[:, cols, sim.p_index]
        est[i] = shifts.mean(axis=0)
        se[i] = shifts.std(axis=0, ddof=1) / math.sqrt(m_trials)
    return SvarEstimate(sim.names, horizons=horizons, lagged=est, lagged_se=se, m_trials=m_trials)


def exact_clamp_response(scm: LinearSvarScm, concept: int, horizon: int) -> np.ndarray:
    """Exact mean response of every coordinate to do(x_concept = 1) at t = 1.

    With zero-mean shocks and no history, the unclamped mean path is zero,
    so the response is the shock-free clamped path of length ``horizon``.
    """
    noise = np.zeros((1, horizon, scm.dim))
    return simulate_svar_batch(scm, noise, [(1, concept, 1.0)])[0]


# -- chain orientation -----------------------------------------------------------------


@dataclass
class ChainIdentification:
    order: list[str] | None  # concept names from source to sink, None when ambiguous
    edges: list[tuple[str, str]]
    interventions_used: int
    shifted: dict[str, list[str]] = field(default_factory=dict)
    ambiguous: str | None = None

    @property
    def ok(self) -> bool:
        return self.ambiguous is None


def _shifted(diff: np.ndarray, threshold: float) -> np.ndarray:
    mean = diff.mean(axis=0)
    se = diff.std(axis=0, ddof=1) / math.sqrt(len(diff))
    return (np.abs(mean) > threshold * se) & (np.abs(mean) > SHIFT_TOLERANCE)


def identify_chain(sim: SvarSimulator | LinearSvarScm, n: int, m_trials: int, rng: Stream | int,
                   threshold: float = 3.0, intervene_on: Sequence[int] | None = None) -> ChainIdentification:
    """Orient a concept chain ending in p with n - 1 single-node interventions.

    Each intervened concept is clamped to 1 and compared with its natural
    trajectory under the same shocks; a variable counts as a descendant when
    its mean shift exceeds ``threshold`` standard errors.  Along a chain the
    descendant sets are nested, which orders the intervened nodes; the one
    node never intervened on is slotted in after the last intervened node
    whose descendants include it.  Any inconsistency with a chain is
    reported through ``ambiguous`` instead of being guessed away.
    """
    sim = _check(sim)
    if n != sim.n_concepts:
        raise ValueError(f"model has {sim.n_concepts} concepts, expected n={n}")
    if n < 1:
        raise ValueError("n must be >= 1")
    names = sim.names
    targets = list(range(n - 1)) if intervene_on is None else [int(i) for i in intervene_on]
    if len(targets) != n - 1 or len(set(targets)) != n - 1:
        raise ValueError("intervene_on must list n - 1 distinct concepts")
    stream = as_stream(rng).child("svar.chain")

    desc: dict[int, set[int]] = {}
    for i in targets:
        noise = sim.noise(m_trials, 1, stream, i)
        diff = (sim.run(noise, [(1, i, 1.0)]) - sim.run(noise))[:, 0, :]
        hits = _shifted(diff, threshold)
        hits[i] = False
        desc[i] = {int(k) for k in np.flatnonzero(hits)}
    shifted = {names[i]: [names[k] if k < n else "p" for k in sorted(d)] for i, d in desc.items()}

    def fail(reason: str) -> ChainIdentification:
        return ChainIdentification(None, [], len(targets), shifted, reason)

    p = sim.p_index
    ordered = sorted(targets, key=lambda i: (-len(desc[i]), i))
    for a, b in zip(ordered, ordered[1:]):
        if len(desc[a]) == len(desc[b]):
            return fail(f"{names[a]} and {names[b]} shift the same number of variables")
    untouched = [i for i in range(n) if i not in desc]
    order = list(ordered)
    if untouched:
        u = untouched[0]
        pos = 0
        for k, i in enumerate(ordered):
            if u in desc[i]:
                pos = k + 1
        order.insert(pos, u)
    for k, i in enumerate(order):
        if i in desc and desc[i] != set(order[k + 1:]) | {p}:
            return fail(f"shift pattern under do({names[i]}) is not that of a chain")
    path = [names[i] for i in order]
    edges = list(zip(path, path[1:])) + [(path[-1], "p")]
    return ChainIdentification(path, edges, len(targets), shifted)


__all__ = [
    "ChainIdentification", "SvarEstimate", "SvarSimulator", "estimate_contemporaneous", "estimate_lagged",
    "exact_clamp_response", "identify_chain",
]
