"""Ground-truth structural causal models.

Two models live here:

* :class:`DiscreteStudentScm` -- binary concept masteries ``m_j`` and binary
  correctness ``p`` with a latent difficulty ``D`` that drives both.  Its
  graph is exactly ``D -> m_j``, ``D -> p``, ``m_j -> p``; small enough to
  enumerate, so every estimator in the package can be checked against an
  exact answer.
* :class:`LinearSvarScm` -- a linear-Gaussian structural VAR
  ``B0 x_t = sum_l B_l x_{t-l} + eps_t`` with ``p`` as the last coordinate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import expit

from .streams import Stream, as_stream, uniforms

MAX_ENUM_CONCEPTS = 16
MAX_B0_CONDITION = 1e8

# Samples from sample_observational and sample_do share one tag so that an
# empty clamp reproduces the observational stream exactly.
_SAMPLE_TAG = "scm.draw"


class EnumerationCapError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteStudentScm:
    """Latent-difficulty student model.

    ``P(m_j=1 | D) = logistic(a_j - b_j D)`` and
    ``P(p=1 | m, D) = logistic(w_0 + sum_j w_j m_j - w_D D)``.
    """

    difficulty_support: tuple[float, ...]
    difficulty_pmf: tuple[float, ...]
    mastery_link: tuple[tuple[float, float], ...]
    outcome_weights: tuple[float, ...]
    outcome_difficulty_weight: float

    def __post_init__(self) -> None:
        support = tuple(float(d) for d in self.difficulty_support)
        pmf = tuple(float(p) for p in self.difficulty_pmf)
        links = tuple((float(a), float(b)) for a, b in self.mastery_link)
        weights = tuple(float(w) for w in self.outcome_weights)
        object.__setattr__(self, "difficulty_support", support)
        object.__setattr__(self, "difficulty_pmf", pmf)
        object.__setattr__(self, "mastery_link", links)
        object.__setattr__(self, "outcome_weights", weights)
        object.__setattr__(self, "outcome_difficulty_weight", float(self.outcome_difficulty_weight))

        n = len(links)
        if not 1 <= n <= MAX_ENUM_CONCEPTS:
            raise ValueError(f"n_concepts must be in [1, {MAX_ENUM_CONCEPTS}], got {n}")
        if len(weights) != n + 1:
            raise ValueError(f"outcome_weights needs w_0 plus {n} concept weights, got {len(weights)}")
        if not support or len(support) != len(pmf):
            raise ValueError("difficulty_support and difficulty_pmf must be nonempty and equal length")
        if any(not 0.0 <= d <= 1.0 for d in support):
            raise ValueError("difficulty levels must lie in [0, 1]")
        if any(p < 0 for p in pmf) or abs(math.fsum(pmf) - 1.0) > 1e-12:
            raise ValueError("difficulty_pmf must be nonnegative and sum to 1")
        values = [*support, *pmf, *weights, self.outcome_difficulty_weight, *(x for ab in links for x in ab)]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("SCM parameters must be finite")

    @property
    def n_concepts(self) -> int:
        return len(self.mastery_link)

    # -- vectorised mechanism pieces -------------------------------------

    def _support(self) -> np.ndarray:
        return np.asarray(self.difficulty_support)

    def mastery_probs(self) -> np.ndarray:
        """``P(m_j=1 | D=d)`` as a (levels, n) array."""
        a = np.array([ab[0] for ab in self.mastery_link])
        b = np.array([ab[1] for ab in self.mastery_link])
        return expit(a[None, :] - b[None, :] * self._support()[:, None])

    def outcome_logit(self, masteries: np.ndarray, difficulty: np.ndarray) -> np.ndarray:
        w = np.asarray(self.outcome_weights)
        return w[0] + masteries @ w[1:] - self.outcome_difficulty_weight * difficulty

    def mastery_marginals(self) -> np.ndarray:
        """``P(m_j=1)`` with D integrated out."""
        return np.asarray(self.difficulty_pmf) @ self.mastery_probs()

    def check_concept(self, concept: int) -> int:
        if isinstance(concept, bool) or not isinstance(concept, (int, np.integer)):
            raise TypeError(f"concept index must be an int, got {concept!r}")
        if not 0 <= concept < self.n_concepts:
            raise ValueError(f"unknown concept index {concept} (n_concepts={self.n_concepts})")
        return int(concept)

    def _check_clamps(self, clamped: Mapping[int, int] | None) -> dict[int, int]:
        out = {}
        for concept, value in (clamped or {}).items():
            concept = self.check_concept(concept)
            if value not in (0, 1):
                raise ValueError(f"clamp value must be 0 or 1, got {value!r}")
            out[concept] = int(value)
        return out

    def draw(self, u: np.ndarray, clamped: Mapping[int, int] | None = None,
             logit_offset: float = 0.0) -> "Samples":
        """Push uniforms through the mechanisms.

        ``u`` has shape (N, n+2): column 0 picks D by inverse CDF, columns
        1..n the masteries, column n+1 the outcome.  Clamped masteries ignore
        their uniform but still consume it.
        """
        clamps = self._check_clamps(clamped)
        u = np.atleast_2d(np.asarray(u, dtype=float))
        n = self.n_concepts
        if u.shape[1] != n + 2:
            raise ValueError(f"expected {n + 2} uniforms per draw, got {u.shape[1]}")
        cdf = np.cumsum(self.difficulty_pmf)
        cdf[-1] = 1.0
        level = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), len(cdf) - 1)
        q = self.mastery_probs()[level]
        masteries = (u[:, 1:n + 1] < q).astype(np.int8)
        for concept, value in clamps.items():
            masteries[:, concept] = value
        d = self._support()[level]
        p_correct = expit(self.outcome_logit(masteries.astype(float), d) + logit_offset)
        outcome = (u[:, n + 1] < p_correct).astype(np.int8)
        return Samples(masteries=masteries, outcome=outcome, difficulty=level)

    # -- enumeration ------------------------------------------------------

    def _enum_guard(self) -> None:
        if self.n_concepts > MAX_ENUM_CONCEPTS:
            raise EnumerationCapError(f"enumeration capped at {MAX_ENUM_CONCEPTS} concepts")

    def _states(self) -> np.ndarray:
        n = self.n_concepts
        return ((np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)

    def joint_table(self) -> np.ndarray:
        """Observational joint ``P(D, m, p=1)`` and ``P(D, m, p=0)``.

        Returns an array of shape (levels, 2**n, 2) indexed [D, m-state, p].
        """
        self._enum_guard()
        states = self._states()
        q = self.mastery_probs()  # (L, n)
        pm = np.prod(np.where(states[None, :, :] == 1, q[:, None, :], 1.0 - q[:, None, :]), axis=2)
        pc = expit(self.outcome_logit(states[None, :, :], self._support()[:, None]))
        weight = np.asarray(self.difficulty_pmf)[:, None] * pm
        return np.stack([weight * (1.0 - pc), weight * pc], axis=2)

    def outcome_marginal(self, clamped: Mapping[int, int] | None = None,
                         logit_offset: float = 0.0) -> float:
        """Exact ``P(p=1)`` under the given clamps, read off the mechanisms."""
        self._enum_guard()
        clamps = self._check_clamps(clamped)
        states = self._states()
        q = self.mastery_probs().copy()
        for concept, value in clamps.items():
            q[:, concept] = float(value)
        pm = np.prod(np.where(states[None, :, :] == 1, q[:, None, :], 1.0 - q[:, None, :]), axis=2)
        pc = expit(self.outcome_logit(states[None, :, :], self._support()[:, None]) + logit_offset)
        return float(np.asarray(self.difficulty_pmf) @ np.sum(pm * pc, axis=1))


@dataclass(frozen=True)
class Sample:
    masteries: tuple[int, ...]
    outcome: int
    difficulty: int  # latent level index; estimators must not read it


@dataclass(frozen=True)
class Samples:
    """Column-oriented batch of draws (iterates as :class:`Sample`)."""

    masteries: np.ndarray
    outcome: np.ndarray
    difficulty: np.ndarray

    def __len__(self) -> int:
        return len(self.outcome)

    def __getitem__(self, i: int) -> Sample:
        return Sample(tuple(int(x) for x in self.masteries[i]), int(self.outcome[i]), int(self.difficulty[i]))

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))


def sample_observational(scm: DiscreteStudentScm, count: int, rng: Stream | int) -> Samples:
    return sample_do(scm, {}, count, rng)


def sample_do(scm: DiscreteStudentScm, clamped: Mapping[int, int], count: int,
              rng: Stream | int) -> Samples:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    stream = as_stream(rng)
    u = uniforms(stream, _SAMPLE_TAG, count, scm.n_concepts + 2)
    return scm.draw(u, clamped)


def interventional_distribution(scm: DiscreteStudentScm, concept: int, value: int) -> float:
    """Exact ``P(p=1 | do(m_concept=value))`` from the mutilated mechanisms."""
    concept = scm.check_concept(concept)
    if value not in (0, 1):
        raise ValueError(f"value must be 0 or 1, got {value!r}")
    return scm.outcome_marginal({concept: value})


def true_effect(scm: DiscreteStudentScm, concept: int) -> float:
    return interventional_distribution(scm, concept, 1) - interventional_distribution(scm, concept, 0)


def observational_conditional(scm: DiscreteStudentScm, concept: int, value: int) -> float:
    """Exact ``P(p=1 | m_concept=value)`` from the observational joint."""
    concept = scm.check_concept(concept)
    table = scm.joint_table()
    mask = scm._states()[:, concept] == value
    cell = table[:, mask, :]
    return float(cell[..., 1].sum() / cell.sum())


def backdoor_adjusted(scm: DiscreteStudentScm, concept: int, value: int) -> float:
    """``sum_D P(p=1 | m_concept=value, D) P(D)`` using only the observational joint.

    The conditional is obtained by summing the joint table over the other
    masteries, never by evaluating the mechanism with a clamp.
    """
    concept = scm.check_concept(concept)
    if value not in (0, 1):
        raise ValueError(f"value must be 0 or 1, got {value!r}")
    table = scm.joint_table()
    mask = scm._states()[:, concept] == value
    cell = table[:, mask, :].sum(axis=1)  # (levels, 2)
    p_d = table.sum(axis=(1, 2))
    conditional = cell[:, 1] / cell.sum(axis=1)
    return float(np.sum(conditional * p_d))


def icp_target(scm: DiscreteStudentScm, concept: int) -> float:
    """Population value of the probe: ``P(p=1 | do(m=1)) - P(p=1)``."""
    return interventional_distribution(scm, concept, 1) - scm.outcome_marginal()


# -- linear SVAR ----------------------------------------------------------


@dataclass(frozen=True)
class LinearSvarScm:
    b0: np.ndarray
    lags: tuple[np.ndarray, ...] = ()
    noise_cov: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        b0 = np.array(self.b0, dtype=float)
        if b0.ndim != 2 or b0.shape[0] != b0.shape[1]:
            raise ValueError("b0 must be square")
        dim = b0.shape[0]
        lags = tuple(np.array(m, dtype=float) for m in self.lags)
        for lag in lags:
            if lag.shape != (dim, dim):
                raise ValueError(f"lag matrices must be {dim}x{dim}")
        cov = np.eye(dim) if self.noise_cov is None else np.array(self.noise_cov, dtype=float)
        if cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (dim, dim) or np.any(cov != np.diag(np.diag(cov))) or np.any(np.diag(cov) <= 0):
            raise ValueError("noise_cov must be diagonal with positive entries")
        cond = np.linalg.cond(b0)
        if not np.isfinite(cond) or cond > MAX_B0_CONDITION:
            raise ValueError(f"b0 is singular or ill-conditioned (condition number {cond:.3g})")
        for arr in (b0, cov, *lags):
            arr.setflags(write=False)
        object.__setattr__(self, "b0", b0)
        object.__setattr__(self, "lags", lags)
        object.__setattr__(self, "noise_cov", cov)
        radius = self.spectral_radius()
        if radius >= 1.0:
            raise ValueError(f"SVAR is not stationary (companion spectral radius {radius:.4f})")

    @property
    def dim(self) -> int:
        return self.b0.shape[0]

    @property
    def n_lags(self) -> int:
        return len(self.lags)

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.b0))

    def reduced_lags(self) -> list[np.ndarray]:
        return [np.linalg.solve(self.b0, lag) for lag in self.lags]

    def companion(self) -> np.ndarray:
        dim, L = self.dim, self.n_lags
        if L == 0:
            return np.zeros((dim, dim))
        top = np.hstack(self.reduced_lags())
        if L == 1:
            return top
        bottom = np.hstack([np.eye(dim * (L - 1)), np.zeros((dim * (L - 1), dim))])
        return np.vstack([top, bottom])

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.companion()))))


Intervention = tuple[int, int, float]  # (time, coordinate, value)


def _clamp_schedule(interventions: Sequence[Intervention], horizon: int, dim: int) -> dict[int, dict[int, float]]:
    schedule: dict[int, dict[int, float]] = {}
    for t, k, v in interventions:
        if not 1 <= t <= horizon:
            raise ValueError(f"intervention time {t} outside 1..{horizon}")
        if not 0 <= k < dim:
            raise ValueError(f"intervention coordinate {k} outside 0..{dim - 1}")
        schedule.setdefault(int(t), {})[int(k)] = float(v)
    return schedule


def simulate_svar_batch(scm: LinearSvarScm, noise: np.ndarray,
                        interventions: Sequence[Intervention] = ()) -> np.ndarray:
    """Roll the SVAR forward for a batch of shock paths.

    ``noise`` has shape (batch, T, dim) and holds the structural shocks
    eps_1..eps_T; the result has the same shape with x_1..x_T.  History
    before t=1 is zero.  At a clamped time the clamped coordinates take
    their values and the remaining structural equations are solved jointly.
    """
    noise = np.asarray(noise, dtype=float)
    batch, horizon, dim = noise.shape
    if dim != scm.dim:
        raise ValueError(f"noise dimension {dim} does not match SCM dimension {scm.dim}")
    schedule = _clamp_schedule(interventions, horizon, dim)
    x = np.zeros((batch, horizon + scm.n_lags, dim))
    offset = scm.n_lags
    b0 = scm.b0
    for t in range(1, horizon + 1):
        rhs = noise[:, t - 1, :].copy()
        for ell, lag in enumerate(scm.lags, start=1):
            rhs += x[:, offset + t - 1 - ell, :] @ lag.T
        clamps = schedule.get(t)
        if not clamps:
            x[:, offset + t - 1, :] = np.linalg.solve(b0, rhs.T).T
            continue
        fixed = np.array(sorted(clamps))
        free = np.array([i for i in range(dim) if i not in clamps], dtype=int)
        values = np.array([clamps[k] for k in fixed])
        xt = np.empty((batch, dim))
        xt[:, fixed] = values
        if free.size:
            sub_rhs = rhs[:, free] - values @ b0[np.ix_(free, fixed)].T
            xt[:, free] = np.linalg.solve(b0[np.ix_(free, free)], sub_rhs.T).T
        x[:, offset + t - 1, :] = xt
    return x[:, offset:, :]


def draw_svar_noise(scm: LinearSvarScm, batch: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    sd = np.sqrt(np.diag(scm.noise_cov))
    return rng.standard_normal((batch, horizon, scm.dim)) * sd


def simulate_svar(scm: LinearSvarScm, horizon: int, interventions: Sequence[Intervention] = (),
                  rng: Stream | int = 0) -> np.ndarray:
    """One trajectory x_1..x_T as a (T, dim) array."""
    if horizon < scm.n_lags + 1:
        raise ValueError(f"horizon must be >= L+1 = {scm.n_lags + 1}")
    noise = draw_svar_noise(scm, 1, horizon, as_stream(rng).rng("svar.noise"))
    return simulate_svar_batch(scm, noise, interventions)[0]


def reduced_form_covariance(b0: np.ndarray, noise_cov: np.ndarray) -> np.ndarray:
    b0 = np.asarray(b0, dtype=float)
    noise_cov = np.asarray(noise_cov, dtype=float)
    if noise_cov.ndim == 1:
        noise_cov = np.diag(noise_cov)
    cond = np.linalg.cond(b0)
    if not np.isfinite(cond) or cond > MAX_B0_CONDITION:
        raise ValueError("b0 is singular")
    inv = np.linalg.inv(b0)
    out = inv @ noise_cov @ inv.T
    return (out + out.T) / 2.0


def _random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def nonidentifiability_witness(b0: np.ndarray, noise_cov: np.ndarray, rotation_seed: int | Stream = 0,
                               rotation: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Another ``(B0', Sigma')`` with the same reduced-form covariance.

    Rotating the whitened shocks by an orthogonal Q gives
    ``B0' = S Q^T S^-1 B0`` with ``S = Sigma^(1/2)`` and ``Sigma' = Sigma``.
    In one dimension the only alternative is the sign flip.
    """
    b0 = np.asarray(b0, dtype=float)
    noise_cov = np.asarray(noise_cov, dtype=float)
    if noise_cov.ndim == 1:
        noise_cov = np.diag(noise_cov)
    dim = b0.shape[0]
    if dim == 1:
        return -b0, noise_cov.copy()
    evals, evecs = np.linalg.eigh((noise_cov + noise_cov.T) / 2.0)
    if np.any(evals <= 0):
        raise ValueError("noise_cov must be positive definite")
    root = evecs @ np.diag(np.sqrt(evals)) @ evecs.T
    root_inv = evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T
    stream = as_stream(rotation_seed)
    for attempt in range(100):
        q = rotation if rotation is not None else _random_rotation(dim, stream.rng("witness.rotation", attempt))
        b0_new = root @ q.T @ root_inv @ b0
        if rotation is not None or np.max(np.abs(b0_new - b0)) >= 1e-3:
            return b0_new, noise_cov.copy()
    raise RuntimeError("could not draw a rotation far enough from the identity")


# -- JSON fixtures ---------------------------------------------------------


def scm_to_dict(scm: DiscreteStudentScm | LinearSvarScm) -> dict:
    if isinstance(scm, DiscreteStudentScm):
        a, b = zip(*scm.mastery_link)
        return {
            "kind": "discrete_student",
            "n_concepts": scm.n_concepts,
            "difficulty_support": list(scm.difficulty_support),
            "difficulty_pmf": list(scm.difficulty_pmf),
            "mastery_link": {"a": list(a), "b": list(b)},
            "outcome_link": {"w0": scm.outcome_weights[0], "w": list(scm.outcome_weights[1:]),
                             "w_d": scm.outcome_difficulty_weight},
        }
    return {
        "kind": "linear_svar",
        "dim": scm.dim,
        "b0": scm.b0.tolist(),
        "lags": [lag.tolist() for lag in scm.lags],
        "noise_cov": scm.noise_cov.tolist(),
    }


def scm_from_dict(doc: dict) -> DiscreteStudentScm | LinearSvarScm:
    kind = doc.get("kind", "discrete_student" if "mastery_link" in doc else "linear_svar")
    if kind == "discrete_student":
        link = doc["mastery_link"]
        out = doc["outcome_link"]
        scm = DiscreteStudentScm(
            difficulty_support=tuple(doc["difficulty_support"]),
            difficulty_pmf=tuple(doc["difficulty_pmf"]),
            mastery_link=tuple(zip(link["a"], link["b"])),
            outcome_weights=(out["w0"], *out["w"]),
            outcome_difficulty_weight=out["w_d"],
        )
        if "n_concepts" in doc and doc["n_concepts"] != scm.n_concepts:
            raise ValueError("n_concepts does not match the mastery_link length")
        return scm
    if kind == "linear_svar":
        return LinearSvarScm(b0=np.array(doc["b0"]), lags=tuple(np.array(m) for m in doc.get("lags", [])),
                             noise_cov=np.array(doc["noise_cov"]))
    raise ValueError(f"unknown SCM kind {kind!r}")


def load_scm(path: str | Path) -> DiscreteStudentScm | LinearSvarScm:
    with open(path, encoding="utf-8") as fh:
        return scm_from_dict(json.load(fh))


def save_scm(scm: DiscreteStudentScm | LinearSvarScm, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scm_to_dict(scm), fh, indent=2)
        fh.write("\n")
