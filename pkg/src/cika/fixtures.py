"""Named model fixtures shared by tests, experiments and the CLI."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .scm import DiscreteStudentScm, LinearSvarScm, icp_target, true_effect


def table_x() -> DiscreteStudentScm:
    """Two concepts, strong difficulty confounding (D in {0, 1})."""
    return DiscreteStudentScm(
        difficulty_support=(0.0, 1.0),
        difficulty_pmf=(0.5, 0.5),
        mastery_link=((0.0, 4.0), (0.0, 4.0)),
        outcome_weights=(-1.0, 2.0, 2.0),
        outcome_difficulty_weight=3.0,
    )


def null_confounding(n: int = 2) -> DiscreteStudentScm:
    """Difficulty drives nothing: b_j = 0 and w_D = 0."""
    return DiscreteStudentScm(
        difficulty_support=(0.0, 0.5, 1.0),
        difficulty_pmf=(0.25, 0.5, 0.25),
        mastery_link=tuple((0.2, 0.0) for _ in range(n)),
        outcome_weights=(-0.5, *([1.5] * n)),
        outcome_difficulty_weight=0.0,
    )


def confounded(w_d: float, b: float = 3.0, n: int = 3) -> DiscreteStudentScm:
    """Three-level difficulty model used for w_D sweeps."""
    return DiscreteStudentScm(
        difficulty_support=(0.0, 0.5, 1.0),
        difficulty_pmf=(0.3, 0.4, 0.3),
        mastery_link=tuple((1.0, b) for _ in range(n)),
        outcome_weights=(-1.0, *np.linspace(1.5, 0.5, n)),
        outcome_difficulty_weight=w_d,
    )


def degenerate_difficulty() -> DiscreteStudentScm:
    return DiscreteStudentScm(
        difficulty_support=(0.4,),
        difficulty_pmf=(1.0,),
        mastery_link=((0.5, 2.0), (-0.5, 1.0), (0.0, 3.0)),
        outcome_weights=(-1.0, 1.0, 0.5, -0.7),
        outcome_difficulty_weight=2.0,
    )


def five_level(n: int = 5) -> DiscreteStudentScm:
    rng = np.random.default_rng(20260101)
    return DiscreteStudentScm(
        difficulty_support=(0.0, 0.25, 0.5, 0.75, 1.0),
        difficulty_pmf=(0.1, 0.2, 0.4, 0.2, 0.1),
        mastery_link=tuple((float(a), float(b)) for a, b in zip(rng.normal(0, 1, n), rng.uniform(0, 4, n))),
        outcome_weights=(-0.5, *rng.normal(0.5, 1.0, n).tolist()),
        outcome_difficulty_weight=2.5,
    )


def backdoor_fixtures() -> dict[str, DiscreteStudentScm]:
    return {
        "table_x": table_x(),
        "null_confounding": null_confounding(3),
        "confounded_wd2": confounded(2.0),
        "degenerate_difficulty": degenerate_difficulty(),
        "five_level": five_level(),
        "no_mastery_confounding": DiscreteStudentScm(
            difficulty_support=(0.0, 1.0), difficulty_pmf=(0.6, 0.4),
            mastery_link=((0.3, 0.0), (-0.2, 0.0)), outcome_weights=(0.0, 1.0, 1.0),
            outcome_difficulty_weight=2.0),
    }


def _simple(w1: float, w0: float, a1: float = 0.0, b1: float = 1.0, w_d: float = 1.0) -> DiscreteStudentScm:
    return DiscreteStudentScm(
        difficulty_support=(0.0, 1.0),
        difficulty_pmf=(0.5, 0.5),
        mastery_link=((a1, b1), (0.0, 1.0)),
        outcome_weights=(w0, w1, 0.0),
        outcome_difficulty_weight=w_d,
    )


def effect_fixture(target: float = 0.4) -> DiscreteStudentScm:
    """Two concepts; concept 0 has true effect ``target``, concept 1 none."""
    w1 = brentq(lambda w: true_effect(_simple(w, -1.0), 0) - target, 0.0, 40.0, xtol=1e-14)
    return _simple(w1, -1.0)


def tuned_scm(baseline: float, icp: float, n_null: int = 2, b: float = 1.0, w_d: float = 1.0,
              null_mastery: tuple[float, ...] | None = None) -> DiscreteStudentScm:
    """Concept 0 with probe value ``icp`` at observational rate ``baseline``.

    Concepts 1..n_null have zero outcome weight.  Solved by nested root
    finding over (w_0, w_1).
    """
    null_mastery = null_mastery or tuple(0.0 for _ in range(n_null))

    def build(w1: float, w0: float) -> DiscreteStudentScm:
        return DiscreteStudentScm(
            difficulty_support=(0.0, 1.0),
            difficulty_pmf=(0.5, 0.5),
            mastery_link=((0.0, b), *((a, b) for a in null_mastery)),
            outcome_weights=(w0, w1, *([0.0] * n_null)),
            outcome_difficulty_weight=w_d,
        )

    def w0_for(w1: float) -> float:
        return brentq(lambda w0: build(w1, w0).outcome_marginal() - baseline, -60.0, 60.0, xtol=1e-13)

    w1 = brentq(lambda w1: icp_target(build(w1, w0_for(w1)), 0) - icp, 0.0, 60.0, xtol=1e-12)
    return build(w1, w0_for(w1))


# -- SVAR fixtures -----------------------------------------------------------


def chain_svar(n: int, coef: float = 0.8, noise_sd: float = 1.0, order: list[int] | None = None) -> LinearSvarScm:
    """Concept chain feeding p: ``c_order[0] -> ... -> c_order[-1] -> p``.

    ``order`` lists coordinate indices along the chain (default 0..n-1) so
    tests can scramble which label sits where.  p is always coordinate n.
    """
    order = list(range(n)) if order is None else list(order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of range(n)")
    b0 = np.eye(n + 1)
    path = order + [n]
    for parent, child in zip(path, path[1:]):
        b0[child, parent] = -coef
    return LinearSvarScm(b0=b0, lags=(), noise_cov=np.full(n + 1, noise_sd ** 2))


def lag_chain_svar(coef: float = 0.3) -> LinearSvarScm:
    """One concept acting on p only through lag 1."""
    lag = np.zeros((2, 2))
    lag[1, 0] = coef
    return LinearSvarScm(b0=np.eye(2), lags=(lag,), noise_cov=np.ones(2))


def geometric_svar(rho: float = 0.6, coef: float = 0.5) -> LinearSvarScm:
    """p feeds back on itself at lag 1 so impulse responses decay like rho^l."""
    lag = np.array([[0.0, 0.0], [coef, rho]])
    return LinearSvarScm(b0=np.eye(2), lags=(lag,), noise_cov=np.ones(2))


def random_svar_pair(seed: int, max_dim: int = 6, max_cond: float = 20.0) -> tuple[np.ndarray, np.ndarray]:
    """Random well-conditioned (B0, diagonal Sigma) for identifiability studies."""
    rng = np.random.default_rng([seed, 0x5EED])
    while True:
        dim = int(rng.integers(2, max_dim + 1))
        b0 = np.eye(dim) + 0.5 * rng.standard_normal((dim, dim)) / np.sqrt(dim)
        if np.linalg.cond(b0) <= max_cond:
            return b0, np.diag(rng.uniform(0.2, 3.0, dim))


def pair_threshold_scm() -> DiscreteStudentScm:
    """Three concepts where only c1 and c2 together make success likely.

    Masteries are rare, the outcome link needs both c1 and c2 to cross
    zero, and c0 is irrelevant.
    """
    return DiscreteStudentScm(
        difficulty_support=(0.0, 1.0), difficulty_pmf=(0.5, 0.5),
        mastery_link=((-3.0, 1.0), (-3.0, 1.0), (-3.0, 1.0)),
        outcome_weights=(-9.0, 0.0, 5.5, 5.5), outcome_difficulty_weight=0.5,
    )
