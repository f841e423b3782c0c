import csv

import numpy as np
import pytest

from cika import fixtures
from cika.icp import estimate_baseline, estimate_icp
from cika.scm import DiscreteStudentScm, LinearSvarScm
from cika.simulator import SyntheticSimulator
from cika.svar import (SvarSimulator, estimate_contemporaneous, estimate_lagged, exact_clamp_response,
                       identify_chain)
from cika.streams import Stream

from conftest import bind


def within(est, se, truth, k=3.0):
    return np.all(np.abs(np.asarray(est) - truth) <= k * np.asarray(se) + 1e-12)


def test_contemporaneous_diagonal_b0_zero_lags():
    # p = 0.7 c0 - 0.4 c1 + 0 * c2 + e, with B0 diagonal apart from the p row
    b0 = np.diag([1.0, 2.0, 1.0, 1.5])
    b0[3, :3] = [-0.7, 0.4, 0.0]
    scm = LinearSvarScm(b0=b0)
    truth = -b0[3, :3] / b0[3, 3]  # solve the p equation with the concept clamped
    est = estimate_contemporaneous(scm, 4000, 1)
    assert within(est.contemporaneous, est.contemporaneous_se, truth)
    assert abs(est.contemporaneous[2]) <= 3 * est.contemporaneous_se[2]
    for i in range(3):
        assert exact_clamp_response(scm, i, 1)[0, 3] == pytest.approx(truth[i])


def test_contemporaneous_chain_path_products():
    scm = fixtures.chain_svar(4, coef=0.8)
    est = estimate_contemporaneous(scm, 4000, 2)
    truth = np.array([0.8 ** 4, 0.8 ** 3, 0.8 ** 2, 0.8])
    assert within(est.contemporaneous, est.contemporaneous_se, truth)


def test_contemporaneous_rmse_rate():
    scm = fixtures.chain_svar(2, coef=0.8)
    truth = 0.8 ** 2
    ms = [10, 40, 160, 640]
    rmse = []
    for m in ms:
        errs = [estimate_contemporaneous(scm, m, Stream(5).child(rep)).contemporaneous[0] - truth
                for rep in range(150)]
        rmse.append(np.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log(ms), np.log(rmse), 1)[0]
    assert -0.6 <= slope <= -0.4


def test_contemporaneous_sign_agrees_with_discrete_probe():
    weights = [1.5, -1.5, 0.9]
    b0 = np.eye(4)
    b0[3, :3] = [-w for w in weights]
    svar = estimate_contemporaneous(LinearSvarScm(b0=b0), 2000, 3).contemporaneous
    discrete = DiscreteStudentScm((0.0, 1.0), (0.5, 0.5), ((0.0, 0.0),) * 3, (-0.3, *weights), 0.0)
    problem = bind(discrete)
    sim = SyntheticSimulator()
    base = estimate_baseline(sim, problem, 4000, 3)
    probes = [estimate_icp(sim, problem, f"c{i}", 4000, base, 3).e_hat for i in range(3)]
    assert list(np.sign(svar)) == list(np.sign(probes)) == [1.0, -1.0, 1.0]


def test_lagged_zero_lags_is_null():
    est = estimate_lagged(fixtures.chain_svar(3), [1, 2, 3], 500, 4)
    assert np.all(np.abs(est.lagged) <= 3 * est.lagged_se + 1e-12)


def test_lagged_single_lag_chain():
    est = estimate_lagged(fixtures.lag_chain_svar(0.3), [1, 2], 4000, 5)
    assert abs(est.lagged[0, 0] - 0.3) <= 3 * est.lagged_se[0, 0]
    assert abs(est.lagged[0, 1]) <= 3 * est.lagged_se[0, 1] + 1e-12


def test_lagged_geometric_decay():
    rho, coef = 0.6, 0.5
    est = estimate_lagged(fixtures.geometric_svar(rho, coef), [1, 2, 3, 4, 5], 4000, 6)
    truth = np.array([coef * rho ** (h - 1) for h in range(1, 6)])
    assert within(est.lagged[0], est.lagged_se[0], truth)
    exact = exact_clamp_response(fixtures.geometric_svar(rho, coef), 0, 6)[1:, 1]
    np.testing.assert_allclose(exact, truth, rtol=1e-12)
    spectral = fixtures.geometric_svar(rho, coef).spectral_radius()
    assert spectral == pytest.approx(rho)


def test_lagged_errors():
    with pytest.raises(ValueError):
        estimate_lagged(fixtures.lag_chain_svar(), [5], 100, 0, horizon_limit=3)
    with pytest.raises(ValueError):
        estimate_lagged(fixtures.lag_chain_svar(), [], 100, 0)


def test_nonstationary_rejected():
    with pytest.raises(ValueError):
        LinearSvarScm(b0=np.eye(2), lags=(np.array([[1.1, 0.0], [0.0, 0.0]]),))


def test_estimate_csv(tmp_path):
    est = estimate_lagged(fixtures.geometric_svar(), [1, 2], 100, 0)
    est.contemporaneous = np.zeros(1)
    est.contemporaneous_se = np.zeros(1)
    path = tmp_path / "svar.csv"
    est.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["quantity", "c0"]
    assert [r[0] for r in rows[1:]] == ["contemporaneous", "contemporaneous_se", "lag_1", "lag_1_se",
                                        "lag_2", "lag_2_se"]


# -- chains -------------------------------------------------------------------------


def test_chain_four_nodes():
    result = identify_chain(fixtures.chain_svar(4, 0.8), 4, 2000, 0)
    assert result.ok and result.interventions_used == 3
    assert result.edges == [("c0", "c1"), ("c1", "c2"), ("c2", "c3"), ("c3", "p")]


def test_chain_two_nodes_one_intervention():
    result = identify_chain(fixtures.chain_svar(2, 0.8), 2, 2000, 0)
    assert result.interventions_used == 1 and result.edges == [("c0", "c1"), ("c1", "p")]


def test_chain_single_node_needs_none():
    result = identify_chain(fixtures.chain_svar(1), 1, 100, 0)
    assert result.interventions_used == 0 and result.edges == [("c0", "p")]


@pytest.mark.parametrize("seed", range(6))
def test_chain_label_invariance(seed):
    n = 6
    order = [int(i) for i in np.random.default_rng(seed).permutation(n)]
    names = tuple(f"k{i}" for i in range(n))
    sim = SvarSimulator(fixtures.chain_svar(n, 0.7, order=order), names)
    result = identify_chain(sim, n, 2000, seed)
    assert result.order == [names[i] for i in order]


def test_chain_ambiguity_reported():
    # c0 and c1 both feed p directly: not a chain
    b0 = np.eye(3)
    b0[2, :2] = -0.8
    result = identify_chain(LinearSvarScm(b0=b0), 2, 500, 0, intervene_on=[0])
    assert result.ok  # one intervention cannot rule the fork out...
    b0 = np.eye(4)
    b0[3, :3] = -0.8
    result = identify_chain(LinearSvarScm(b0=b0), 3, 500, 0)
    assert not result.ok and result.order is None  # ...but two can


def test_chain_bad_arguments():
    with pytest.raises(ValueError):
        identify_chain(fixtures.chain_svar(3), 4, 100, 0)
    with pytest.raises(ValueError):
        identify_chain(fixtures.chain_svar(3), 3, 100, 0, intervene_on=[0, 0])


def test_svar_simulator_names():
    with pytest.raises(ValueError):
        SvarSimulator(fixtures.chain_svar(3), ("a",))
    assert SvarSimulator(fixtures.chain_svar(2)).names == ("c0", "c1")
