import numpy as np
import pytest

from pncriterion.exceptions import ConfigError
from pncriterion.verify import (
    ScenarioSpec,
    poisson_truth,
    predicted_first_order,
    predicted_second_order,
    simulate_estimation_risk,
)


def test_case2_uniform_prediction():
    sc = ScenarioSpec("normal_case2", n=200, p=3, params={"noise": "uniform"})
    assert predicted_first_order(sc) == pytest.approx((3 + 0.4) / 400)


def test_case3_prediction():
    sc = ScenarioSpec("normal_case3", n=200, p=3)
    assert predicted_first_order(sc) == pytest.approx(4 / 400)


def test_poisson_prediction_below_well_specified():
    # a concave log-rate with |lambda - lambda_0| < 1 over the design
    sc = ScenarioSpec("poisson", n=500, p=2, params={"a": -1.0, "b": [0.3], "c": -1.0})
    X, w, lam0, theta = poisson_truth(sc)
    assert np.max(np.abs(np.exp(X @ theta) - lam0)) < 1
    assert predicted_first_order(sc) < sc.p / (2 * sc.n)


def test_multinomial_second_order_closed_form():
    sc = ScenarioSpec("multinomial", n=200, params={"m": [0.2, 0.3, 0.5]})
    M = 5 + 10 / 3 + 2
    assert predicted_second_order(sc) == pytest.approx((M - 1) / (12 * 200**2))


@pytest.mark.parametrize("kw", [dict(kind="nope", n=10), dict(kind="multinomial", n=10, params={"m": [0.5, 0.6]}),
                                dict(kind="normal_case3", n=10), dict(kind="quadratic", n=10, replications=10,
                                                                      params={"m": [0.0], "Q": [[1.0]]})])
def test_bad_scenarios(kw):
    with pytest.raises(ConfigError):
        ScenarioSpec(**kw)


def test_quadratic_collapse():
    sc = ScenarioSpec("quadratic", n=100, replications=20_000, seed=1,
                      params={"m": [0.0, 0.0], "Q": [[1.0, 0.0], [0.0, 1.0]]})
    res = simulate_estimation_risk(sc)
    assert abs(res.empirical_risk - 0.01) < 3 * res.std_error
    assert res.discarded == 0


def test_deterministic():
    sc = ScenarioSpec("multinomial", n=50, replications=3000, seed=9, params={"m": [0.2, 0.3, 0.5]})
    a = simulate_estimation_risk(sc)
    b = simulate_estimation_risk(sc, n_jobs=2)
    assert a.empirical_risk == b.empirical_risk and a.std_error == b.std_error


def test_z_score_definition():
    sc = ScenarioSpec("multinomial", n=100, replications=2000, seed=2, params={"m": [0.4, 0.6]})
    res = simulate_estimation_risk(sc)
    assert res.std_error > 0
    assert res.z_score == pytest.approx((res.empirical_risk - res.predicted) / res.std_error)


def test_risk_slope_in_n():
    ns = [100, 400, 1600]
    risks = [simulate_estimation_risk(ScenarioSpec("multinomial", n=n, replications=20_000, seed=n,
                                                   params={"m": [0.2, 0.3, 0.5]})).empirical_risk
             for n in ns]
    slope = np.polyfit(np.log(ns), np.log(risks), 1)[0]
    assert -1.1 <= slope <= -0.9


@pytest.mark.slow
def test_platykurtic_case_converges_faster():
    kw = dict(n=200, p=3, replications=100_000)
    c2 = simulate_estimation_risk(ScenarioSpec("normal_case2", seed=21, params={"noise": "uniform"}, **kw), n_jobs=4)
    c3 = simulate_estimation_risk(ScenarioSpec("normal_case3", seed=22, **kw), n_jobs=4)
    assert c3.empirical_risk - c2.empirical_risk > 3 * np.hypot(c2.std_error, c3.std_error)


def test_poisson_simulation_runs():
    sc = ScenarioSpec("poisson", n=300, p=2, replications=1000, seed=4, params={"a": 0.5, "b": [0.3], "c": 0.2})
    res = simulate_estimation_risk(sc)
    assert res.discarded <= 10
    assert abs(res.z_score) < 5
