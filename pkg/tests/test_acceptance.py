"""One test per acceptance criterion, at the stated tolerance and time budget."""
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from bruteforce import expfam_bracket, general_bracket, random_cumulants, random_moment_tensors
from pncriterion.cli import main
from pncriterion.expfam import GenericModel, MultinomialModel, ProductReference, QuadraticModel, Sampled
from pncriterion.mcmc import ChainConfig, sample_model
from pncriterion.mle import solve_mle
from pncriterion.modelsel import assess_model
from pncriterion.moments import expfam_moment_tensors
from pncriterion.risk import first_order_general, required_sample_size, second_order_expfam
from pncriterion.risk import second_order_general_theorem1
from pncriterion.threshold import approximate_min_t, min_bayes_error_bound, threshold_for_alpha
from pncriterion.verify import ScenarioSpec, simulate_estimation_risk

ROOT = Path(__file__).resolve().parents[1]
N_JOBS = 4


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_criterion_01_abalone_golden(abalone_counts_path, capsys):
    with Clock() as clock:
        code = main(["multinomial", "--counts", abalone_counts_path, "--alpha", "0.05"])
    res = json.loads(capsys.readouterr().out)["result"]
    print(f"first={res['first_order']:.7f} second={res['second_order']:.6e} total={res['total']:.6f}")
    assert code == 0
    assert res["n"] == 4177 and res["p"] == 62
    assert abs(res["first_order"] - 0.007421) <= 1e-6
    assert 1.72e-4 <= res["second_order"] <= 1.73e-4
    assert res["total"] < 0.02 and res["decision"] == "Pass"
    assert clock.elapsed < 1.0


def test_criterion_02_sample_size():
    with Clock() as clock:
        a = required_sample_size(62, 36128.33, 0.05)
        b = required_sample_size(62, 36128.33, 0.01)
    assert (a, b) == (1642, 38847)
    assert clock.elapsed < 1.0


def test_criterion_03_threshold():
    with Clock() as clock:
        assert threshold_for_alpha(0.05).C == 0.02
        assert threshold_for_alpha(0.01).C == 0.0008
        t = min_bayes_error_bound(0.0293)
        assert 0.4390 <= t <= 0.4400
        for delta in (0.005, 0.02, 0.05):
            assert abs(min_bayes_error_bound(delta) - approximate_min_t(delta)) < 5e-3
    assert clock.elapsed < 5.0


def test_criterion_04_engine_equivalence():
    with Clock() as clock:
        worst = 0.0
        for p in range(1, 6):
            for seed in range(20):
                G, Gt, k3, k3s, k4s = random_cumulants(p, seed)
                a = second_order_general_theorem1(expfam_moment_tensors(G, Gt, k3, k3s, k4s), 100.0)
                b = second_order_expfam(G, Gt, k3, k3s, k4s, 100.0)
                worst = max(worst, abs(a - b) / abs(b))
    print(f"max relative difference {worst:.2e}")
    assert worst <= 1e-10
    assert clock.elapsed < 30.0


def test_criterion_05_bruteforce_oracle():
    with Clock() as clock:
        worst = 0.0
        for p in (1, 2, 3):
            for seed in range(5):
                mt = random_moment_tensors(p, seed)
                ref = general_bracket(mt)
                worst = max(worst, abs(second_order_general_theorem1(mt, 1.0) - ref) / abs(ref))
                G, Gt, k3, k3s, k4s = random_cumulants(p, seed)
                ref = expfam_bracket(G, Gt, k3, k3s, k4s)
                worst = max(worst, abs(second_order_expfam(G, Gt, k3, k3s, k4s, 1.0) - ref) / abs(ref))
    print(f"max relative difference {worst:.2e}")
    assert worst <= 1e-9
    assert clock.elapsed < 60.0


def test_criterion_06_monte_carlo_multinomial():
    sc = ScenarioSpec("multinomial", n=200, replications=100_000, seed=2024, params={"m": [0.2, 0.3, 0.5]})
    with Clock() as clock:
        res = simulate_estimation_risk(sc, n_jobs=N_JOBS)
    M = 5 + 10 / 3 + 2
    target = 2 / 400 + (M - 1) / (12 * 200**2)
    print(f"empirical={res.empirical_risk:.7f} se={res.std_error:.2e} target={target:.7f}")
    assert abs(res.empirical_risk - target) <= max(3 * res.std_error, 0.1 * target)
    assert clock.elapsed < 300.0


def test_criterion_07_monte_carlo_regression():
    kw = dict(n=200, p=3, replications=100_000)
    with Clock() as clock:
        c3 = simulate_estimation_risk(ScenarioSpec("normal_case3", seed=31, **kw), n_jobs=N_JOBS)
        c2 = simulate_estimation_risk(ScenarioSpec("normal_case2", seed=32, params={"noise": "uniform"}, **kw),
                                      n_jobs=N_JOBS)
    t3, t2 = 4 / 400, 3.4 / 400
    print(f"case3 {c3.empirical_risk:.7f} +- {c3.std_error:.1e} vs {t3}; "
          f"case2 {c2.empirical_risk:.7f} +- {c2.std_error:.1e} vs {t2}")
    separated = c3.empirical_risk - c2.empirical_risk > 3 * np.hypot(c2.std_error, c3.std_error)
    assert separated
    assert abs(c3.empirical_risk - t3) <= 3 * c3.std_error
    assert abs(c2.empirical_risk - t2) <= 3 * c2.std_error
    assert clock.elapsed < 600.0


def test_criterion_08_well_specified_collapse():
    rng = np.random.default_rng(0)
    for p in (1, 3, 6):
        W = rng.normal(size=(p, p))
        G = W @ W.T + np.eye(p)
        assert first_order_general(G, G, G, 250) == pytest.approx(p / 500, rel=1e-13)
    Q = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]])
    model = QuadraticModel(np.zeros(3), Q)
    gaps = []
    for seed in range(20):
        X = model.sample(np.array([0.3, -0.2, 0.1]), 100_000, np.random.default_rng(seed))
        fit = assess_model(model, X, order="first")
        assert abs(fit.trace - 3) < 0.3
        gaps.append(fit.tic - fit.aic)
        assert fit.tic - fit.aic == pytest.approx(2 * (fit.trace - 3), abs=1e-6)
    print(f"TIC-AIC gaps: max |gap| {np.max(np.abs(gaps)):.3f}")
    assert np.max(np.abs(gaps)) < 0.6


def test_criterion_09_mle_and_sampling():
    rng = np.random.default_rng(1)
    for p in (1, 3, 8):
        probs = rng.dirichlet(np.full(p + 1, 2.0))
        model = MultinomialModel(p)
        a = solve_mle(model, probs[1:]).theta_hat
        b = solve_mle(model, probs[1:], method="newton").theta_hat
        assert np.max(np.abs(a - b)) <= 1e-10 * max(1.0, np.max(np.abs(a)))
    Q = np.array([[2.0, 0.4], [0.4, 1.0]])
    quad = QuadraticModel([0.5, -1.0], Q)
    eta_hat = np.array([1.2, -0.3])
    a = solve_mle(quad, eta_hat).theta_hat
    b = solve_mle(quad, eta_hat, method="newton").theta_hat
    assert np.max(np.abs(a - b)) <= 1e-10
    sol = solve_mle(quad, eta_hat, method=Sampled(100_000, 17))
    assert np.all(np.abs(sol.theta_hat - a) <= 3 * sol.theta_se)

    beta = GenericModel([(0,)], ProductReference([("beta", 2.0, 2.0)], ["x"]))
    cfg = ChainConfig(n_chains=4, burn_in=2000, steps=27000, seed=99)
    d1 = sample_model(beta, [1.5], cfg).draws
    d2 = sample_model(beta, [1.5], cfg).draws
    assert d1.tobytes() == d2.tobytes()
    from scipy import stats

    grid = np.linspace(0, 1, 20001)
    dens = stats.beta(2, 2).pdf(grid) * np.exp(1.5 * grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    ks = stats.kstest(d1[:, 0], lambda q: np.interp(q, grid, cdf)).statistic
    print(f"KS distance {ks:.4f} over {d1.shape[0]} draws")
    assert d1.shape[0] == 100_000 and ks < 0.02


def test_criterion_10_wine_pipeline(tmp_path, capsys):
    cfg_path = ROOT / "configs" / "wine_example.json"
    cfg = json.loads(cfg_path.read_text())
    data = os.environ.get("PN_WINE_CSV", str(ROOT / cfg["data"]["path"]))
    assert Path(data).is_file(), (
        f"red-wine quality CSV not found at {data}; set PN_WINE_CSV to its location")
    out = tmp_path / "wine.json"
    code = main(["criterion", "--config", str(cfg_path), "--data", data, "-o", str(out)])
    rep = json.loads(out.read_text())
    assert code == 0, rep.get("error")
    res = rep["result"]
    info = res["model"]
    print(f"p_full={info['p_full']} p={info['p']} n={res['n']} first={res['first_order']:.4f} "
          f"total={res['total']:.4f}")
    assert info["p_full"] == 66
    assert info["p"] == 47
    assert np.isfinite(res["total"]) and res["total"] > 0
    ratio = res["first_order"] / (res["p"] / (2 * res["n"]))
    assert 0.5 <= ratio <= 2.0
