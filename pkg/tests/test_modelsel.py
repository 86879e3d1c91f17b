import numpy as np
import pytest

from pncriterion.exceptions import SingularMatrix, ZeroCell
from pncriterion.expfam import CategoricalModel, MultinomialModel, QuadraticModel
from pncriterion.mle import solve_mle
from pncriterion.modelsel import (
    assess_model,
    bias_correction,
    compare_models,
    cross_entropy_hat,
    sandwich_trace,
)


def test_balanced_bernoulli_cross_entropy():
    data = np.repeat([0, 1], 50)
    model = MultinomialModel(1)
    theta = solve_mle(model, model.xi_bar(data)).theta_hat
    assert cross_entropy_hat(model, data, theta) == pytest.approx(np.log(2.0))


def test_zero_cell_fit_refused():
    model = MultinomialModel(2)
    with pytest.raises(ZeroCell):
        assess_model(model, np.repeat([0, 1], 50))


def test_gaussian_cross_entropy():
    X = np.random.default_rng(0).standard_normal((200_000, 2))
    model = QuadraticModel(np.zeros(2), np.eye(2))
    theta = solve_mle(model, model.xi_bar(X)).theta_hat
    assert cross_entropy_hat(model, X, theta) == pytest.approx(np.log(2 * np.pi) + 1.0, abs=0.01)


def test_bias_correction_examples():
    assert bias_correction([[3.0]], [[1.0]], 30) == pytest.approx(0.05)
    G = np.diag([1.0, 2.0, 5.0])
    assert bias_correction(G, G, 100) == pytest.approx(3 / 200)
    with pytest.raises(SingularMatrix):
        sandwich_trace(np.eye(2), np.zeros((2, 2)))


def test_cross_entropy_bias_matches_simulation():
    m = np.array([0.2, 0.3, 0.5])
    n, reps, p = 10_000, 20_000, 2
    counts = np.random.default_rng(3).multinomial(n, m, size=reps)
    q = counts / n
    ce_hat = -np.sum(np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0), axis=1)
    diff = ce_hat - (-np.sum(m * np.log(m)))
    se = diff.std(ddof=1) / np.sqrt(reps)
    assert abs(diff.mean() + p / (2 * n)) < 3 * se


def test_tic_identity_and_trace():
    data = np.random.default_rng(1).choice(4, 500, p=[0.1, 0.2, 0.3, 0.4])
    fit = assess_model(CategoricalModel(np.arange(4.0)[:, None]), data)
    assert fit.tic == pytest.approx(2 * fit.n * fit.cross_entropy_hat + 2 * fit.trace, rel=1e-12)
    assert fit.aic == pytest.approx(2 * fit.n * fit.cross_entropy_hat + 2 * fit.p, rel=1e-12)
    assert fit.corrected == pytest.approx(fit.cross_entropy_hat + fit.trace / (2 * fit.n))


@pytest.mark.parametrize("seed", range(20))
def test_trace_converges_to_p_in_model(seed):
    rng = np.random.default_rng(seed)
    Q = np.array([[2.0, 0.3, 0.0], [0.3, 1.0, 0.2], [0.0, 0.2, 0.5]])
    model = QuadraticModel(np.zeros(3), Q)
    X = model.sample(np.array([0.3, -0.2, 0.1]), 100_000, rng)
    fit = assess_model(model, X, order="first")
    assert abs(fit.trace - 3) < 0.1 * 3


def test_nested_multinomials():
    m = np.array([0.1, 0.35, 0.15, 0.4])
    data = np.random.default_rng(2).choice(4, 100_000, p=m)
    big = MultinomialModel(3)
    small = CategoricalModel(np.arange(4.0)[:, None])
    cmp = compare_models(big, small, data, names=("full", "linear"))
    assert cmp.verdict == "Comparable"
    assert cmp.winner == "full"
    full, linear = cmp.fits
    assert full.corrected < linear.corrected


def test_not_comparable_when_one_fails():
    rng = np.random.default_rng(5)
    data = rng.integers(0, 41, 300)
    data[:41] = np.arange(41)
    cmp = compare_models(CategoricalModel(np.arange(41.0)[:, None]), MultinomialModel(40), data)
    assert cmp.verdict == "NotComparable"
    assert cmp.winner is None
    assert cmp.fits[0].pn_pass and not cmp.fits[1].pn_pass
    assert "B" in cmp.reason


def test_identical_models_tie():
    data = np.random.default_rng(6).choice(3, 2000, p=[0.2, 0.3, 0.5])
    cmp = compare_models(MultinomialModel(2), MultinomialModel(2), data)
    assert cmp.verdict == "Comparable" and cmp.winner is None and cmp.reason == "tie"
    assert cmp.to_dict()["models"][0]["pn_pass"]
