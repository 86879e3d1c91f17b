import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pncriterion.exceptions import ZeroCell
from pncriterion.expfam import (
    CategoricalModel,
    GenericModel,
    MultinomialModel,
    ProductReference,
    QuadraticModel,
    Sampled,
)
from pncriterion.mcmc import ChainConfig
from pncriterion.mle import solve_mle


def test_multinomial_counts():
    counts = np.array([10, 20, 70])
    sol = solve_mle(MultinomialModel(2), counts[1:] / counts.sum())
    assert np.allclose(sol.theta_hat, [np.log(2.0), np.log(7.0)], atol=1e-12)
    assert sol.path == "ClosedForm"


def test_quadratic_identity():
    sol = solve_mle(QuadraticModel(np.zeros(2), np.eye(2)), [1.0, 2.0])
    assert np.allclose(sol.theta_hat, [1.0, 2.0])


def test_quadratic_general_q():
    m = np.array([1.0, -1.0])
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    sol = solve_mle(QuadraticModel(m, Q), [2.0, 0.0])
    assert np.allclose(Q @ sol.theta_hat + m, [2.0, 0.0], atol=1e-12)


def test_zero_cell():
    with pytest.raises(ZeroCell):
        solve_mle(MultinomialModel(2), [0.0, 0.5])
    with pytest.raises(ZeroCell):
        solve_mle(MultinomialModel(2), [0.5, 0.5])


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_newton_matches_closed_form(seed, p):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.full(p + 1, 3.0))
    model = MultinomialModel(p)
    closed = solve_mle(model, probs[1:])
    newton = solve_mle(model, probs[1:], method="newton")
    assert newton.path == "AnalyticNewton"
    assert np.max(np.abs(newton.theta_hat - closed.theta_hat)) <= 1e-10 * max(1.0, np.max(np.abs(closed.theta_hat))) + 1e-9
    # residual history is monotone under damping
    assert all(b <= a for a, b in zip(newton.history, newton.history[1:]))


def test_categorical_newton():
    design = np.array([[0.0], [1.0], [2.0]])
    model = CategoricalModel(design)
    sol = solve_mle(model, [1.2])
    assert model.eta(sol.theta_hat)[0] == pytest.approx(1.2, abs=1e-10)


def test_sampled_multinomial_within_three_se():
    model = MultinomialModel(2)
    eta_hat = np.array([0.3, 0.5])
    exact = solve_mle(model, eta_hat).theta_hat
    sol = solve_mle(model, eta_hat, method=Sampled(200_000, 3))
    assert sol.path == "SampledNewton"
    assert np.all(np.abs(sol.theta_hat - exact) <= 3 * sol.theta_se)


def test_sampled_generic_recovers_moments():
    ref = ProductReference([("beta", 2.0, 2.0), ("beta", 2.0, 2.0)], ["a", "b"])
    model = GenericModel([(0,), (0, 1)], ref, chain=ChainConfig(n_chains=2, burn_in=500, steps=3000))
    target = np.array([0.55, 0.3])
    sol = solve_mle(model, target, method=Sampled(40_000, 5))
    check = model.xi(model.sample(sol.theta_hat, 80_000, np.random.default_rng(9))).mean(axis=0)
    assert np.all(np.abs(check - target) < 0.01)


def test_sampled_requires_seeded_method_for_generic():
    ref = ProductReference([("beta", 2.0, 2.0)], ["a"])
    with pytest.raises(TypeError):
        solve_mle(GenericModel([(0,)], ref), [0.5])
