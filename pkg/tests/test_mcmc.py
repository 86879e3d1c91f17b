import numpy as np
import pytest
from scipy import stats

from pncriterion.exceptions import NoReference
from pncriterion.expfam import GenericModel, MultinomialModel, ProductReference
from pncriterion.mcmc import ChainConfig, batch_means_se, sample_model


def _beta_model():
    return GenericModel([(0,)], ProductReference([("beta", 2.0, 2.0)], ["x"]))


def test_deterministic_bytes():
    cfg = ChainConfig(n_chains=2, burn_in=200, steps=1200, seed=42)
    a = sample_model(_beta_model(), [0.0], cfg).draws
    b = sample_model(_beta_model(), [0.0], cfg).draws
    assert a.tobytes() == b.tobytes()
    c = sample_model(_beta_model(), [0.0], cfg.replace(seed=43)).draws
    assert a.tobytes() != c.tobytes()


def test_exact_sampler_is_used():
    res = sample_model(MultinomialModel(2), [0.0, 0.0], ChainConfig(n_chains=2, burn_in=0, steps=500))
    assert res.exact
    assert res.draws.shape == (1000,)


def test_reference_mean_at_zero_theta():
    res = sample_model(_beta_model(), [0.0], ChainConfig(seed=1))
    x = res.draws[:, 0]
    se = batch_means_se(x)
    assert abs(x.mean() - 0.5) < 4 * se
    assert np.all((res.draws > 0) & (res.draws < 1))
    assert np.all(np.abs(res.acceptance - 0.44) < 0.1)


def test_tilted_beta_distribution():
    # theta * x on Beta(2,2) has no closed form; compare with the normalised density
    theta = 1.5
    cfg = ChainConfig(n_chains=4, burn_in=2000, steps=27000, seed=7)
    x = sample_model(_beta_model(), [theta], cfg).draws[:, 0]
    assert x.size == 100_000
    grid = np.linspace(0, 1, 20001)
    dens = stats.beta(2, 2).pdf(grid) * np.exp(theta * grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    ks = stats.kstest(x, lambda q: np.interp(q, grid, cdf)).statistic
    assert ks < 0.02


def test_categorical_columns_stay_on_support():
    ref = ProductReference([("beta", 2.0, 2.0), ("categorical", [1.0, 2.0, 3.0], [0.2, 0.5, 0.3])],
                           ["x", "q"])
    model = GenericModel([(0, 1)], ref)
    draws = sample_model(model, [0.4], ChainConfig(n_chains=1, burn_in=100, steps=2100)).draws
    assert set(np.unique(draws[:, 1])) <= {1.0, 2.0, 3.0}


def test_no_reference():
    class Bare:
        p = 1
    with pytest.raises(NoReference):
        sample_model(Bare(), [0.0], ChainConfig())


@pytest.mark.parametrize("kw", [dict(n_chains=0), dict(steps=10, burn_in=10), dict(thin=0),
                                dict(proposal_scale=(0.0,))])
def test_chain_config_validation(kw):
    with pytest.raises(ValueError):
        ChainConfig(**kw)


def test_batch_means_matches_iid_se():
    x = np.random.default_rng(0).normal(size=(100_000, 1))
    assert batch_means_se(x)[0] == pytest.approx(1 / np.sqrt(1e5), rel=0.5)
