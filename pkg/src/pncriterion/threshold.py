"""From a Bayes-error standard ``Er >= 1/2 - alpha`` to a divergence threshold ``C``.

Writing ``d = 1 - 2t``, the curve defining the lower bound reads
``KL(Bern(x) | Bern(x + d)) = delta`` with ``0 < x < 1 - d``.  The bound is
``(1 - d_max) / 2`` where ``d_max`` is the largest ``d`` reachable over ``x``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from decimal import Decimal

import numpy as np
from scipy import optimize

from .exceptions import AlphaOutOfRange, DeltaNegative, NNotPositive
from .expfam import MultinomialModel

log = logging.getLogger(__name__)

MARGIN = 1e-12
GRID = 1024


@dataclass(frozen=True)
class ThresholdSpec:
    alpha: float
    C: float
    mode: str
    min_t: float

    def to_dict(self):
        return {"alpha": self.alpha, "C": self.C, "mode": self.mode, "min_t": self.min_t}


def _bern_kl(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return x * np.log(x / y) + (1.0 - x) * np.log((1.0 - x) / (1.0 - y))


def _x_grid(n=GRID):
    half = np.geomspace(1e-9, 0.5, n // 2, endpoint=False)
    return np.concatenate([half, 1.0 - half[::-1]])


def _d_reach(x, delta, iters=200):
    """Largest ``d`` with ``KL(x | x + d) <= delta``, vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    lo = np.zeros_like(x)
    hi = 1.0 - x - MARGIN * np.maximum(1.0, 1.0 - x)
    hi = np.maximum(hi, 0.0)
    at_edge = _bern_kl(x, x + hi) <= delta
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        ok = _bern_kl(x, x + mid) <= delta
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
        if np.all(hi - lo <= 1e-16):
            break
    return np.where(at_edge, 1.0 - x - MARGIN * np.maximum(1.0, 1.0 - x), lo)


def min_bayes_error_bound(delta):
    """Minimum of ``t`` over the curve for divergence ``delta``; ``1/2`` at 0."""
    delta = float(delta)
    if delta < 0.0:
        raise DeltaNegative(f"delta must be non-negative, got {delta}")
    if delta == 0.0:
        return 0.5
    xs = _x_grid()
    d = _d_reach(xs, delta)
    k = int(np.argmax(d))
    interior = (d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:])
    if np.count_nonzero(interior) > 1:
        log.warning("Bayes-error profile has %d local optima at delta=%g", np.count_nonzero(interior), delta)
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    best = d[k]
    if hi > lo:
        res = optimize.minimize_scalar(
            lambda x: -_d_reach(np.array([x]), delta)[0],
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-12},
        )
        best = max(best, -res.fun)
    return float(0.5 * (1.0 - best))


def approximate_min_t(delta):
    """Small-divergence approximation ``1/2 - sqrt(delta / 8)``."""
    if delta < 0:
        raise DeltaNegative(f"delta must be non-negative, got {delta}")
    return 0.5 - np.sqrt(delta / 8.0)


def threshold_for_alpha(alpha, mode="approximate"):
    """Divergence threshold ``C`` for the standard ``Er >= 1/2 - alpha``.

    ``approximate``: ``C = 8 alpha^2``.  ``exact``: the ``delta`` whose bound
    equals ``1/2 - alpha``.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 0.5:
        raise AlphaOutOfRange(f"alpha must lie in (0, 0.5), got {alpha}")
    mode = str(mode).lower()
    if mode == "approximate":
        # decimal arithmetic so that e.g. alpha = 0.05 gives the double nearest 0.02
        C = float(8 * Decimal(repr(alpha)) ** 2)
        return ThresholdSpec(alpha, C, "Approximate", min_bayes_error_bound(C))
    if mode != "exact":
        raise ValueError(f"unknown threshold mode {mode!r}")
    target = 0.5 - alpha
    upper = 8.0 * alpha * alpha
    while min_bayes_error_bound(upper) > target:
        upper *= 2.0
    C = optimize.brentq(lambda dl: min_bayes_error_bound(dl) - target, 0.0, upper,
                        xtol=1e-15, rtol=1e-14)
    return ThresholdSpec(alpha, float(C), "Exact", min_bayes_error_bound(C))


@dataclass(frozen=True)
class BayesErrorEstimate:
    value: float
    std_error: float
    n_draws: int
    seed: int


def bayes_error_between_members(model, theta1, theta2, N, seed):
    """Monte-Carlo ``1/2 E_theta1[min(1, g2 / g1)]`` with its standard error.

    Without an analytic ``Psi`` the log-partition difference is estimated as
    ``log mean exp((theta2 - theta1) . xi)`` over the same draws.
    """
    from .mcmc import batch_means_se

    if N < 2:
        raise NNotPositive("need at least two draws")
    theta1 = model._check_theta(theta1)
    theta2 = model._check_theta(theta2)
    rng = np.random.default_rng(seed)
    xi = model.xi(model.sample(theta1, N, rng))
    proj = xi @ (theta2 - theta1)
    if model.has_psi:
        dpsi = model.psi(theta2) - model.psi(theta1)
    else:
        from scipy.special import logsumexp

        dpsi = float(logsumexp(proj) - np.log(N))
    vals = 0.5 * np.minimum(1.0, np.exp(proj - dpsi))
    if model.has_exact_sampler:
        se = vals.std(ddof=1) / np.sqrt(N)
    else:
        se = float(batch_means_se(vals[:, None])[0])
    return BayesErrorEstimate(float(vals.mean()), float(se), int(N), int(seed))


def exact_bayes_error_multinomial(model: MultinomialModel, theta1, theta2):
    """``1/2 sum_c min(m1_c, m2_c)``."""
    return float(0.5 * np.minimum(model.probabilities(theta1), model.probabilities(theta2)).sum())
