"""General parametric models described by per-observation log-density derivatives.

A :class:`GeneralModel` supplies ``log g(x; theta)`` and, ideally, its first
four partial derivatives in ``theta`` at every data row.  Models that only
implement :meth:`GeneralModel.log_density` fall back on nested central
differences.  Exponential-family models are wrapped by :class:`ExpFamilyAdapter`
so both kinds flow through the same moment estimators.
"""
from __future__ import annotations

import itertools

import numpy as np

from .exceptions import DimensionMismatch, PsiUnavailable, SamplerUnavailable
from .linalg import check_finite

EPS = np.finfo(float).eps


class GeneralModel:
    """Base class: override :meth:`log_density` and optionally :meth:`derivatives`."""

    p: int = 0
    has_sampler = False

    def log_density(self, data, theta):
        raise NotImplementedError

    def derivatives(self, data, theta, order=4):
        """``[d1 (n,p), d2 (n,p,p), d3 (n,p,p,p), d4 (n,p,p,p,p)]`` up to ``order``."""
        return finite_difference_derivatives(self.log_density, data, theta, order)

    def sample(self, theta, data, rng):
        """Draw a dataset from the model, conditioning on covariates in ``data`` if any."""
        raise SamplerUnavailable(f"{type(self).__name__} has no sampler")

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.p:
            raise DimensionMismatch(f"theta has length {theta.size}, model dimension is {self.p}")
        return theta


def _fd_steps(theta, order):
    return EPS ** (1.0 / (order + 1)) * np.maximum(1.0, np.abs(theta))


def finite_difference_derivatives(log_density, data, theta, order=4):
    """Nested central differences of ``log_density(data, theta)`` (one value per row).

    Order ``k`` uses steps ``eps**(1/(k+1)) * max(1, |theta_i|)``; each unique
    multi-index is evaluated once and the result symmetrised.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    p = theta.size
    n = np.asarray(log_density(data, theta)).shape[0]
    out = []
    for k in range(1, order + 1):
        h = _fd_steps(theta, k)
        T = np.zeros((n,) + (p,) * k)
        for idx in itertools.combinations_with_replacement(range(p), k):
            acc = np.zeros(n)
            for signs in itertools.product((1.0, -1.0), repeat=k):
                shift = np.zeros(p)
                for s, a in zip(signs, idx):
                    shift[a] += s * h[a]
                acc += np.prod(signs) * log_density(data, theta + shift)
            val = acc / np.prod([2.0 * h[a] for a in idx])
            for perm in set(itertools.permutations(idx)):
                T[(slice(None),) + perm] = val
        out.append(T)
    return out


class ExpFamilyAdapter(GeneralModel):
    """Log-density derivatives of an exponential family with analytic ``Psi``.

    Score ``xi - eta``; higher derivatives are minus the cumulants and do not
    depend on ``x``.
    """

    def __init__(self, model):
        if not model.has_psi:
            raise PsiUnavailable(f"{type(model).__name__} has no analytic Psi derivatives")
        self.model = model
        self.p = model.p
        self.has_sampler = model.has_exact_sampler

    def log_density(self, data, theta):
        return self.model.log_density(data, theta)

    def derivatives(self, data, theta, order=4):
        theta = self.model._check_theta(theta)
        xi = self.model.xi(data)
        n = xi.shape[0]
        cums = self.model.psi_derivatives(theta, order=max(order, 1))
        out = [xi - cums[0]]
        for k in range(1, order):
            out.append(np.broadcast_to(-cums[k], (n,) + cums[k].shape))
        return out[:order]

    def sample(self, theta, data, rng):
        n = len(np.asarray(data))
        return self.model.sample(theta, n, rng)


class NormalRegressionModel(GeneralModel):
    """``Y | X ~ N(X beta, 1 / theta_0)`` with ``theta = (theta_0, beta)``.

    ``data`` is an ``(n, q + 1)`` array with ``y`` in the first column.
    """

    has_sampler = True

    def __init__(self, q):
        self.q = int(q)
        self.p = self.q + 1

    @staticmethod
    def split(data):
        data = np.asarray(data, dtype=float)
        return data[:, 0], data[:, 1:]

    def log_density(self, data, theta):
        theta = self._check_theta(theta)
        y, X = self.split(data)
        r = y - X @ theta[1:]
        return 0.5 * np.log(theta[0] / (2.0 * np.pi)) - 0.5 * theta[0] * r * r

    def derivatives(self, data, theta, order=4):
        theta = self._check_theta(theta)
        y, X = self.split(data)
        t0 = theta[0]
        r = y - X @ theta[1:]
        n, p = X.shape[0], self.p
        d1 = np.empty((n, p))
        d1[:, 0] = -0.5 * r * r + 0.5 / t0
        d1[:, 1:] = t0 * r[:, None] * X
        out = [d1]
        if order >= 2:
            d2 = np.zeros((n, p, p))
            d2[:, 0, 0] = -0.5 / t0 ** 2
            d2[:, 0, 1:] = r[:, None] * X
            d2[:, 1:, 0] = r[:, None] * X
            d2[:, 1:, 1:] = -t0 * X[:, :, None] * X[:, None, :]
            out.append(d2)
        if order >= 3:
            d3 = np.zeros((n, p, p, p))
            d3[:, 0, 0, 0] = 1.0 / t0 ** 3
            xx = -X[:, :, None] * X[:, None, :]
            d3[:, 0, 1:, 1:] = xx
            d3[:, 1:, 0, 1:] = xx
            d3[:, 1:, 1:, 0] = xx
            out.append(d3)
        if order >= 4:
            d4 = np.zeros((n, p, p, p, p))
            d4[:, 0, 0, 0, 0] = -3.0 / t0 ** 4
            out.append(d4)
        return out[:order]

    def model_moments(self, theta, data, weights=None):
        """Exact ``G*``, ``tau3``, ``tau4`` with covariates fixed at ``data``."""
        theta = self._check_theta(theta)
        _, X = self.split(data)
        t0, p = theta[0], self.p
        w = np.full(X.shape[0], 1.0 / X.shape[0]) if weights is None else np.asarray(weights, float)
        S = (X * w[:, None]).T @ X
        Gs = np.zeros((p, p))
        Gs[0, 0] = 0.5 / t0 ** 2
        Gs[1:, 1:] = t0 * S
        t3 = np.zeros((p, p, p))
        t3[0, 0, 0] = 1.0 / t0 ** 3
        t3[0, 1:, 1:] = t3[1:, 0, 1:] = t3[1:, 1:, 0] = -S
        t4 = np.zeros((p,) * 4)
        t4[0, 0, 0, 0] = -3.0 / t0 ** 4
        return Gs, t3, t4

    def sample(self, theta, data, rng):
        theta = self._check_theta(theta)
        _, X = self.split(data)
        y = X @ theta[1:] + rng.standard_normal(X.shape[0]) / np.sqrt(theta[0])
        return np.column_stack([y, X])

    def fit(self, data):
        """Least squares plus residual precision (divide by ``n``)."""
        y, X = self.split(data)
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ beta
        return np.concatenate([[1.0 / np.mean(r * r)], beta])


class PoissonRegressionModel(GeneralModel):
    """``Y | X ~ Poisson(exp(X theta))``; ``data`` has ``y`` in the first column."""

    has_sampler = True

    def __init__(self, p):
        self.p = int(p)

    @staticmethod
    def split(data):
        data = np.asarray(data, dtype=float)
        return data[:, 0], data[:, 1:]

    def log_density(self, data, theta):
        from scipy.special import gammaln

        theta = self._check_theta(theta)
        y, X = self.split(data)
        eta = X @ theta
        return y * eta - np.exp(eta) - gammaln(y + 1.0)

    def derivatives(self, data, theta, order=4):
        theta = self._check_theta(theta)
        y, X = self.split(data)
        lam = np.exp(X @ theta)
        out = [(y - lam)[:, None] * X]
        outer = X
        for k in range(2, order + 1):
            outer = outer[..., None] * X.reshape((X.shape[0],) + (1,) * (k - 1) + (self.p,))
            out.append(-lam.reshape((-1,) + (1,) * k) * outer)
        return out[:order]

    def model_moments(self, theta, data, weights=None):
        # every derivative past the first is free of y
        _, d2, d3, d4 = self.derivatives(data, theta, 4)
        n = d2.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float)
        return (-np.tensordot(w, d2, axes=1), np.tensordot(w, d3, axes=1),
                np.tensordot(w, d4, axes=1))

    def sample(self, theta, data, rng):
        theta = self._check_theta(theta)
        _, X = self.split(data)
        return np.column_stack([rng.poisson(np.exp(X @ theta)), X])

    def fit(self, data, tol=1e-10, max_iter=100):
        """Damped Newton on the concave log-likelihood."""
        from .exceptions import MaxIterExceeded
        from .linalg import sym_solve

        y, X = self.split(data)
        theta = np.zeros(self.p)
        ll = np.sum(y * (X @ theta) - np.exp(X @ theta))
        for _ in range(max_iter):
            lam = np.exp(X @ theta)
            grad = X.T @ (y - lam)
            if np.max(np.abs(grad)) <= tol * max(1.0, len(y)):
                return theta
            step = sym_solve((X * lam[:, None]).T @ X, grad, "Poisson information")
            t = 1.0
            while t > 1e-12:
                cand = theta + t * step
                ll_c = np.sum(y * (X @ cand) - np.exp(X @ cand))
                if ll_c >= ll:
                    break
                t *= 0.5
            theta, ll = cand, ll_c
        raise MaxIterExceeded("Poisson regression Newton did not converge")


def checked_derivatives(model, data, theta, order):
    """Derivatives with the finiteness check applied row-wise."""
    derivs = model.derivatives(data, theta, order)
    for k, d in enumerate(derivs, start=1):
        check_finite(d, f"order-{k} log-density derivative")
    return derivs
