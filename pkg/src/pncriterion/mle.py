"""Maximum-likelihood natural parameters: solve ``eta(theta) = xi_bar``.

Newton's method on the convex log-partition with the Hessian of ``Psi`` as
Jacobian.  When ``Psi`` is not available both ``eta`` and the Hessian are
replaced by the mean and covariance of ``xi`` over model draws.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import MaxIterExceeded, NotPositiveDefinite, SingularMatrix, ZeroCell
from .expfam import MultinomialModel, QuadraticModel, Sampled
from .linalg import sym_solve
from .mcmc import batch_means_se

ANALYTIC_TOL = 1e-10
SAMPLED_TOL = 1e-3


@dataclass
class MleSolution:
    theta_hat: np.ndarray
    eta_hat: np.ndarray
    iterations: int
    residual: float
    path: str
    theta_se: np.ndarray | None = None
    n_draws: int | None = None
    seed: int | None = None
    history: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "path": self.path,
            "iterations": self.iterations,
            "residual": float(self.residual),
            "theta_hat": self.theta_hat.tolist(),
        }
        if self.n_draws is not None:
            out.update(n_draws=self.n_draws, seed=self.seed, theta_se=self.theta_se.tolist())
        return out


def _solve_jacobian(H, r):
    try:
        return sym_solve(H, r, "Psi hessian")
    except NotPositiveDefinite as exc:
        raise SingularMatrix(str(exc)) from None


def closed_form_mle(model, eta_hat):
    eta_hat = np.asarray(eta_hat, dtype=float)
    if isinstance(model, MultinomialModel):
        m0 = 1.0 - eta_hat.sum()
        if np.any(eta_hat <= 0.0) or m0 <= 0.0:
            raise ZeroCell("every cell needs a positive relative frequency for the MLE to exist")
        theta = np.log(eta_hat / m0)
    elif isinstance(model, QuadraticModel):
        theta = _solve_jacobian(model.Q, eta_hat - model.m)
    else:
        raise TypeError(f"no closed form for {type(model).__name__}")
    resid = float(np.max(np.abs(model.eta(theta) - eta_hat), initial=0.0))
    return MleSolution(theta, eta_hat, 0, resid, "ClosedForm")


def solve_mle(model, eta_hat, tol=None, max_iter=100, damping=True, method="auto", theta0=None):
    """Natural-parameter MLE for the sample mean ``eta_hat`` of ``xi``.

    ``method`` is ``"auto"`` (closed form when one exists, Newton otherwise),
    ``"closed_form"``, ``"newton"`` or a :class:`Sampled` request.
    """
    eta_hat = model._check_theta(eta_hat)
    if isinstance(model, MultinomialModel):
        m0 = 1.0 - eta_hat.sum()
        if np.any(eta_hat <= 0.0) or m0 <= 0.0:
            raise ZeroCell("every cell needs a positive relative frequency for the MLE to exist")
    if isinstance(method, Sampled):
        return _sampled_newton(model, eta_hat, tol or SAMPLED_TOL, max_iter, damping, method, theta0)
    if method == "closed_form" or (
        method == "auto" and isinstance(model, (MultinomialModel, QuadraticModel))
    ):
        return closed_form_mle(model, eta_hat)
    if not model.has_psi:
        raise TypeError(f"{type(model).__name__} needs method=Sampled(N, seed)")
    return _analytic_newton(model, eta_hat, tol or ANALYTIC_TOL, max_iter, damping, theta0)


def _analytic_newton(model, eta_hat, tol, max_iter, damping, theta0):
    theta = np.zeros(model.p) if theta0 is None else np.asarray(theta0, float).copy()
    eta, H = model.psi_derivatives(theta, order=2)
    r = eta - eta_hat
    res = float(np.max(np.abs(r)))
    history = [res]
    for it in range(1, max_iter + 1):
        if res <= tol:
            return MleSolution(theta, eta_hat, it - 1, res, "AnalyticNewton", history=history)
        step = _solve_jacobian(H, r)
        lam = 1.0
        while True:
            cand = theta - lam * step
            eta_c, H_c = model.psi_derivatives(cand, order=2)
            r_c = eta_c - eta_hat
            res_c = float(np.max(np.abs(r_c)))
            if not damping or res_c < res or lam < 1e-12:
                break
            lam *= 0.5
        theta, H, r, res = cand, H_c, r_c, res_c
        history.append(res)
    if res <= tol:
        return MleSolution(theta, eta_hat, max_iter, res, "AnalyticNewton", history=history)
    raise MaxIterExceeded(f"Newton did not reach residual {tol} in {max_iter} iterations (last {res:.3e})")


def _moments_from_draws(model, theta, sampled, it):
    rng = np.random.default_rng(np.random.SeedSequence([int(sampled.seed), it]))
    xi = model.xi(model.sample(theta, sampled.n_draws, rng))
    eta = xi.mean(axis=0)
    D = xi - eta
    H = D.T @ D / xi.shape[0]
    se = batch_means_se(xi) if not model.has_exact_sampler else xi.std(axis=0) / np.sqrt(xi.shape[0])
    return xi, eta, 0.5 * (H + H.T), se


def _sampled_newton(model, eta_hat, tol, max_iter, damping, sampled, theta0):
    theta = np.zeros(model.p) if theta0 is None else np.asarray(theta0, float).copy()
    history = []
    for it in range(1, max_iter + 1):
        xi, eta, H, se = _moments_from_draws(model, theta, sampled, it)
        r = eta - eta_hat
        res = float(np.max(np.abs(r)))
        history.append(res)
        step = _solve_jacobian(H, r)
        lam = 1.0
        if damping:
            # importance-reweight the current draws to judge trial points
            while lam > 1e-6:
                logw = xi @ (-lam * step)
                w = np.exp(logw - special.logsumexp(logw))
                ess = 1.0 / np.sum(w * w)
                res_c = float(np.max(np.abs(w @ xi - eta_hat)))
                if ess > 0.1 * xi.shape[0] and res_c < res:
                    break
                lam *= 0.5
        theta = theta - lam * step
        converged = np.all(np.abs(r) <= np.maximum(tol, 2.0 * se))
        if converged:
            Hinv = _solve_jacobian(H, np.eye(model.p))
            cov_eta = np.diag(se ** 2)
            theta_se = np.sqrt(np.diag(Hinv @ cov_eta @ Hinv))
            return MleSolution(theta, eta_hat, it, res, "SampledNewton", theta_se,
                               sampled.n_draws, sampled.seed, history)
    raise MaxIterExceeded(f"sampled Newton did not settle within {max_iter} iterations (last {res:.3e})")
