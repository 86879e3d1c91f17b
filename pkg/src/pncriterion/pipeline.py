"""End-to-end p-n criterion: data, MLE, model-side and data-side moments, decision."""
from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, DataError, DimensionMismatch, EmptyData
from .expfam import (
    ExpFamilyModel,
    Sampled,
    build_generic_model,
    correlation_filter,
    reference_columns,
)
from .general import GeneralModel
from .mle import solve_mle
from .moments import empirical_xi_cumulants, full_moment_tensors, model_side_moments
from .risk import (
    RiskReport,
    first_order_expfam,
    first_order_general,
    second_order_expfam,
    second_order_general_theorem1,
)
from .threshold import threshold_for_alpha


def fit_expfam(model, data, method="analytic"):
    """``(xi values, MleSolution)`` for an exponential family."""
    xi = model.xi(data)
    if xi.shape[0] == 0:
        raise EmptyData("no observations")
    if xi.shape[1] != model.p:
        raise DimensionMismatch(f"xi has {xi.shape[1]} columns, model dimension is {model.p}")
    mle_method = method if isinstance(method, Sampled) else "auto"
    return xi, solve_mle(model, xi.mean(axis=0), method=mle_method)


def run_criterion(model, data, alpha=0.05, order="second", threshold_mode="approximate",
                  method="analytic", n=None, ridge=0.0):
    """Risk estimate and decision for ``model`` fitted to ``data``.

    Exponential families use the cumulant form; other models use the
    general sandwich form and, for ``order="second"``, the full bracket.
    ``method`` is ``"analytic"`` or :class:`Sampled` for the model side.
    ``n`` overrides the sample size used in the expansion (planning).
    ``ridge`` adds ``ridge * I`` to the model Fisher metric before solving.
    """
    spec = threshold_for_alpha(alpha, threshold_mode)
    if isinstance(model, ExpFamilyModel):
        if not model.has_psi and not isinstance(method, Sampled):
            method = Sampled(100_000, 0)
        xi, sol = fit_expfam(model, data, method)
        n_eff = xi.shape[0] if n is None else n
        side = model_side_moments(model, sol.theta_hat, method)
        cum = empirical_xi_cumulants(xi)
        psi_dd = side.Gstar + ridge * np.eye(model.p)
        first = first_order_expfam(cum.Sigma_hat, psi_dd, n_eff)
        second = 0.0
        subterms = {}
        if order == "second":
            second = second_order_expfam(cum.Sigma_hat, psi_dd, cum.kappa3_hat,
                                         side.kappa3_star, side.kappa4_star, n_eff)
        prov = {"Sigma_hat": cum.source["Sigma_hat"], "kappa3_hat": cum.source["kappa3_hat"],
                **side.source, "mle": sol.path}
        extras = {"theta_hat": sol.theta_hat.tolist(), "mle": sol.to_dict()}
        return RiskReport(first, second, n_eff, model.p, spec, "ExpFamCorollary", subterms, prov, extras)

    if not isinstance(model, GeneralModel):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    data = np.asarray(data, dtype=float)
    if data.shape[0] == 0:
        raise EmptyData("no observations")
    theta_hat = model.fit(data)
    n_eff = data.shape[0] if n is None else n
    mt = full_moment_tensors(model, data, theta_hat, method)
    if ridge:
        mt.Gstar = mt.Gstar + ridge * np.eye(model.p)
    first = first_order_general(mt.G, mt.Gtilde, mt.Gstar, n_eff)
    second, subterms, name = 0.0, {}, "GeneralFirstOrder"
    if order == "second":
        second, subterms = second_order_general_theorem1(mt, n_eff, return_terms=True)
        name = "GeneralTheorem1"
    extras = {"theta_hat": np.asarray(theta_hat).tolist()}
    return RiskReport(first, second, n_eff, model.p, spec, name, subterms, dict(mt.source), extras)


def split_halves(n, seed, fraction=0.5):
    """Random ``(build, estimate)`` index split; ``fraction`` goes to the build half."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def prepare_generic(data, names, basis_spec, reference_spec, seed, fraction=0.5,
                    rescale=None, chain=None):
    """Build a :class:`GenericModel` on one random half and return the other.

    ``rescale="twice_max"`` divides each pairwise (continuous) column of both
    halves by twice its maximum over the build half.  Returns
    ``(model, estimation rows in reference column order, info)``.
    """
    data = np.asarray(data, dtype=float)
    if data.shape[0] < 4:
        raise EmptyData("too few rows to split")
    build, est = split_halves(data.shape[0], seed, fraction)
    data = data.copy()
    continuous = list(basis_spec.get("pairwise", []))
    index = {nm: j for j, nm in enumerate(names)}
    scales = {}
    if rescale == "twice_max":
        for c in continuous:
            top = data[build, index[c]].max()
            if top <= 0:
                raise DataError(f"column {c!r} has a non-positive maximum")
            data[:, index[c]] /= 2.0 * top
            scales[c] = float(2.0 * top)
    elif rescale is not None:
        raise ConfigError(f"unknown rescale rule {rescale!r}")
    full = build_generic_model({**basis_spec, "filter_cutoff": None}, reference_spec,
                               names, data[build])
    X_build = reference_columns(data[build], names, full.reference.names)
    model = full
    cutoff = basis_spec.get("filter_cutoff")
    dropped = []
    if cutoff is not None:
        keep = correlation_filter(full.xi(X_build), cutoff)
        dropped = [i + 1 for i in range(full.p) if i not in keep]
        model = full.subset(keep)
    if chain is not None:
        model.chain = chain
    info = {"n_build": int(build.size), "n_estimate": int(est.size), "p_full": full.p,
            "p": model.p, "dropped_terms": dropped, "scales": scales}
    return model, reference_columns(data[est], names, model.reference.names), info
