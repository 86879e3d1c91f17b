"""Exponential-family models ``g(x; theta) = exp(theta . xi(x) - Psi(theta))`` w.r.t. ``dmu``.

Three concrete families are provided:

* :class:`MultinomialModel` -- a categorical variable on ``p + 1`` cells with
  natural parameters ``theta_i = log(m_i / m_0)``.
* :class:`QuadraticModel` -- ``Psi(theta) = m . theta + theta Q theta / 2``, i.e.
  ``xi ~ N(m + Q theta, Q)``; every cumulant above the second vanishes.
* :class:`GenericModel` -- product-of-columns basis over a product reference
  measure (independent Betas and categoricals).  ``Psi`` is unknown and every
  model-side quantity is estimated from Metropolis draws.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import special, stats

from .exceptions import (
    BetaMomentMatchInfeasible,
    DimensionMismatch,
    EmptyBasis,
    MissingColumn,
    NoReference,
    PsiUnavailable,
    SamplerUnavailable,
)
from .linalg import symmetrize


@dataclass(frozen=True)
class Sampled:
    """Request a Monte-Carlo estimate from ``n_draws`` model draws."""

    n_draws: int
    seed: int = 0


@dataclass(frozen=True)
class DualCoordinates:
    eta: np.ndarray
    eta_hat: np.ndarray | None = None


def categorical_cumulants(probs, order=4):
    """Cumulants up to ``order`` of the indicator vector ``xi = e_x[1:]``.

    ``probs`` holds all ``p + 1`` cell probabilities, cell 0 first.  Returns a
    list ``[mean, k2, k3, k4][:order]``.
    """
    probs = np.asarray(probs, dtype=float)
    p = probs.size - 1
    E = np.vstack([np.zeros(p), np.eye(p)])
    mean = probs[1:].copy()
    D = E - mean
    k2 = (D * probs[:, None]).T @ D
    out = [mean, k2]
    if order >= 3:
        out.append(np.einsum("c,ci,cj,ck->ijk", probs, D, D, D, optimize=True))
    if order >= 4:
        out.append(fourth_cumulant(D, probs, k2))
    return out[:order]


def fourth_cumulant(D, weights, cov=None):
    """Weighted fourth cumulant of centred rows ``D`` (weights sum to one).

    The fourth central moment is formed as one ``p^2 x p^2`` Gram product so
    the cost stays BLAS-bound.
    """
    n, p = D.shape
    if cov is None:
        cov = (D * weights[:, None]).T @ D
    DD = (D[:, :, None] * D[:, None, :]).reshape(n, p * p)
    m4 = ((DD * weights[:, None]).T @ DD).reshape(p, p, p, p)
    pairings = (
        np.einsum("ij,kl->ijkl", cov, cov)
        + np.einsum("ik,jl->ijkl", cov, cov)
        + np.einsum("il,jk->ijkl", cov, cov)
    )
    return symmetrize(m4 - pairings)


def sample_cumulants(xi_draws, weights=None, order=4):
    """Mean, covariance, third and fourth cumulants of the rows of ``xi_draws``.

    Moments divide by ``N`` (plug-in), not ``N - 1``.
    """
    X = np.asarray(xi_draws, dtype=float)
    N = X.shape[0]
    w = np.full(N, 1.0 / N) if weights is None else np.asarray(weights, dtype=float)
    mean = w @ X
    D = X - mean
    cov = (D * w[:, None]).T @ D
    out = [mean, 0.5 * (cov + cov.T)]
    if order >= 3:
        out.append(symmetrize(np.einsum("n,ni,nj,nk->ijk", w, D, D, D, optimize=True)))
    if order >= 4:
        out.append(fourth_cumulant(D, w, cov))
    return out[:order]


class ExpFamilyModel:
    """Base class.  Subclasses define ``xi`` and, when available, ``Psi``."""

    kind = "generic"
    has_psi = False
    has_exact_sampler = False

    def __init__(self, p):
        self.p = int(p)

    # -- statistics ----------------------------------------------------------
    def xi(self, X):
        raise NotImplementedError

    def xi_bar(self, X):
        return self.xi(X).mean(axis=0)

    # -- cumulant generating function -------------------------------------
    def psi(self, theta):
        raise PsiUnavailable(f"{type(self).__name__} has no closed-form Psi")

    def psi_derivatives(self, theta, order=2):
        """``[eta, Psi'', Psi''', Psi'''']`` truncated to ``order`` entries."""
        raise PsiUnavailable(f"{type(self).__name__} has no closed-form Psi")

    def eta(self, theta):
        return self.psi_derivatives(theta, order=1)[0]

    # -- sampling ---------------------------------------------------------
    def sample(self, theta, size, rng):
        raise SamplerUnavailable(f"{type(self).__name__} has no sampler")

    def log_reference(self, X):
        """Log density of ``dmu`` w.r.t. its base (Lebesgue/counting) measure."""
        return np.zeros(len(X))

    def log_density(self, X, theta, psi=None):
        """``log g(x; theta)`` relative to ``dmu``."""
        theta = self._check_theta(theta)
        if psi is None:
            psi = self.psi(theta)
        return self.xi(X) @ theta - psi

    def _check_theta(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.p:
            raise DimensionMismatch(f"theta has length {theta.size}, model dimension is {self.p}")
        return theta

    def describe(self):
        return {"kind": self.kind, "p": self.p}


class MultinomialModel(ExpFamilyModel):
    """Categorical variable on cells ``0..p``; cell 0 is the baseline."""

    kind = "multinomial"
    has_psi = True
    has_exact_sampler = True

    def xi(self, X):
        labels = np.asarray(X).reshape(-1).astype(int)
        if labels.size and (labels.min() < 0 or labels.max() > self.p):
            raise DimensionMismatch(f"cell labels must lie in 0..{self.p}")
        out = np.zeros((labels.size, self.p))
        hit = labels > 0
        out[np.nonzero(hit)[0], labels[hit] - 1] = 1.0
        return out

    def probabilities(self, theta):
        theta = self._check_theta(theta)
        z = np.concatenate([[0.0], theta])
        return special.softmax(z)

    @staticmethod
    def theta_from_probabilities(probs):
        probs = np.asarray(probs, dtype=float)
        return np.log(probs[1:] / probs[0])

    def psi(self, theta):
        theta = self._check_theta(theta)
        return float(special.logsumexp(np.concatenate([[0.0], theta])))

    def psi_derivatives(self, theta, order=2):
        return categorical_cumulants(self.probabilities(theta), order)

    def sample(self, theta, size, rng):
        return rng.choice(self.p + 1, size=size, p=self.probabilities(theta))

    def describe(self):
        return {"kind": self.kind, "p": self.p}


class QuadraticModel(ExpFamilyModel):
    """``xi(x) = x`` over the Gaussian reference ``N(m, Q)``."""

    kind = "quadratic"
    has_psi = True
    has_exact_sampler = True

    def __init__(self, m, Q):
        m = np.asarray(m, dtype=float).reshape(-1)
        Q = np.asarray(Q, dtype=float)
        if Q.shape != (m.size, m.size):
            raise DimensionMismatch(f"Q has shape {Q.shape}, expected {(m.size, m.size)}")
        super().__init__(m.size)
        self.m = m
        self.Q = 0.5 * (Q + Q.T)
        self._chol = np.linalg.cholesky(self.Q)

    def xi(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.p == 1 else X.reshape(1, -1)
        if X.shape[1] != self.p:
            raise DimensionMismatch(f"expected {self.p} columns, got {X.shape[1]}")
        return X

    def psi(self, theta):
        theta = self._check_theta(theta)
        return float(self.m @ theta + 0.5 * theta @ self.Q @ theta)

    def psi_derivatives(self, theta, order=2):
        theta = self._check_theta(theta)
        p = self.p
        out = [self.m + self.Q @ theta, self.Q.copy(), np.zeros((p,) * 3), np.zeros((p,) * 4)]
        return out[:order]

    def sample(self, theta, size, rng):
        mean = self.eta(theta)
        return mean + rng.standard_normal((size, self.p)) @ self._chol.T

    def log_reference(self, X):
        return stats.multivariate_normal(self.m, self.Q).logpdf(self.xi(X)).reshape(-1)

    def describe(self):
        return {"kind": self.kind, "p": self.p, "m": self.m.tolist(), "Q": self.Q.tolist()}


class CategoricalModel(ExpFamilyModel):
    """Counting measure on cells ``0..K-1`` with ``xi(x) = design[x]``.

    The design must have full column rank after centring; a
    :class:`MultinomialModel` is the special case ``design = [0; I]``.
    """

    kind = "categorical"
    has_psi = True
    has_exact_sampler = True

    def __init__(self, design):
        design = np.atleast_2d(np.asarray(design, dtype=float))
        super().__init__(design.shape[1])
        self.design = design
        self.K = design.shape[0]

    def xi(self, X):
        labels = np.asarray(X).reshape(-1).astype(int)
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise DimensionMismatch(f"cell labels must lie in 0..{self.K - 1}")
        return self.design[labels]

    def probabilities(self, theta):
        return special.softmax(self.design @ self._check_theta(theta))

    def psi(self, theta):
        return float(special.logsumexp(self.design @ self._check_theta(theta)))

    def psi_derivatives(self, theta, order=2):
        probs = self.probabilities(theta)
        mean = probs @ self.design
        D = self.design - mean
        k2 = (D * probs[:, None]).T @ D
        out = [mean, 0.5 * (k2 + k2.T)]
        if order >= 3:
            out.append(symmetrize(np.einsum("c,ci,cj,ck->ijk", probs, D, D, D, optimize=True)))
        if order >= 4:
            out.append(fourth_cumulant(D, probs, k2))
        return out[:order]

    def sample(self, theta, size, rng):
        return rng.choice(self.K, size=size, p=self.probabilities(theta))

    def describe(self):
        return {"kind": self.kind, "p": self.p, "design": self.design.tolist()}


# -- generic product-basis models --------------------------------------------

@dataclass
class ProductReference:
    """Independent per-column reference measure.

    Each column is either ``("beta", a, b)`` on ``(0, 1)`` or
    ``("categorical", values, probs)`` on a finite set of numeric codes.
    """

    columns: list = field(default_factory=list)
    names: list = field(default_factory=list)

    @property
    def d(self):
        return len(self.columns)

    def continuous_index(self):
        return [j for j, c in enumerate(self.columns) if c[0] == "beta"]

    def categorical_index(self):
        return [j for j, c in enumerate(self.columns) if c[0] == "categorical"]

    def sample(self, size, rng):
        out = np.empty((size, self.d))
        for j, col in enumerate(self.columns):
            if col[0] == "beta":
                out[:, j] = rng.beta(col[1], col[2], size=size)
            else:
                out[:, j] = rng.choice(np.asarray(col[1], float), size=size, p=np.asarray(col[2]))
        return out

    def logpdf(self, X):
        X = np.asarray(X, dtype=float)
        total = np.zeros(X.shape[0])
        for j, col in enumerate(self.columns):
            if col[0] == "beta":
                total += stats.beta(col[1], col[2]).logpdf(X[:, j])
            else:
                values = np.asarray(col[1], float)
                probs = np.asarray(col[2], float)
                idx = np.searchsorted(values, X[:, j])
                idx = np.clip(idx, 0, values.size - 1)
                ok = values[idx] == X[:, j]
                total += np.where(ok, np.log(probs[idx]), -np.inf)
        return total

    def to_dict(self):
        cols = []
        for name, col in zip(self.names, self.columns):
            if col[0] == "beta":
                cols.append({"name": name, "type": "beta", "a": col[1], "b": col[2]})
            else:
                cols.append({"name": name, "type": "categorical",
                             "values": list(map(float, col[1])), "probs": list(map(float, col[2]))})
        return cols


class GenericModel(ExpFamilyModel):
    """Monomial basis ``xi_i(x) = prod_{c in terms[i]} x_c`` over a product reference."""

    kind = "generic"
    has_psi = False
    has_exact_sampler = False

    def __init__(self, terms, reference, names=None, chain=None):
        terms = [tuple(int(c) for c in t) for t in terms]
        if not terms:
            raise EmptyBasis("a generic model needs at least one basis term")
        if reference is None:
            raise NoReference("a generic model needs a reference measure")
        super().__init__(len(terms))
        self.terms = terms
        self.reference = reference
        self.names = list(names) if names is not None else [
            "*".join(reference.names[c] if c < len(reference.names) else f"x{c}" for c in t)
            for t in terms
        ]
        self.chain = chain

    def term_array(self):
        width = max(len(t) for t in self.terms)
        arr = -np.ones((self.p, width), dtype=np.int64)
        for i, t in enumerate(self.terms):
            arr[i, : len(t)] = t
        return arr

    def xi(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[1] != self.reference.d:
            raise DimensionMismatch(f"expected {self.reference.d} columns, got {X.shape[1]}")
        out = np.ones((X.shape[0], self.p))
        for i, t in enumerate(self.terms):
            for c in t:
                out[:, i] *= X[:, c]
        return out

    def log_reference(self, X):
        return self.reference.logpdf(X)

    def sample(self, theta, size, rng, chain=None):
        from .mcmc import ChainConfig, sample_model

        base = chain or self.chain or ChainConfig()
        seed = int(rng.integers(0, 2**63 - 1))
        per_chain = -(-size // base.n_chains)
        cfg = base.replace(steps=base.burn_in + per_chain * base.thin, seed=seed)
        return sample_model(self, theta, cfg).draws[:size]

    def subset(self, keep):
        keep = list(keep)
        return GenericModel([self.terms[i] for i in keep], self.reference,
                            [self.names[i] for i in keep], self.chain)

    def describe(self):
        return {"kind": self.kind, "p": self.p, "terms": self.names,
                "reference": self.reference.to_dict()}


# -- dual coordinates and divergence -----------------------------------------

def eta_of_theta(model, theta, method="analytic"):
    """Dual coordinate ``eta(theta) = grad Psi(theta) = E_theta[xi]``."""
    theta = model._check_theta(theta)
    if isinstance(method, Sampled):
        draws = model.sample(theta, method.n_draws, np.random.default_rng(method.seed))
        return model.xi(draws).mean(axis=0)
    if not model.has_psi:
        raise PsiUnavailable(f"{type(model).__name__} needs a sampled eta")
    return model.eta(theta)


def kl_between_members(model, theta1, theta2, method="analytic"):
    """``D[g(.; theta1) | g(.; theta2)] = Psi(t2) - Psi(t1) - (t2 - t1) . eta(t1)``.

    Models without ``Psi`` need ``method=Sampled(N, seed)``; the log-partition
    difference is then ``log E_{t1} exp((t2 - t1) . xi)`` over draws at ``t1``.
    """
    theta1 = model._check_theta(theta1)
    theta2 = model._check_theta(theta2)
    if isinstance(model, MultinomialModel):
        m1 = model.probabilities(theta1)
        m2 = model.probabilities(theta2)
        return float(max(np.sum(m1 * (np.log(m1) - np.log(m2))), 0.0))
    delta = theta2 - theta1
    if isinstance(method, Sampled):
        draws = model.sample(theta1, method.n_draws, np.random.default_rng(method.seed))
        proj = model.xi(draws) @ delta
        return float(max(special.logsumexp(proj) - np.log(proj.size) - proj.mean(), 0.0))
    if not model.has_psi:
        raise PsiUnavailable(f"{type(model).__name__} needs a sampled divergence")
    d = model.psi(theta2) - model.psi(theta1) - delta @ model.eta(theta1)
    return float(max(d, 0.0))


# -- generic model construction ------------------------------------------------

def beta_moment_match(mean, var):
    """Beta ``(a, b)`` with the given mean and variance."""
    if not 0.0 < mean < 1.0:
        raise BetaMomentMatchInfeasible(f"mean {mean} is outside (0, 1)")
    if not 0.0 < var < mean * (1.0 - mean):
        raise BetaMomentMatchInfeasible(
            f"variance {var} incompatible with a Beta of mean {mean} (needs < {mean * (1 - mean)})"
        )
    nu = mean * (1.0 - mean) / var - 1.0
    return mean * nu, (1.0 - mean) * nu


def fit_reference(data, names, continuous, categorical=()):
    """Moment-matched Betas for ``continuous`` and empirical frequencies for ``categorical``.

    Moments use the plug-in (divide-by-n) variance.
    """
    data = np.asarray(data, dtype=float)
    index = {n: j for j, n in enumerate(names)}
    cols, col_names = [], []
    for name in list(continuous) + list(categorical):
        if name not in index:
            raise MissingColumn(f"column {name!r} not in data")
    for name in continuous:
        x = data[:, index[name]]
        a, b = beta_moment_match(float(x.mean()), float(x.var()))
        cols.append(("beta", a, b))
        col_names.append(name)
    for name in categorical:
        values, counts = np.unique(data[:, index[name]], return_counts=True)
        cols.append(("categorical", values, counts / counts.sum()))
        col_names.append(name)
    return ProductReference(cols, col_names)


def pairwise_basis(n_continuous, cross=None):
    """Terms of the pairwise product basis.

    All ``x_i x_j`` with ``i < j`` over the first ``n_continuous`` columns in
    lexicographic order, followed by ``x_i x_cross`` for every continuous
    column when ``cross`` (a column index) is given.
    """
    terms = list(combinations(range(n_continuous), 2))
    if cross is not None:
        terms += [(i, cross) for i in range(n_continuous)]
    return terms


def correlation_filter(xi_values, cutoff):
    """Indices kept after dropping the later member of each pair with ``|corr| > cutoff``.

    Columns are visited in order; a column is dropped when it is too strongly
    correlated with any column already kept.
    """
    X = np.asarray(xi_values, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        C = np.corrcoef(X, rowvar=False)
    C = np.atleast_2d(np.nan_to_num(C, nan=0.0))
    keep = []
    for j in range(X.shape[1]):
        if all(abs(C[i, j]) <= cutoff for i in keep):
            keep.append(j)
    return keep


def build_generic_model(basis_spec, reference_spec, names=None, data=None):
    """Assemble a :class:`GenericModel` from declarative specs.

    ``basis_spec``: ``{"pairwise": [continuous names], "cross": name | None,
    "filter_cutoff": float | None}``.  ``reference_spec``: either a
    :class:`ProductReference` or ``{"continuous": [...], "categorical": [...]}``
    to be moment matched on ``data`` (the model-building split).
    """
    continuous = list(basis_spec.get("pairwise", []))
    cross = basis_spec.get("cross")
    if isinstance(reference_spec, ProductReference):
        reference = reference_spec
    else:
        if data is None or names is None:
            raise NoReference("moment-matched references need the model-building data")
        reference = fit_reference(
            data, names,
            reference_spec.get("continuous", continuous),
            reference_spec.get("categorical", [cross] if cross else []),
        )
    ref_index = {n: j for j, n in enumerate(reference.names)}
    cont_idx = [ref_index[c] for c in continuous]
    if cont_idx != list(range(len(cont_idx))):
        raise DimensionMismatch("pairwise columns must lead the reference column order")
    terms = pairwise_basis(len(cont_idx), ref_index[cross] if cross else None)
    terms += [tuple(ref_index[c] for c in t) for t in basis_spec.get("extra", [])]
    if not terms:
        raise EmptyBasis("basis specification produced no terms")
    model = GenericModel(terms, reference)
    cutoff = basis_spec.get("filter_cutoff")
    if cutoff is not None:
        if data is None:
            raise NoReference("correlation filtering needs the model-building data")
        X = reference_columns(data, names, reference.names)
        model = model.subset(correlation_filter(model.xi(X), cutoff))
    return model


def reference_columns(data, names, wanted):
    data = np.asarray(data, dtype=float)
    if names is None:
        return data
    index = {n: j for j, n in enumerate(names)}
    return data[:, [index[w] for w in wanted]]


def validate_dimension(model, values: Sequence[float], what="vector"):
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size != model.p:
        raise DimensionMismatch(f"{what} has length {arr.size}, model dimension is {model.p}")
    return arr
