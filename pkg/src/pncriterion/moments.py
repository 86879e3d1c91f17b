"""Moment and cumulant tensors of log-density derivatives and of ``xi``.

Data-side quantities replace the true distribution by the empirical one (plug-in,
divide by ``n``); model-side quantities are expectations under ``g(x; theta_hat)``,
either exact or from model draws.  Every tensor is symmetrised after
accumulation.  Row sums are taken chunk by chunk in a fixed order so results
do not depend on how the work is split.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatch, EmptyData, NNotPositive, SamplerUnavailable
from .expfam import ExpFamilyModel, Sampled, sample_cumulants
from .general import ExpFamilyAdapter, GeneralModel, checked_derivatives
from .linalg import check_pd, is_symmetric, symmetrize

L3_KINDS = ("(ijk)", "(ij)k", "ijk")
L4_KINDS = ("(ijkl)", "(ij)(kl)", "(ijk)l", "(ij)kl")

# index groups within which each tensor kind is symmetric
SYMMETRY = {
    "(ijk)": [(0, 1, 2)],
    "(ij)k": [(0, 1)],
    "ijk": [(0, 1, 2)],
    "(ijkl)": [(0, 1, 2, 3)],
    "(ij)(kl)": [(0, 1), (2, 3)],
    "(ijk)l": [(0, 1, 2)],
    "(ij)kl": [(0, 1), (2, 3)],
}


@dataclass
class MomentTensors:
    p: int
    G: np.ndarray | None = None
    Gtilde: np.ndarray | None = None
    Gstar: np.ndarray | None = None
    L3: dict = field(default_factory=dict)
    L4: dict = field(default_factory=dict)
    tau3: np.ndarray | None = None
    tau4: np.ndarray | None = None
    source: dict = field(default_factory=dict)

    def check(self, rtol=1e-12):
        """Raise if a symmetry or definiteness invariant fails."""
        for name in ("G", "Gtilde", "Gstar"):
            M = getattr(self, name)
            if M is not None and not is_symmetric(M, rtol):
                raise DimensionMismatch(f"{name} is not symmetric")
        for name in ("Gtilde", "Gstar"):
            if getattr(self, name) is not None:
                check_pd(getattr(self, name), name)
        for kind, T in {**self.L3, **self.L4}.items():
            if not is_symmetric(T, rtol, SYMMETRY[kind]):
                raise DimensionMismatch(f"L{kind} lacks its index symmetry")
        T = self.L4.get("(ij)(kl)")
        if T is not None:
            if np.max(np.abs(T - T.transpose(2, 3, 0, 1))) > rtol * max(np.max(np.abs(T)), 1.0):
                raise DimensionMismatch("L(ij)(kl) is not pair-swap symmetric")
        return self


@dataclass
class CumulantSet:
    Sigma_hat: np.ndarray | None = None
    kappa3_hat: np.ndarray | None = None
    kappa3_star: np.ndarray | None = None
    kappa4_star: np.ndarray | None = None
    source: dict = field(default_factory=dict)


@dataclass
class ModelSide:
    Gstar: np.ndarray
    kappa3_star: np.ndarray | None
    kappa4_star: np.ndarray | None
    tau3: np.ndarray
    tau4: np.ndarray
    source: dict


def _as_general(model):
    if isinstance(model, ExpFamilyModel):
        return ExpFamilyAdapter(model)
    if not isinstance(model, GeneralModel):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    return model


def _chunk_size(n, p, order):
    budget = 2 ** 24
    per_row = sum(p ** k for k in range(1, order + 1)) + p ** 4
    return max(1, min(n, budget // max(per_row, 1)))


def empirical_score_moments(model, data, theta_hat, order=4, chunk_size=None, weights=None):
    """Plug-in ``G``, ``G~`` and the L-family at ``theta_hat``.

    ``order=3`` skips the fourth-order L tensors.  ``weights`` (summing to
    one) turn the row average into a quadrature rule.
    """
    gm = _as_general(model)
    data = np.asarray(data)
    n = data.shape[0]
    if n < 2:
        raise EmptyData("need at least two observations")
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise DimensionMismatch(f"weights have shape {w.shape}, expected {(n,)}")
    p = gm.p
    need = 4 if order >= 4 else 3
    chunk = chunk_size or _chunk_size(n, p, need)
    sums = {k: 0.0 for k in ("G", "H") + L3_KINDS + (L4_KINDS if order >= 4 else ())}
    for start in range(0, n, chunk):
        block = data[start:start + chunk]
        wb = w[start:start + chunk]
        d = checked_derivatives(gm, block, theta_hat, need)
        d1, d2, d3 = d[0], d[1], d[2]
        w1 = wb[:, None] * d1
        sums["G"] = sums["G"] + w1.T @ d1
        sums["H"] = sums["H"] + np.einsum("n,nij->ij", wb, d2)
        sums["(ijk)"] = sums["(ijk)"] + np.einsum("n,nijk->ijk", wb, d3)
        sums["(ij)k"] = sums["(ij)k"] + np.einsum("nij,nk->ijk", d2, w1)
        sums["ijk"] = sums["ijk"] + np.einsum("ni,nj,nk->ijk", w1, d1, d1)
        if order >= 4:
            d4 = d[3]
            sums["(ijkl)"] = sums["(ijkl)"] + np.einsum("n,nijkl->ijkl", wb, d4)
            d2f = d2.reshape(d2.shape[0], p * p)
            sums["(ij)(kl)"] = sums["(ij)(kl)"] + ((wb[:, None] * d2f).T @ d2f).reshape(p, p, p, p)
            sums["(ijk)l"] = sums["(ijk)l"] + np.einsum("nijk,nl->ijkl", d3, w1)
            sums["(ij)kl"] = sums["(ij)kl"] + np.einsum("nij,nk,nl->ijkl", d2, w1, d1, optimize=True)
    mean = {k: np.asarray(v, dtype=float) for k, v in sums.items()}
    G = symmetrize(mean["G"])
    Gtilde = -symmetrize(mean["H"])
    L3 = {k: symmetrize(mean[k], SYMMETRY[k]) for k in L3_KINDS}
    L4 = {}
    if order >= 4:
        for k in L4_KINDS:
            T = symmetrize(mean[k], SYMMETRY[k])
            if k == "(ij)(kl)":
                T = 0.5 * (T + T.transpose(2, 3, 0, 1))
            L4[k] = T
    src = {"G": f"Empirical({n})", "Gtilde": f"Empirical({n})", "L": f"Empirical({n})"}
    return MomentTensors(p, G, Gtilde, None, L3, L4, source=src)


def empirical_xi_cumulants(xi_values):
    """Plug-in covariance and third cumulant of ``xi`` (divide by ``n``)."""
    X = np.asarray(xi_values, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"xi values must be an (n, p) matrix, got shape {X.shape}")
    n = X.shape[0]
    if n < 2:
        raise EmptyData("need at least two observations")
    _, cov, k3 = sample_cumulants(X, order=3)
    return CumulantSet(cov, k3, source={"Sigma_hat": f"Empirical({n})", "kappa3_hat": f"Empirical({n})"})


def model_side_moments(model, theta_hat, method="analytic", data=None):
    """``G*``, model cumulants and ``tau3``/``tau4`` under ``g(x; theta_hat)``.

    For exponential families ``G* = Psi''``, ``kappa* = Psi'''``, ``Psi''''``
    and ``tau = -kappa*``.  A :class:`Sampled` method uses ``N`` model draws.
    General models need either ``model_moments`` (analytic) or a sampler; the
    covariates in ``data`` are held fixed.
    """
    if isinstance(model, ExpFamilyModel):
        theta_hat = model._check_theta(theta_hat)
        if isinstance(method, Sampled):
            if method.n_draws < 2:
                raise NNotPositive("sampled moments need at least two draws")
            draws = model.sample(theta_hat, method.n_draws, np.random.default_rng(method.seed))
            _, k2, k3, k4 = sample_cumulants(model.xi(draws), order=4)
            tag = f"ModelSampled({method.n_draws}, {method.seed})"
        else:
            _, k2, k3, k4 = model.psi_derivatives(theta_hat, order=4)
            k3, k4 = symmetrize(k3), symmetrize(k4)
            tag = "Analytic"
        return ModelSide(k2, k3, k4, -k3, -k4, {"Gstar": tag, "kappa_star": tag, "tau": tag})

    gm = _as_general(model)
    theta_hat = gm._check_theta(theta_hat)
    if not isinstance(method, Sampled) and hasattr(gm, "model_moments"):
        Gs, t3, t4 = gm.model_moments(theta_hat, data)
        tag = "Analytic"
    else:
        if not isinstance(method, Sampled):
            raise SamplerUnavailable(f"{type(gm).__name__} has no analytic model moments; use Sampled")
        if not gm.has_sampler:
            raise SamplerUnavailable(f"{type(gm).__name__} has no sampler")
        if method.n_draws < 2:
            raise NNotPositive("sampled moments need at least two draws")
        rng = np.random.default_rng(method.seed)
        n = len(data)
        reps = -(-method.n_draws // n)
        Gs = t3 = t4 = 0.0
        for _ in range(reps):
            d1, _, d3, d4 = checked_derivatives(gm, gm.sample(theta_hat, data, rng), theta_hat, 4)
            Gs = Gs + d1.T @ d1
            t3 = t3 + d3.sum(axis=0)
            t4 = t4 + d4.sum(axis=0)
        total = reps * n
        Gs, t3, t4 = Gs / total, t3 / total, t4 / total
        tag = f"ModelSampled({total}, {method.seed})"
    return ModelSide(symmetrize(Gs), None, None, symmetrize(t3), symmetrize(t4),
                     {"Gstar": tag, "tau": tag})


def full_moment_tensors(model, data, theta_hat, method="analytic"):
    """Data-side and model-side tensors combined into one :class:`MomentTensors`."""
    mt = empirical_score_moments(model, data, theta_hat, order=4)
    side = model_side_moments(model, theta_hat, method, data)
    mt.Gstar, mt.tau3, mt.tau4 = side.Gstar, side.tau3, side.tau4
    mt.source.update(side.source)
    return mt


def expfam_moment_tensors(G, Gtilde, kappa3, kappa3_star, kappa4_star):
    """General-model tensors implied by an exponential family.

    Second and higher log-density derivatives are constant in ``x``, so
    ``L(ij)k = L(ijk)l = 0``, ``L(ij)(kl) = G~ G~``, ``L(ij)kl = -G~ G``,
    ``L(ijk) = tau3 = -kappa*``, ``L(ijkl) = tau4 = -kappa*4`` and ``G* = G~``.
    """
    G = np.atleast_2d(np.asarray(G, float))
    Gt = np.atleast_2d(np.asarray(Gtilde, float))
    p = G.shape[0]
    k3s = np.asarray(kappa3_star, float)
    k4s = np.asarray(kappa4_star, float)
    L3 = {"(ijk)": -k3s, "(ij)k": np.zeros((p,) * 3), "ijk": np.asarray(kappa3, float)}
    L4 = {
        "(ijkl)": -k4s,
        "(ij)(kl)": np.einsum("ij,kl->ijkl", Gt, Gt),
        "(ijk)l": np.zeros((p,) * 4),
        "(ij)kl": -np.einsum("ij,kl->ijkl", Gt, G),
    }
    return MomentTensors(p, G, Gt, Gt.copy(), L3, L4, -k3s, -k4s, {"all": "ExpFamilySubstitution"})
