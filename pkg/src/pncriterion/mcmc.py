"""Random-walk Metropolis sampling of ``g(x; theta)`` without its normalising constant.

Continuous coordinates (Beta reference on ``(0, 1)``) get component-wise
Gaussian random-walk proposals whose scales follow a Robbins-Monro recursion
towards 0.44 acceptance during burn-in and stay frozen afterwards.
Categorical coordinates are proposed independently from their reference
probabilities, so only the ``theta . xi`` change enters the acceptance ratio.

Every chain draws from its own Philox stream keyed on ``(seed, chain)``,
which makes the output bit-for-bit reproducible.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import DegenerateProposal, NoReference, SamplerUnavailable

TARGET_ACCEPT = 0.44
MIN_ACCEPT = 0.01


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 4
    burn_in: int = 2000
    thin: int = 1
    steps: int = 12000
    proposal_scale: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        if self.steps <= self.burn_in:
            raise ValueError("steps must exceed burn_in")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.proposal_scale is not None and min(self.proposal_scale) <= 0:
            raise ValueError("proposal scales must be positive")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    @property
    def draws_per_chain(self):
        return (self.steps - self.burn_in) // self.thin


@dataclass
class ChainResult:
    draws: np.ndarray
    acceptance: np.ndarray
    scales: np.ndarray
    split_discrepancy: float
    exact: bool = False

    def diagnostics(self):
        return {
            "exact_sampler": self.exact,
            "acceptance": np.round(self.acceptance, 4).tolist(),
            "split_chain_discrepancy": float(self.split_discrepancy),
        }


def chain_rng(seed, chain):
    """Counter-based generator for one chain."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain)])))


@numba.njit(cache=True)
def _log_tilt(x, theta, terms):
    s = 0.0
    for i in range(terms.shape[0]):
        v = 1.0
        for k in range(terms.shape[1]):
            c = terms[i, k]
            if c < 0:
                break
            v *= x[c]
        s += theta[i] * v
    return s


@numba.njit(cache=True)
def _run_chain(x0, theta, terms, kinds, a, b, cat_values, cat_cum, cat_len,
               log_scale, normals, log_u, cat_u, burn_in, thin, target):
    steps, d = normals.shape
    n_keep = (steps - burn_in) // thin
    draws = np.empty((n_keep, d))
    accepted = np.zeros(d)
    proposed = np.zeros(d)
    x = x0.copy()
    cur = _log_tilt(x, theta, terms)
    row = 0
    for t in range(steps):
        gamma = 1.0 / (t + 1.0) ** 0.6
        for j in range(d):
            old = x[j]
            if kinds[j] == 0:
                new = old + np.exp(log_scale[j]) * normals[t, j]
                if new <= 0.0 or new >= 1.0:
                    acc = False
                else:
                    x[j] = new
                    prop = _log_tilt(x, theta, terms)
                    ratio = (prop - cur
                             + (a[j] - 1.0) * (np.log(new) - np.log(old))
                             + (b[j] - 1.0) * (np.log1p(-new) - np.log1p(-old)))
                    acc = log_u[t, j] < ratio
                    if acc:
                        cur = prop
                    else:
                        x[j] = old
                if t < burn_in:
                    log_scale[j] += gamma * ((1.0 if acc else 0.0) - target)
            else:
                u = cat_u[t, j]
                k = 0
                while k < cat_len[j] - 1 and u > cat_cum[j, k]:
                    k += 1
                x[j] = cat_values[j, k]
                prop = _log_tilt(x, theta, terms)
                acc = log_u[t, j] < prop - cur
                if acc:
                    cur = prop
                else:
                    x[j] = old
            if t >= burn_in:
                proposed[j] += 1.0
                if acc:
                    accepted[j] += 1.0
        if t >= burn_in and (t - burn_in) % thin == thin - 1 and row < n_keep:
            draws[row] = x
            row += 1
    return draws, accepted, proposed, log_scale


def _reference_arrays(reference):
    d = reference.d
    kinds = np.zeros(d, dtype=np.int64)
    a = np.ones(d)
    b = np.ones(d)
    width = max([len(c[1]) for c in reference.columns if c[0] == "categorical"] + [1])
    cat_values = np.zeros((d, width))
    cat_cum = np.ones((d, width))
    cat_len = np.ones(d, dtype=np.int64)
    scale0 = np.ones(d)
    for j, col in enumerate(reference.columns):
        if col[0] == "beta":
            a[j], b[j] = col[1], col[2]
            s = a[j] + b[j]
            scale0[j] = np.sqrt(a[j] * b[j] / (s * s * (s + 1.0)))
        else:
            kinds[j] = 1
            vals = np.asarray(col[1], float)
            probs = np.asarray(col[2], float)
            cat_values[j, : vals.size] = vals
            cat_cum[j, : vals.size] = np.cumsum(probs)
            cat_len[j] = vals.size
    return kinds, a, b, cat_values, cat_cum, cat_len, scale0


def sample_model(model, theta, cfg: ChainConfig):
    """Draw from ``g(x; theta)``; exact samplers are used when the model has one."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    total = cfg.n_chains * cfg.draws_per_chain
    if getattr(model, "has_exact_sampler", False):
        parts = [np.asarray(model.sample(theta, cfg.draws_per_chain, chain_rng(cfg.seed, c)))
                 for c in range(cfg.n_chains)]
        draws = np.concatenate(parts, axis=0)
        return ChainResult(draws, np.ones(cfg.n_chains), np.zeros(0), 0.0, exact=True)
    reference = getattr(model, "reference", None)
    if reference is None:
        raise NoReference(f"{type(model).__name__} has no reference measure to sample from")
    if not hasattr(model, "term_array"):
        raise SamplerUnavailable(f"{type(model).__name__} cannot be sampled by Metropolis")

    terms = model.term_array()
    kinds, a, b, cat_values, cat_cum, cat_len, scale0 = _reference_arrays(reference)
    if cfg.proposal_scale is not None:
        scale0 = np.broadcast_to(np.asarray(cfg.proposal_scale, float), scale0.shape).copy()
    d = reference.d
    out, acc_rates, scales, halves = [], [], [], []
    for c in range(cfg.n_chains):
        rng = chain_rng(cfg.seed, c)
        x0 = reference.sample(1, rng)[0]
        normals = rng.standard_normal((cfg.steps, d))
        log_u = np.log(rng.random((cfg.steps, d)))
        cat_u = rng.random((cfg.steps, d))
        draws, accepted, proposed, log_scale = _run_chain(
            x0, theta, terms, kinds, a, b, cat_values, cat_cum, cat_len,
            np.log(scale0), normals, log_u, cat_u, cfg.burn_in, cfg.thin, TARGET_ACCEPT,
        )
        rate = accepted.sum() / max(proposed.sum(), 1.0)
        cont = kinds == 0
        if cont.any() and np.min(accepted[cont] / np.maximum(proposed[cont], 1.0)) < MIN_ACCEPT:
            raise DegenerateProposal(f"chain {c}: acceptance below {MIN_ACCEPT} after adaptation")
        out.append(draws)
        acc_rates.append(rate)
        scales.append(np.exp(log_scale))
        half = draws.shape[0] // 2
        sd = draws.std(axis=0) + 1e-300
        halves.append(np.max(np.abs(draws[:half].mean(0) - draws[half:].mean(0)) / sd))
    draws = np.concatenate(out, axis=0)
    assert draws.shape[0] == total
    return ChainResult(draws, np.asarray(acc_rates), np.asarray(scales), float(max(halves)))


def batch_means_se(values, n_batches=20):
    """Standard error of column means of autocorrelated draws by batch means."""
    values = np.asarray(values, dtype=float)
    N = values.shape[0]
    n_batches = min(n_batches, N)
    size = N // n_batches
    if size < 2:
        return values.std(axis=0) / np.sqrt(max(N, 1))
    means = values[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)
