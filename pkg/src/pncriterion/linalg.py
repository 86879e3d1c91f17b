"""Dense linear-algebra kernel shared by the moment and risk code.

Symmetric positive-definite solves go through a Cholesky factorisation; no
routine here ever forms an explicit inverse.  Tensors are plain ``ndarray``
objects whose every axis has the same length ``p``.
"""
from __future__ import annotations

import itertools
from math import factorial

import numpy as np
from scipy import linalg as sla

from .exceptions import DimensionMismatch, NonFiniteDerivative, NotPositiveDefinite

PD_FLOOR = 1e-10


def check_finite(a, what="array"):
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise NonFiniteDerivative(f"{what} contains NaN or infinite entries")
    return a


def check_pd(A, what="matrix", floor=PD_FLOOR):
    """Raise unless the symmetric matrix ``A`` is positive definite.

    The smallest eigenvalue must exceed ``floor * trace(A) / p``.  Returns the
    eigenvalues so callers can report conditioning.
    """
    A = check_finite(A, what)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"{what} must be square, got shape {A.shape}")
    p = A.shape[0]
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    tol = floor * max(np.trace(A), 0.0) / p
    if w[0] <= tol or w[0] <= 0.0:
        raise NotPositiveDefinite(
            f"{what} is not positive definite (smallest eigenvalue {w[0]:.3e}, floor {tol:.3e})"
        )
    return w


def cholesky(A, what="matrix"):
    A = check_finite(A, what)
    try:
        return sla.cho_factor(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{what} is not positive definite: {exc}") from None


def sym_solve(A, B, what="matrix"):
    """Solve ``A X = B`` for symmetric positive-definite ``A``."""
    B = np.asarray(B, dtype=float)
    if B.shape[0] != np.shape(A)[0]:
        raise DimensionMismatch(f"cannot solve {np.shape(A)} system with rhs {B.shape}")
    factor = cholesky(A, what)
    return sla.cho_solve(factor, B, check_finite=False)


def sym_inverse_apply(A, what="matrix"):
    """Return ``A^{-1}`` computed as a Cholesky solve against the identity.

    Used where the full inverse metric is itself a contraction operand.
    """
    p = np.shape(A)[0]
    X = sym_solve(A, np.eye(p), what)
    return 0.5 * (X + X.T)


def mode_product(T, M, mode):
    """Contract tensor ``T`` with matrix ``M`` along axis ``mode``.

    ``result[..., a, ...] = sum_k T[..., k, ...] * M[k, a]`` with the new index
    placed where ``mode`` was.
    """
    T = np.asarray(T)
    M = np.asarray(M)
    if not 0 <= mode < T.ndim:
        raise DimensionMismatch(f"mode {mode} out of range for order-{T.ndim} tensor")
    if M.ndim != 2 or M.shape[0] != T.shape[mode]:
        raise DimensionMismatch(
            f"matrix of shape {M.shape} does not conform with axis {mode} of length {T.shape[mode]}"
        )
    out = np.tensordot(T, M, axes=([mode], [0]))
    return np.moveaxis(out, -1, mode)


def multi_mode_product(T, M):
    """Apply the same matrix along every mode of ``T``."""
    for mode in range(np.ndim(T)):
        T = mode_product(T, M, mode)
    return T


def symmetrize(T, groups=None):
    """Average ``T`` over permutations within each group of axes.

    ``groups`` is a sequence of axis tuples, e.g. ``[(0, 1), (2, 3)]``; the
    default symmetrises over all axes.  Idempotent by construction.
    """
    T = np.asarray(T, dtype=float)
    if groups is None:
        groups = [tuple(range(T.ndim))]
    for group in groups:
        if len(group) < 2:
            continue
        acc = np.zeros_like(T)
        base = list(range(T.ndim))
        for perm in itertools.permutations(group):
            axes = base.copy()
            for src, dst in zip(group, perm):
                axes[src] = dst
            acc += np.transpose(T, axes)
        T = acc / factorial(len(group))
    return T


def swap_pairs(T):
    """Average a 4-tensor with its (ij)<->(kl) block transpose."""
    return 0.5 * (T + np.transpose(T, (2, 3, 0, 1)))


def is_symmetric(T, rtol=1e-12, groups=None):
    T = np.asarray(T, dtype=float)
    scale = max(np.max(np.abs(T)), 1.0) if T.size else 1.0
    return np.max(np.abs(T - symmetrize(T, groups)), initial=0.0) <= rtol * scale
