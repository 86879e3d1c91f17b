"""Estimation-risk expansions and the p-n decision.

``R = (2n)^-1 tr(G~^-1 G G~^-1 G*) + n^-2 [second-order bracket] + O(n^-3)``.

Two second-order engines are provided.  :func:`second_order_general_theorem1`
evaluates the full bracket for an arbitrary model from a literal table of
monomials (one Einstein-summation string per monomial).
:func:`second_order_expfam` evaluates the three-term exponential-family
reduction with mode products.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .exceptions import (
    AlphaOutOfRange,
    CapExceeded,
    ConfigError,
    DimensionMismatch,
    MissingTensor,
    NNotPositive,
    NotPositiveDefinite,
    SingularMatrix,
    ZeroCell,
)
from .linalg import mode_product, multi_mode_product, sym_inverse_apply, sym_solve

EXPFAM_CAP = 200
GENERAL_CAP = 30

PASS, FAIL = "Pass", "Fail"


# -- first order -------------------------------------------------------------

def _solve(Gtilde, B, what="G~"):
    try:
        return sym_solve(Gtilde, B, what)
    except NotPositiveDefinite as exc:
        raise SingularMatrix(str(exc)) from None


def _check_n(n):
    if not n > 0:
        raise NNotPositive(f"n must be positive, got {n}")


def first_order_general(G, Gtilde, Gstar, n):
    """``(2n)^-1 tr(G~^-1 G G~^-1 G*)`` from two Cholesky solves."""
    _check_n(n)
    G, Gtilde, Gstar = (np.atleast_2d(np.asarray(a, float)) for a in (G, Gtilde, Gstar))
    if not G.shape == Gtilde.shape == Gstar.shape:
        raise DimensionMismatch("G, G~ and G* must share one shape")
    X = _solve(Gtilde, G)
    Y = _solve(Gtilde, Gstar)
    return float(np.sum(X * Y.T)) / (2.0 * n)


def first_order_expfam(Sigma_hat, psi_dd, n):
    """``(2n)^-1 tr(Sigma_hat Psi''^-1)``."""
    _check_n(n)
    Sigma_hat = np.atleast_2d(np.asarray(Sigma_hat, float))
    X = _solve(np.atleast_2d(psi_dd), Sigma_hat, "Psi''")
    return float(np.trace(X)) / (2.0 * n)


# -- exponential-family second order -----------------------------------------

def _check_cap(p, cap, engine):
    if p > cap:
        raise CapExceeded(f"p = {p} exceeds the {engine} engine cap of {cap}")


def expfam_bracket(G, Gtilde, kappa3, kappa3_star, kappa4_star):
    """The three contractions ``(T1, T2, T3)`` of the exponential-family bracket.

    With ``A = G~^-1`` and ``B = A G A``:
    ``T1 = <kappa x_1 A x_2 A x_3 A, kappa*>``,
    ``T2 = a' A a + 2 <kappa* x_1 B x_2 A x_3 B, kappa*>`` with ``a_m = B_ol kappa*_lmo``,
    ``T3 = 3 kappa*4_ijkl B_ij B_kl``.
    """
    A = sym_inverse_apply(Gtilde, "G~")
    B = A @ G @ A
    B = 0.5 * (B + B.T)
    T1 = float(np.sum(multi_mode_product(kappa3, A) * kappa3_star))
    a = np.einsum("ol,lmo->m", B, kappa3_star)
    K = mode_product(mode_product(mode_product(kappa3_star, B, 0), A, 1), B, 2)
    T2 = float(a @ A @ a + 2.0 * np.sum(K * kappa3_star))
    p = B.shape[0]
    Bf = B.reshape(p * p)
    T3 = float(3.0 * Bf @ np.asarray(kappa4_star).reshape(p * p, p * p) @ Bf)
    return T1, T2, T3


def second_order_expfam(G, Gtilde, kappa3, kappa3_star, kappa4_star, n, cap=EXPFAM_CAP):
    """``(24 n^2)^-1 (-8 T1 + 9 T2 - 3 T3)``; see :func:`expfam_bracket`."""
    _check_n(n)
    G = np.atleast_2d(np.asarray(G, float))
    p = G.shape[0]
    _check_cap(p, cap, "exponential-family")
    for name, T, order in (("kappa3", kappa3, 3), ("kappa3_star", kappa3_star, 3),
                           ("kappa4_star", kappa4_star, 4)):
        if T is None:
            raise MissingTensor(f"{name} is required")
        if np.shape(T) != (p,) * order:
            raise DimensionMismatch(f"{name} has shape {np.shape(T)}, expected {(p,) * order}")
    T1, T2, T3 = expfam_bracket(G, Gtilde, kappa3, kappa3_star, kappa4_star)
    return (-8.0 * T1 + 9.0 * T2 - 3.0 * T3) / (24.0 * n * n)


# -- general second order ------------------------------------------------------
#
# Factor names: A = G~^-1 (upper indices), g = G, gt = G~, gs = G*, L-kinds by
# their index pattern, tau3 / tau4.  Each entry is (label, coefficient, factors).

def _expand(label, coef, prefix, alternatives):
    return [(label, coef * c, f"{prefix} {alt}") for c, alt in alternatives]


def _ggg(a, b, c, d):
    # g_ab g_cd + g_ac g_bd + g_ad g_bc
    return [f"g_{a}{b} g_{c}{d}", f"g_{a}{c} g_{b}{d}", f"g_{a}{d} g_{b}{c}"]


def _general_table():
    rows = []
    h = 0.5  # the overall 2^-1 g*_ij prefactor
    line = "gs_ij"

    for label, As in (("line01", "A_sj A_it A_lm"), ("line02", "A_si A_jt A_lm")):
        rows += _expand(label, h, f"{line} {As}",
                        [(1, "L(ij)kl_sltm"), (1, "gt_ls g_tm")])
    for label, As in (("line03", "A_uj A_ik A_ls A_mt"), ("line04", "A_ui A_jk A_ls A_mt")):
        rows += _expand(label, h * 0.5, f"{line} {As}", [(1, "Lijk_kst L(ijk)_lmu")])
    for label, As in (("line05", "A_jk A_lu A_is A_mt"), ("line06", "A_ik A_lu A_js A_mt")):
        rows += _expand(label, h, f"{line} {As}", [
            (1, "L(ij)(kl)_klum g_st"), (-1, "gt_kl gt_um g_st"),
            (1, "L(ij)k_kls L(ij)k_umt"), (1, "L(ij)k_klt L(ij)k_ums")])
    for label, As in (("line07", "A_jk A_it A_mu A_sv A_wl"), ("line08", "A_ik A_jt A_mu A_sv A_wl")):
        rows += _expand(label, h * 0.5, f"{line} {As} L(ijk)_msw", [
            (1, "L(ij)k_lkt g_uv"), (1, "L(ij)k_lku g_tv"), (1, "L(ij)k_lkv g_tu")])
    for label, As in (("line09", "A_js A_it A_lu A_mv"), ("line10", "A_is A_jt A_lu A_mv")):
        rows += _expand(label, h * 0.5, f"{line} {As}", [
            (1, "L(ijk)l_slmt g_uv"), (1, "L(ijk)l_slmu g_tv"), (1, "L(ijk)l_slmv g_tu")])
    for label, As in (("line11", "A_mt A_iu A_lv A_sw A_kj"), ("line12", "A_mt A_ju A_lv A_sw A_ki")):
        rows += _expand(label, h, f"{line} {As} L(ijk)_lmk", [
            (1, "L(ij)k_tsu g_vw"), (1, "L(ij)k_tsv g_uw"), (1, "L(ij)k_tsw g_uv")])
    for label, As in (("line13", "A_ik A_lu A_sv A_tw A_oj A_hm"),
                      ("line14", "A_jk A_lu A_sv A_tw A_oi A_hm")):
        rows += _expand(label, h * 0.5, f"{line} {As} L(ijk)_lmo L(ijk)_sth",
                        [(1, t) for t in _ggg("k", "u", "v", "w")])
    for label, As in (("line15", "A_ik A_ls A_mu A_tv A_wj"), ("line16", "A_jk A_ls A_mu A_tv A_wi")):
        rows += _expand(label, h / 6.0, f"{line} {As} L(ijkl)_lmtw",
                        [(1, "g_ks g_uv"), (1, "g_ku g_sv"), (1, "g_kv g_su")])
    rows += _expand("line17", h, f"{line} A_ik A_js A_lt A_mu", [
        (1, "L(ij)(kl)_klsm g_tu"), (-1, "gt_kl gt_sm g_tu"),
        (1, "L(ij)k_klt L(ij)k_smu"), (1, "L(ij)k_klu L(ij)k_smt")])
    for label, As in (("line18", "A_ik A_lu A_sv A_tw A_jm"), ("line19", "A_jk A_lu A_sv A_tw A_im")):
        rows += _expand(label, h * 0.5, f"{line} {As} L(ijk)_stm", [
            (1, "L(ij)k_klu g_vw"), (1, "L(ij)k_klv g_uw"), (1, "L(ij)k_klw g_uv")])
    rows += _expand("line20", h * 0.25, f"{line} A_lk A_mu A_sv A_tw A_io A_jh L(ijk)_lmo L(ijk)_sth",
                    [(1, t) for t in _ggg("k", "u", "v", "w")])

    t3 = -1.0 / 6.0
    rows.append(("tau3_a", t3, "tau3_ijk A_is A_jt A_ku Lijk_stu"))
    for label, As in (("tau3_b", "A_it A_su A_jv A_kw"), ("tau3_c", "A_jt A_su A_iv A_kw"),
                      ("tau3_d", "A_kt A_su A_iv A_jw")):
        rows += _expand(label, t3, f"tau3_ijk {As}", [
            (1, "L(ij)k_stu g_vw"), (1, "L(ij)k_stv g_uw"), (1, "L(ij)k_stw g_uv")])
    for label, As in (("tau3_e", "A_su A_tv A_jw A_km A_il"), ("tau3_f", "A_su A_tv A_iw A_km A_jl"),
                      ("tau3_g", "A_su A_tv A_iw A_jm A_kl")):
        rows += _expand(label, t3 * 0.5, f"tau3_ijk {As} L(ijk)_stl",
                        [(1, "g_uv g_wm"), (1, "g_uw g_vm"), (1, "g_um g_vw")])
    rows += _expand("tau4", -1.0 / 24.0, "tau4_ijkl A_is A_jt A_ku A_lv",
                    [(1, "g_st g_uv"), (1, "g_su g_tv"), (1, "g_sv g_tu")])
    return rows


GENERAL_TERMS = _general_table()


def _parse(factors):
    names, subs = [], []
    for tok in factors.split():
        name, idx = tok.rsplit("_", 1)
        names.append(name)
        subs.append(idx)
    return tuple(names), ",".join(subs) + "->"


PARSED_TERMS = [(label, coef) + _parse(f) for label, coef, f in GENERAL_TERMS]


@lru_cache(maxsize=None)
def _einsum_path(spec, shapes):
    ops = [np.empty(s) for s in shapes]
    return np.einsum_path(spec, *ops, optimize="greedy")[0]


def general_operands(mt):
    """Map factor names to arrays; raises :class:`MissingTensor` on gaps."""
    need = {"G": mt.G, "Gtilde": mt.Gtilde, "Gstar": mt.Gstar, "tau3": mt.tau3, "tau4": mt.tau4}
    for name, val in need.items():
        if val is None:
            raise MissingTensor(f"{name} is required by the general second-order engine")
    ops = {"g": mt.G, "gt": mt.Gtilde, "gs": mt.Gstar, "tau3": mt.tau3, "tau4": mt.tau4}
    for kind in ("(ijk)", "(ij)k", "ijk"):
        if kind not in mt.L3:
            raise MissingTensor(f"L{kind} is required by the general second-order engine")
        ops["L" + kind] = mt.L3[kind]
    for kind in ("(ijkl)", "(ij)(kl)", "(ijk)l", "(ij)kl"):
        if kind not in mt.L4:
            raise MissingTensor(f"L{kind} is required by the general second-order engine")
        ops["L" + kind] = mt.L4[kind]
    try:
        ops["A"] = sym_inverse_apply(mt.Gtilde, "G~")
    except NotPositiveDefinite as exc:
        raise SingularMatrix(str(exc)) from None
    return ops


def second_order_general_theorem1(mt, n, cap=GENERAL_CAP, return_terms=False):
    """Full second-order coefficient divided by ``n^2`` for a general model.

    With ``return_terms`` also returns the per-line contributions (already
    divided by ``n^2``).
    """
    _check_n(n)
    p = mt.p
    _check_cap(p, cap, "general")
    ops = general_operands(mt)
    terms = {}
    for label, coef, names, spec in PARSED_TERMS:
        arrays = [ops[nm] for nm in names]
        path = _einsum_path(spec, tuple(a.shape for a in arrays))
        val = coef * float(np.einsum(spec, *arrays, optimize=path))
        terms[label] = terms.get(label, 0.0) + val
    scale = 1.0 / (n * n)
    total = sum(terms.values()) * scale
    if return_terms:
        return total, {k: v * scale for k, v in terms.items()}
    return total


# -- multinomial closed form and sample size -----------------------------------

def _check_alpha(alpha):
    if not 0.0 < alpha < 0.5:
        raise AlphaOutOfRange(f"alpha must lie in (0, 0.5), got {alpha}")


def m_statistic(probs):
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0.0):
        raise ZeroCell("every cell probability must be positive")
    return float(np.sum(1.0 / probs))


def criterion_polynomial(n, p, M_hat, alpha):
    """``96 n^2 alpha^2 - 6 n p - (M - 1)``; non-negative means the criterion holds."""
    return 96.0 * n * n * alpha * alpha - 6.0 * n * p - (M_hat - 1.0)


def required_sample_size(p, M_hat, alpha):
    """Smallest integer ``n`` with a non-negative criterion polynomial."""
    _check_alpha(alpha)
    if M_hat < (p + 1) ** 2 * (1.0 - 1e-12):
        raise ConfigError(f"M_hat = {M_hat} is below its minimum (p + 1)^2 = {(p + 1) ** 2}")
    a = 96.0 * alpha * alpha
    root = (3.0 * p + np.sqrt(9.0 * p * p + a * (M_hat - 1.0))) / a
    n = max(int(np.ceil(root)), 1)
    while n > 1 and criterion_polynomial(n - 1, p, M_hat, alpha) >= 0.0:
        n -= 1
    while criterion_polynomial(n, p, M_hat, alpha) < 0.0:
        n += 1
    return n


# -- reports --------------------------------------------------------------------

def evaluate_criterion(total, C):
    """``Pass`` when ``total <= C`` (boundary inclusive)."""
    return PASS if total <= C else FAIL


@dataclass
class RiskReport:
    first_order: float
    second_order: float
    n: float
    p: int
    threshold: object
    method: str
    subterms: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.first_order + self.second_order

    @property
    def decision(self):
        return evaluate_criterion(self.total, self.threshold.C)

    @property
    def passed(self):
        return self.decision == PASS

    def to_dict(self):
        out = {
            "method": self.method,
            "n": int(self.n) if float(self.n).is_integer() else float(self.n),
            "p": int(self.p),
            "first_order": float(self.first_order),
            "second_order": float(self.second_order),
            "total": float(self.total),
            "threshold": self.threshold.to_dict(),
            "decision": self.decision,
        }
        if self.subterms:
            out["subterms"] = dict(self.subterms)
        if self.provenance:
            out["provenance"] = dict(self.provenance)
        out.update(self.extras)
        return out


def multinomial_risk(counts, n=None, order="second", alpha=0.05, threshold_mode="approximate",
                     pseudo_count=0.0):
    """Closed-form multinomial risk ``p/(2n) + (M - 1)/(12 n^2)`` from cell counts.

    ``n`` defaults to the total count; a different value evaluates the risk at
    a hypothetical sample size with the same estimated probabilities.
    """
    from .threshold import threshold_for_alpha

    counts = np.asarray(counts, dtype=float).reshape(-1) + pseudo_count
    if counts.size < 2:
        raise DimensionMismatch("need at least two cells")
    if np.any(counts < 0):
        raise ConfigError("counts must be non-negative")
    if np.any(counts == 0):
        raise ZeroCell(f"{int(np.sum(counts == 0))} cell(s) have zero count")
    p = counts.size - 1
    total_count = counts.sum()
    n = total_count if n is None else n
    _check_n(n)
    probs = counts / total_count
    M = m_statistic(probs)
    first = p / (2.0 * n)
    second = (M - 1.0) / (12.0 * n * n) if order == "second" else 0.0
    spec = threshold_for_alpha(alpha, threshold_mode)
    extras = {
        "M_hat": M,
        "criterion_polynomial": criterion_polynomial(n, p, M, alpha),
        "required_n": required_sample_size(p, M, alpha),
    }
    prov = {"counts": f"Empirical({int(round(total_count))})"}
    if pseudo_count:
        prov["pseudo_count"] = pseudo_count
    return RiskReport(first, second, n, p, spec, "MultinomialClosedForm", provenance=prov, extras=extras)
