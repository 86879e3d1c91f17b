"""Monte-Carlo checks of the risk expansions on models with known truth.

Replications are grouped into fixed-size chunks, each with its own
``SeedSequence`` child, so results are identical whatever the number of
worker processes.  Within a chunk everything is vectorised over replications.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss

from .exceptions import ConfigError, TooManyDiscarded
from .linalg import sym_solve

CHUNK = 1000
MAX_DISCARD = 0.01
KINDS = ("normal_case1", "normal_case2", "normal_case3", "poisson", "multinomial", "quadratic")


@dataclass
class ScenarioSpec:
    """``kind`` plus its truth parameters.

    * ``multinomial``: ``params["m"]`` cell probabilities.
    * ``quadratic``: ``params["m"]``, ``params["Q"]`` and optional truth ``theta``.
    * ``normal_case1..3``: ``p`` regressors, iid ``N(0, 1)``, true ``beta``
      (default ones).  Case 1 noise is ``X_1 Z`` with ``Z ~ N(0, 1)``; case 2
      noise is ``params["noise"]`` (``uniform`` or ``laplace``) independent of
      ``X``; case 3 noise is ``N(0, 1)``.
    * ``poisson``: ``p`` coefficients on ``(1, x_1, ..)`` with ``x ~ U(-1, 1)``;
      truth ``lambda_0(x) = exp(a + b . x + c |x|^2)`` from ``params``.
    """

    kind: str
    n: int
    p: int | None = None
    replications: int = 10_000
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        if self.replications < 100:
            raise ConfigError("replications must be at least 100")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if self.kind == "multinomial":
            m = np.asarray(self.params.get("m"), dtype=float)
            if m.ndim != 1 or m.size < 2 or np.any(m <= 0) or abs(m.sum() - 1.0) > 1e-12:
                raise ConfigError("multinomial scenario needs positive probabilities summing to one")
            self.p = m.size - 1
        elif self.kind == "quadratic":
            self.p = len(self.params["m"])
        elif self.p is None:
            raise ConfigError(f"{self.kind} scenario needs p")

    def to_dict(self):
        return asdict(self)


@dataclass
class SimulationResult:
    empirical_risk: float
    std_error: float
    predicted_first_order: float
    predicted_second_order: float | None
    z_score: float
    discarded: int
    replications: int
    extras: dict = field(default_factory=dict)

    @property
    def predicted(self):
        return self.predicted_first_order + (self.predicted_second_order or 0.0)

    def to_dict(self):
        out = asdict(self)
        out["predicted"] = self.predicted
        return out


# -- truth-side quantities -------------------------------------------------------

NOISE_KURTOSIS = {"normal": 3.0, "uniform": 9.0 / 5.0, "laplace": 6.0}


def _noise(kind, size, rng):
    # unit variance in every case
    if kind == "normal":
        return rng.standard_normal(size)
    if kind == "uniform":
        return rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size)
    if kind == "laplace":
        return rng.laplace(0.0, 1.0 / np.sqrt(2.0), size)
    raise ConfigError(f"unknown noise law {kind!r}")


def _normal_case(scenario):
    return int(scenario.kind[-1])


def _poisson_quadrature(scenario, nodes=16):
    q = scenario.p - 1
    x1, w1 = leggauss(nodes)
    grids = np.meshgrid(*([x1] * q), indexing="ij")
    pts = np.stack([g.reshape(-1) for g in grids], axis=1) if q else np.zeros((1, 0))
    wts = np.ones(pts.shape[0])
    for k in range(q):
        wts *= w1[np.searchsorted(x1, pts[:, k])] / 2.0
    X = np.column_stack([np.ones(pts.shape[0]), pts])
    return X, wts


def poisson_truth(scenario):
    """Design nodes, weights, ``lambda_0`` and the projection ``theta*``."""
    X, w = _poisson_quadrature(scenario)
    q = scenario.p - 1
    a = float(scenario.params.get("a", 0.5))
    b = np.broadcast_to(np.asarray(scenario.params.get("b", 0.5), float), (q,))
    c = float(scenario.params.get("c", 0.3))
    lam0 = np.exp(a + X[:, 1:] @ b + c * np.sum(X[:, 1:] ** 2, axis=1))
    theta = np.zeros(scenario.p)
    theta[0] = np.log(np.sum(w * lam0))
    for _ in range(100):
        lam = np.exp(X @ theta)
        grad = X.T @ (w * (lam0 - lam))
        if np.max(np.abs(grad)) < 1e-14:
            break
        theta = theta + sym_solve((X * (w * lam)[:, None]).T @ X, grad)
    return X, w, lam0, theta


def predicted_first_order(scenario):
    """First-order risk of the scenario's model under its truth."""
    n, p = scenario.n, scenario.p
    kind = scenario.kind
    if kind in ("multinomial", "quadratic"):
        return p / (2.0 * n)
    if kind.startswith("normal"):
        case = _normal_case(scenario)
        if case == 1:
            # eps = X_1 Z: E eps^2 = 1, E eps^4 = 9, tr(S^-1 T) = 3 + (p - 1)
            return ((p + 2.0) + 0.5 * (9.0 - 1.0)) / (2.0 * n)
        kurt = 3.0 if case == 3 else NOISE_KURTOSIS[scenario.params.get("noise", "uniform")]
        return (p + 0.5 * (kurt - 1.0)) / (2.0 * n)
    X, w, lam0, theta = poisson_truth(scenario)
    lam = np.exp(X @ theta)
    Gt = (X * (w * lam)[:, None]).T @ X
    D = (X * (w * (lam - lam0) * (lam - lam0 - 1.0))[:, None]).T @ X
    return (p + float(np.trace(sym_solve(Gt, D)))) / (2.0 * n)


def _noise_rule(kind, nodes):
    if kind == "normal":
        x, w = hermegauss(nodes)
        return x, w / w.sum()
    if kind == "uniform":
        x, w = leggauss(nodes)
        return np.sqrt(3.0) * x, w / 2.0
    if kind == "laplace":
        b = 1.0 / np.sqrt(2.0)
        moments = [0.0 if k % 2 else math.factorial(k) * b ** k for k in range(2 * nodes + 1)]
        return gauss_from_moments(moments, nodes)
    raise ConfigError(f"unknown noise law {kind!r}")


def gauss_from_moments(moments, nodes):
    """Gauss rule matching ``moments[0..2 nodes]`` (Golub-Welsch on the Hankel matrix)."""
    k = nodes
    H = np.array([[moments[i + j] for j in range(k + 1)] for i in range(k + 1)], float)
    R = np.linalg.cholesky(H).T
    a = np.array([R[j, j + 1] / R[j, j] - (R[j - 1, j] / R[j - 1, j - 1] if j else 0.0)
                  for j in range(k)])
    b = np.array([R[j + 1, j + 1] / R[j, j] for j in range(k - 1)])
    J = np.diag(a) + np.diag(b, 1) + np.diag(b, -1)
    x, V = np.linalg.eigh(J)
    return x, moments[0] * V[0] ** 2


def population_tensors(scenario, nodes=6):
    """Truth-side tensors at ``theta*`` from a product Gauss rule (exact for these moments)."""
    from .general import NormalRegressionModel, PoissonRegressionModel
    from .moments import empirical_score_moments

    if scenario.kind.startswith("normal"):
        q = scenario.p
        beta = np.broadcast_to(np.asarray(scenario.params.get("beta", 1.0), float), (q,))
        gx, gw = _noise_rule("normal", nodes)
        case = _normal_case(scenario)
        law = "normal" if case != 2 else scenario.params.get("noise", "uniform")
        ex, ew = _noise_rule(law, nodes)
        axes = [gx] * q + [ex]
        wax = [gw] * q + [ew]
        pts = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        w = np.prod(np.stack([g.reshape(-1) for g in np.meshgrid(*wax, indexing="ij")], axis=1), axis=1)
        X, e = pts[:, :q], pts[:, q]
        if case == 1:
            e = X[:, 0] * e
        data = np.column_stack([X @ beta + e, X])
        model = NormalRegressionModel(q)
        theta = np.concatenate([[1.0], beta])
    elif scenario.kind == "poisson":
        from scipy.stats import poisson

        Xq, wq, lam0, theta = poisson_truth(scenario)
        ymax = int(np.ceil(lam0.max() + 20.0 * np.sqrt(lam0.max()) + 20.0))
        ys = np.arange(ymax + 1)
        pm = poisson.pmf(ys[None, :], lam0[:, None])
        data = np.column_stack([np.repeat(ys[None, :], Xq.shape[0], 0).reshape(-1),
                                np.repeat(Xq, ys.size, axis=0)])
        w = (wq[:, None] * pm).reshape(-1)
        model = PoissonRegressionModel(scenario.p)
    else:
        raise ConfigError(f"no population tensors for {scenario.kind}")
    keep = w > 1e-300
    data, w = data[keep], w[keep] / w[keep].sum()
    mt = empirical_score_moments(model, data, theta, weights=w)
    mt.Gstar, mt.tau3, mt.tau4 = model.model_moments(theta, data, w)
    mt.source = {"all": "Population(quadrature)"}
    return mt


def predicted_second_order(scenario):
    """Closed form for the multinomial, zero for the quadratic model, and the
    general second-order engine on exact population tensors for regressions."""
    if scenario.kind == "multinomial":
        m = np.asarray(scenario.params["m"], float)
        return (np.sum(1.0 / m) - 1.0) / (12.0 * scenario.n ** 2)
    if scenario.kind == "quadratic":
        return 0.0
    from .risk import second_order_general_theorem1

    return second_order_general_theorem1(population_tensors(scenario), scenario.n)


# -- replication kernels -------------------------------------------------------

def _chunk_multinomial(scenario, reps, rng):
    m = np.asarray(scenario.params["m"], float)
    counts = rng.multinomial(scenario.n, m, size=reps)
    ok = np.all(counts > 0, axis=1)
    mh = counts[ok] / scenario.n
    kl = np.sum(m * (np.log(m) - np.log(mh)), axis=1)
    return kl, int(np.count_nonzero(~ok))


def _chunk_quadratic(scenario, reps, rng):
    m = np.asarray(scenario.params["m"], float)
    Q = np.asarray(scenario.params["Q"], float)
    theta = np.asarray(scenario.params.get("theta", np.zeros(m.size)), float)
    L = np.linalg.cholesky(Q)
    eta = m + Q @ theta
    xbar = eta + (rng.standard_normal((reps, scenario.n, m.size)) @ L.T).mean(axis=1)
    dth = sym_solve(Q, (xbar - eta).T).T
    kl = 0.5 * np.einsum("ri,ij,rj->r", dth, Q, dth)
    return kl, 0


def _chunk_normal(scenario, reps, rng):
    n, p = scenario.n, scenario.p
    beta = np.broadcast_to(np.asarray(scenario.params.get("beta", 1.0), float), (p,))
    X = rng.standard_normal((reps, n, p))
    case = _normal_case(scenario)
    if case == 1:
        eps = X[:, :, 0] * rng.standard_normal((reps, n))
    elif case == 2:
        eps = _noise(scenario.params.get("noise", "uniform"), (reps, n), rng)
    else:
        eps = rng.standard_normal((reps, n))
    y = X @ beta + eps
    XtX = np.einsum("rni,rnj->rij", X, X)
    Xty = np.einsum("rni,rn->ri", X, y)
    bh = np.linalg.solve(XtX, Xty[..., None])[..., 0]
    r = y - np.einsum("rni,ri->rn", X, bh)
    t0h = 1.0 / np.mean(r * r, axis=1)
    t0s = 1.0  # every noise law has unit variance
    db = bh - beta
    # S = E[X X'] = I
    kl = 0.5 * (np.log(t0s / t0h) + t0h / t0s - 1.0) + 0.5 * t0h * np.sum(db * db, axis=1)
    return kl, 0


def _chunk_poisson(scenario, reps, rng, truth):
    Xq, w, lam0_q, theta_s = truth
    n, p = scenario.n, scenario.p
    q = p - 1
    a = float(scenario.params.get("a", 0.5))
    b = np.broadcast_to(np.asarray(scenario.params.get("b", 0.5), float), (q,))
    c = float(scenario.params.get("c", 0.3))
    Z = rng.uniform(-1.0, 1.0, (reps, n, q))
    X = np.concatenate([np.ones((reps, n, 1)), Z], axis=2)
    y = rng.poisson(np.exp(a + Z @ b + c * np.sum(Z * Z, axis=2)))
    theta = np.tile(theta_s, (reps, 1))
    ll = np.sum(y * (X @ theta[..., None])[..., 0] - np.exp(X @ theta[..., None])[..., 0], axis=1)
    done = np.zeros(reps, bool)
    for _ in range(50):
        eta = np.einsum("rni,ri->rn", X, theta)
        lam = np.exp(eta)
        grad = np.einsum("rn,rni->ri", y - lam, X)
        done = np.max(np.abs(grad), axis=1) <= 1e-9 * n
        if np.all(done):
            break
        H = np.einsum("rn,rni,rnj->rij", lam, X, X)
        step = np.linalg.solve(H, grad[..., None])[..., 0]
        t = np.ones(reps)
        for _ in range(30):
            cand = theta + t[:, None] * step
            e = np.einsum("rni,ri->rn", X, cand)
            ll_c = np.sum(y * e - np.exp(e), axis=1)
            bad = ~(ll_c >= ll - 1e-12 * np.abs(ll))
            if not np.any(bad):
                break
            t = np.where(bad, 0.5 * t, t)
        theta = np.where(done[:, None], theta, cand)
        ll = np.where(done, ll, ll_c)
    ok = done & np.all(np.isfinite(theta), axis=1)
    lam_s = np.exp(Xq @ theta_s)
    lam_h = np.exp(theta[ok] @ Xq.T)
    kl = (lam_s * (Xq @ theta_s - np.log(lam_h)) - lam_s + lam_h) @ w
    return kl, int(np.count_nonzero(~ok))


def _run_chunk(scenario, reps, seed_seq, truth):
    rng = np.random.default_rng(seed_seq)
    kind = scenario.kind
    if kind == "multinomial":
        return _chunk_multinomial(scenario, reps, rng)
    if kind == "quadratic":
        return _chunk_quadratic(scenario, reps, rng)
    if kind == "poisson":
        return _chunk_poisson(scenario, reps, rng, truth)
    return _chunk_normal(scenario, reps, rng)


def simulate_estimation_risk(scenario, n_jobs=1, chunk=CHUNK):
    """Replication mean of ``D[g(.; theta*) | g(.; theta_hat)]`` with its standard error."""
    R = scenario.replications
    sizes = [chunk] * (R // chunk) + ([R % chunk] if R % chunk else [])
    seeds = np.random.SeedSequence(scenario.seed).spawn(len(sizes))
    truth = poisson_truth(scenario) if scenario.kind == "poisson" else None
    if n_jobs == 1:
        parts = [_run_chunk(scenario, s, ss, truth) for s, ss in zip(sizes, seeds)]
    else:
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_run_chunk)(scenario, s, ss, truth) for s, ss in zip(sizes, seeds)
        )
    kl = np.concatenate([k for k, _ in parts])
    discarded = sum(d for _, d in parts)
    if discarded > MAX_DISCARD * R:
        raise TooManyDiscarded(f"{discarded} of {R} replications were degenerate")
    emp = float(kl.mean())
    se = float(kl.std(ddof=1) / np.sqrt(kl.size))
    first = predicted_first_order(scenario)
    second = predicted_second_order(scenario)
    pred = first + (second or 0.0)
    extras = {"n": scenario.n, "p": scenario.p, "kind": scenario.kind,
              "z_first_order": (emp - first) / se}
    if scenario.kind == "poisson":
        extras["theta_star"] = truth[3].tolist()
    return SimulationResult(emp, se, first, second, (emp - pred) / se, int(discarded), R, extras)
