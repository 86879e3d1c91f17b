"""Command-line entry point ``pn-criterion``.

Every command writes one JSON report with ``"schema": 1``.  Failures produce
an ``"error"`` object and exit 2 (configuration), 3 (data) or 4 (numerics).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .exceptions import ConfigError, DataError, NumericError, PNError
from .expfam import CategoricalModel, MultinomialModel, QuadraticModel, Sampled
from .general import NormalRegressionModel, PoissonRegressionModel
from .ingest import ingest_csv, read_counts
from .mcmc import ChainConfig, sample_model
from .modelsel import compare_models
from .pipeline import prepare_generic, run_criterion
from .risk import multinomial_risk, required_sample_size
from .threshold import threshold_for_alpha
from .verify import ScenarioSpec, simulate_estimation_risk

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
DEFAULT_DRAWS = 100_000

log = logging.getLogger("pncriterion")


def jsonable(obj):
    """Plain Python types for ``json``; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(report):
    return json.dumps(jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".pn-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def resolve_seed(cfg):
    env = os.environ.get("PN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"PN_SEED must be an integer, got {env!r}") from None
    seed = cfg.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    return seed


def _require(cfg, key, where="config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing {key!r}")
    return cfg[key]


def _chain(cfg, seed):
    block = cfg.get("sampler")
    if block is None:
        return None
    try:
        if "proposal_scale" in block and block["proposal_scale"] is not None:
            block = {**block, "proposal_scale": tuple(block["proposal_scale"])}
        return ChainConfig(**{**block, "seed": seed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sampler block: {exc}") from None


def _method(cfg, seed, sampled_default):
    spec = cfg.get("method", "sampled" if sampled_default else "analytic")
    if spec == "analytic":
        return "analytic"
    n_draws = DEFAULT_DRAWS
    if isinstance(spec, dict):
        n_draws = int(_require(spec, "n_draws", "method"))
    elif spec != "sampled":
        raise ConfigError(f"method must be 'analytic', 'sampled' or {{'n_draws': N}}, got {spec!r}")
    if seed is None:
        raise ConfigError("a seed is required when a sampled path is configured")
    return Sampled(n_draws, seed)


def _columns(ingested, names):
    missing = [c for c in names if c not in ingested.names]
    if missing:
        raise ConfigError(f"model refers to undeclared columns {missing}")
    return np.column_stack([ingested.column(c) for c in names])


def build_model(block, ingested, seed, chain=None):
    """``(model, data rows for it, info)`` from a model block."""
    kind = _require(block, "kind", "model")
    info = {}
    if kind in ("multinomial", "categorical"):
        col = _require(block, "column", "model")
        if col not in ingested.category_maps:
            raise ConfigError(f"column {col!r} is not categorical")
        labels = ingested.column(col).astype(int)
        K = len(ingested.category_maps[col])
        info["cells"] = K
        if kind == "multinomial":
            return MultinomialModel(K - 1), labels, info
        design = np.asarray(_require(block, "design", "model"), dtype=float)
        if design.shape[0] != K:
            raise ConfigError(f"design has {design.shape[0]} rows, column {col!r} has {K} cells")
        return CategoricalModel(design), labels, info
    if kind == "quadratic":
        X = _columns(ingested, _require(block, "columns", "model"))
        m = np.asarray(block.get("m", X.mean(axis=0)), dtype=float)
        Q = np.atleast_2d(np.asarray(block.get("Q", np.cov(X, rowvar=False, bias=True)), dtype=float))
        return QuadraticModel(m, Q), X, info
    if kind in ("normal_regression", "poisson_regression"):
        y = _columns(ingested, [_require(block, "response", "model")])
        X = _columns(ingested, list(block.get("covariates", [])))
        if block.get("intercept", True):
            X = np.column_stack([np.ones(X.shape[0]), X])
        if X.shape[1] == 0:
            raise ConfigError("regression model has no covariates")
        data = np.column_stack([y, X])
        if kind == "normal_regression":
            return NormalRegressionModel(X.shape[1]), data, info
        return PoissonRegressionModel(X.shape[1]), data, info
    if kind == "generic":
        if seed is None:
            raise ConfigError("a seed is required for generic models (random split and sampling)")
        split = block.get("split", {})
        model, X, info = prepare_generic(
            ingested.data, ingested.names, _require(block, "basis", "model"),
            block.get("reference", {}), seed, split.get("fraction", 0.5),
            block.get("rescale"), chain,
        )
        return model, X, info
    raise ConfigError(f"unknown model kind {kind!r}")


def _ingest(cfg, data_path=None):
    block = dict(_require(cfg, "data"))
    if data_path is not None:
        block["path"] = data_path
    path = _require(block, "path", "data")
    return path, ingest_csv(path, block.get("schema", {}))


def _common(cfg):
    order = cfg.get("order", "second")
    if order not in ("first", "second"):
        raise ConfigError(f"order must be 'first' or 'second', got {order!r}")
    mode = cfg.get("threshold_mode", "approximate")
    if mode not in ("approximate", "exact"):
        raise ConfigError(f"threshold_mode must be 'approximate' or 'exact', got {mode!r}")
    return float(cfg.get("alpha", 0.05)), order, mode


def cmd_criterion(cfg, data_path=None):
    seed = resolve_seed(cfg)
    alpha, order, mode = _common(cfg)
    path, ingested = _ingest(cfg, data_path)
    block = _require(cfg, "model")
    chain = _chain(cfg, seed)
    model, X, info = build_model(block, ingested, seed, chain)
    method = _method(cfg, seed, sampled_default=block["kind"] == "generic")
    ridge = float(cfg.get("ridge", 0.0))
    report = run_criterion(model, X, alpha, order, mode, method, ridge=ridge)
    result = report.to_dict()
    result["model"] = {**model.describe(), **info}
    if block["kind"] == "generic":
        diag_cfg = chain or ChainConfig(seed=seed)
        theta = np.asarray(report.extras["theta_hat"])
        result["sampler"] = sample_model(model, theta, diag_cfg).diagnostics()
    resolved = {"command": "criterion", "data": {"path": path, "schema": cfg["data"].get("schema", {})},
                "model": block, "alpha": alpha, "order": order, "threshold_mode": mode,
                "method": cfg.get("method", "sampled" if block["kind"] == "generic" else "analytic"),
                "seed": seed, "ridge": ridge, "sampler": cfg.get("sampler")}
    return resolved, result


def cmd_multinomial(args):
    labels, counts = read_counts(args.counts, args.count_column)
    report = multinomial_risk(counts, order=args.order, alpha=args.alpha,
                              threshold_mode="exact" if args.exact else "approximate",
                              pseudo_count=args.pseudo_count)
    result = report.to_dict()
    result["cells"] = len(labels)
    resolved = {"command": "multinomial", "counts": args.counts, "count_column": args.count_column,
                "alpha": args.alpha, "order": args.order, "pseudo_count": args.pseudo_count,
                "threshold_mode": "exact" if args.exact else "approximate"}
    return resolved, result


def cmd_sample_size(args):
    spec = threshold_for_alpha(args.alpha)
    n = required_sample_size(args.p, args.m_hat, args.alpha)
    resolved = {"command": "sample-size", "p": args.p, "M_hat": args.m_hat, "alpha": args.alpha}
    return resolved, {"required_n": n, "C": spec.C, "p": args.p, "M_hat": args.m_hat}


def cmd_threshold(args):
    mode = "exact" if args.exact else "approximate"
    spec = threshold_for_alpha(args.alpha, mode)
    return {"command": "threshold", "alpha": args.alpha, "threshold_mode": mode}, spec.to_dict()


def cmd_compare(cfg):
    seed = resolve_seed(cfg)
    alpha, order, mode = _common(cfg)
    path, ingested = _ingest(cfg)
    blocks = _require(cfg, "models")
    if not isinstance(blocks, list) or len(blocks) != 2:
        raise ConfigError("compare needs exactly two model blocks")
    names = cfg.get("names", ["A", "B"])
    chain = _chain(cfg, seed)
    built = [build_model(b, ingested, seed, chain) for b in blocks]
    generic = any(b["kind"] == "generic" for b in blocks)
    method = _method(cfg, seed, sampled_default=generic)
    cmp = compare_models(built[0][0], built[1][0], built[0][1], alpha, data_b=built[1][1],
                         names=tuple(names), order=order, threshold_mode=mode, method=method)
    resolved = {"command": "compare", "data": {"path": path, "schema": cfg["data"].get("schema", {})},
                "models": blocks, "names": names, "alpha": alpha, "order": order,
                "threshold_mode": mode, "seed": seed, "sampler": cfg.get("sampler")}
    return resolved, cmp.to_dict()


def cmd_simulate(cfg, n_jobs):
    seed = resolve_seed(cfg)
    block = dict(_require(cfg, "scenario"))
    if seed is not None:
        block["seed"] = seed
    if "seed" not in block:
        raise ConfigError("a seed is required for simulation")
    try:
        scenario = ScenarioSpec(**block)
    except TypeError as exc:
        raise ConfigError(f"invalid scenario block: {exc}") from None
    n_jobs = int(cfg.get("n_jobs", 1)) if n_jobs is None else n_jobs
    res = simulate_estimation_risk(scenario, n_jobs=n_jobs)
    return {"command": "simulate", "scenario": scenario.to_dict()}, {"rows": [res.to_dict()]}


def build_parser():
    parser = argparse.ArgumentParser(prog="pn-criterion",
                                     description="Sample-size adequacy via the p-n criterion.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_output(p):
        p.add_argument("-o", "--output", help="write the JSON report here instead of stdout")

    p = sub.add_parser("criterion", help="risk and decision for a configured model")
    p.add_argument("--config", required=True)
    p.add_argument("--data", help="CSV path overriding the config")
    add_output(p)

    p = sub.add_parser("multinomial", help="closed-form multinomial risk from cell counts")
    p.add_argument("--counts", required=True)
    p.add_argument("--count-column", default="count")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--order", choices=("first", "second"), default="second")
    p.add_argument("--pseudo-count", type=float, default=0.0,
                   help="added to every cell; lets zero cells through")
    p.add_argument("--exact", action="store_true", help="exact Bayes-error threshold")
    add_output(p)

    p = sub.add_parser("sample-size", help="smallest adequate n for a multinomial")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--m-hat", type=float, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    add_output(p)

    p = sub.add_parser("threshold", help="divergence threshold for a Bayes-error standard")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--exact", action="store_true")
    add_output(p)

    p = sub.add_parser("compare", help="compare two models on the same data")
    p.add_argument("--config", required=True)
    add_output(p)

    p = sub.add_parser("simulate", help="Monte-Carlo check of the risk expansion")
    p.add_argument("--config", required=True)
    p.add_argument("--n-jobs", type=int)
    add_output(p)
    return parser


def _dispatch(args):
    if args.command == "criterion":
        return cmd_criterion(load_config(args.config), args.data)
    if args.command == "multinomial":
        return cmd_multinomial(args)
    if args.command == "sample-size":
        return cmd_sample_size(args)
    if args.command == "threshold":
        return cmd_threshold(args)
    if args.command == "compare":
        return cmd_compare(load_config(args.config))
    return cmd_simulate(load_config(args.config), args.n_jobs)


def _exit_code(exc):
    if isinstance(exc, DataError):
        return EXIT_DATA, "data"
    if isinstance(exc, NumericError):
        return EXIT_NUMERIC, "numeric"
    return EXIT_CONFIG, "config"


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        resolved, result = _dispatch(args)
        report = {"schema": SCHEMA_VERSION, "version": __version__, "config": resolved,
                  "result": result, "exit_code": EXIT_OK}
        code = EXIT_OK
    except (PNError, ValueError, KeyError) as exc:
        if not isinstance(exc, PNError):
            # malformed config values surface as plain ValueError/KeyError
            log.debug("unexpected error", exc_info=True)
        code, family = _exit_code(exc)
        report = {"schema": SCHEMA_VERSION, "version": __version__, "command": args.command,
                  "error": {"type": type(exc).__name__, "family": family, "message": str(exc)},
                  "exit_code": code}
    text = dumps(report)
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
