"""Command-line front end: simulate a benchmark realization, identify a
dataset from a file, or run the Monte Carlo benchmark.

Exit codes: 0 ok, 2 usage/configuration, 3 data, 4 numerical.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ._version import __version__
from .bayes import GibbsConfig, run_gibbs
from .bench import (
    METHOD_NAMES,
    BenchConfig,
    run_benchmark,
    single_run,
)
from .dataio import (
    _sanitize,
    read_timeseries,
    write_matrices,
    write_run_records,
    write_summary,
    write_timeseries,
)
from .errors import ConfigError, DataError, NumericalError
from .estimation import (
    assemble,
    build_weights,
    estimate_noise,
    ls_estimate,
    order_heuristic_neff,
    order_midpoint,
    rank_star,
    truncate_estimate,
)
from .shrinkage import make_context, shrink_estimate, shrink_values

# flag spellings -> internal identifiers
_METHOD_MAP = {
    "heuristic": "heuristic_neff",
    "midpoint": "heuristic_midpoint",
    "hard": "hard",
    "soft": "soft",
    "optimal": "optimal",
    "sure": "sure",
    "bayes": "bayes",
}
_GF_MAP = {"hankel": "hankel_exact", "independent": "independent"}

_DEFAULTS = {
    "runs": 300,
    "scheme": "identity",
    "seed": 0,
    "nf": 250,
    "no": 1,
    "gf_variant": "independent",
    "rao_blackwell": True,
    "threads": 1,
    "method": "optimal",
    "methods": list(METHOD_NAMES),
    "debug_checks": False,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidshrink",
        description="Subspace identification with singular-value shrinkage "
                    "and Bayesian averaging.")
    parser.add_argument("--version", action="version", version=f"sidshrink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output file path")
        p.add_argument("--scheme", choices=("identity", "cva", "n4sid"), default=None)
        p.add_argument("--gf-variant", dest="gf_variant",
                       choices=tuple(_GF_MAP), default=None)
        p.add_argument("--nf", type=int, default=None, help="Gibbs chain length")
        p.add_argument("--no", type=int, default=None, help="Gibbs burn-in")

    p_sim = sub.add_parser("simulate", help="draw one benchmark realization to files")
    common(p_sim)

    p_id = sub.add_parser("identify", help="identify a dataset from a file")
    p_id.add_argument("data", help="time-series data file (u/y columns)")
    p_id.add_argument("--method", choices=tuple(_METHOD_MAP), default=None)
    common(p_id)

    p_bench = sub.add_parser("benchmark", help="run the Monte Carlo benchmark")
    p_bench.add_argument("--runs", type=int, default=None)
    p_bench.add_argument("--threads", type=int, default=None)
    common(p_bench)
    return parser


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            loaded = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise DataError(f"{path}: config must be a JSON object")
    unknown = sorted(set(loaded) - set(_DEFAULTS))
    if unknown:
        raise DataError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return loaded


def parse_config(args: argparse.Namespace) -> dict:
    """Resolve settings: flags override file values override defaults."""
    resolved = dict(_DEFAULTS)
    if getattr(args, "config", None):
        resolved.update(_load_config_file(args.config))
    for key in ("runs", "seed", "scheme", "gf_variant", "nf", "no",
                "threads", "method"):
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    resolved["gf_variant"] = _GF_MAP.get(resolved["gf_variant"], resolved["gf_variant"])
    resolved["method"] = _METHOD_MAP.get(resolved["method"], resolved["method"])
    resolved["methods"] = [_METHOD_MAP.get(m, m) for m in resolved["methods"]]
    return resolved


def _bench_config(resolved: dict, runs: int | None = None) -> BenchConfig:
    gibbs = GibbsConfig(rank=1, n_total=resolved["nf"], n_burn=resolved["no"],
                        gf_variant=resolved["gf_variant"],
                        rao_blackwell=resolved["rao_blackwell"],
                        seed=resolved["seed"])
    return BenchConfig(runs=runs if runs is not None else resolved["runs"],
                       scheme=resolved["scheme"],
                       methods=tuple(resolved["methods"]),
                       gibbs=gibbs,
                       seed=resolved["seed"],
                       parallelism=resolved["threads"],
                       debug_checks=resolved["debug_checks"])


def cmd_simulate(args: argparse.Namespace) -> int:
    resolved = parse_config(args)
    config = _bench_config(resolved, runs=1)
    _, payload = single_run(config, 0, keep_payload=True)
    n_samples = payload.u.shape[0] - payload.f - payload.p
    meta = {
        "command": "simulate",
        "version": __version__,
        "seed": resolved["seed"],
        "scheme": resolved["scheme"],
        "f": payload.f,
        "p": payload.p,
        "n_samples": n_samples,
        "snr": payload.snr,
        "nx": payload.model.n_x,
    }
    out = Path(args.out if args.out else "simulated.csv")
    truth_path = out.with_name(out.stem + "_truth" + (out.suffix or ".csv"))
    write_timeseries(out, payload.u, payload.y, config=meta)
    model = payload.model
    write_matrices(truth_path, {
        "a": model.a, "b": model.b, "c": model.c, "d": model.d,
        "k": model.k, "sigma": model.sigma, "h_fp_true": payload.h_fp_true,
    }, config=meta)
    print(f"wrote {out} and {truth_path} (nx={model.n_x}, N={n_samples})")
    return 0


def cmd_identify(args: argparse.Namespace) -> int:
    resolved = parse_config(args)
    u, y, meta = read_timeseries(args.data)
    t_samples = u.shape[0]
    f = int(meta.get("f", t_samples // 10))
    p = int(meta.get("p", t_samples // 10))
    if f < 1 or p < 1:
        raise DataError(f"dataset too short for identification ({t_samples} rows)")
    method = resolved["method"]
    scheme = resolved["scheme"]

    data = assemble(u, y, f, p)
    ls = ls_estimate(data)
    noise = estimate_noise(data, ls.h_fp_hat, ls.h_f_hat)
    weights = build_weights(scheme, data, g_f_hat=noise.g_f_hat)
    rank_info = rank_star(data, ls, weights)
    weighted = weights.apply(ls.h_fp_hat)
    s_weighted = np.linalg.svd(weighted, compute_uv=False)

    if method == "heuristic_neff":
        order = min(order_heuristic_neff(s_weighted), s_weighted.size)
        estimate = truncate_estimate(ls.h_fp_hat, weights, order)
    elif method == "heuristic_midpoint":
        order = min(order_midpoint(s_weighted), s_weighted.size)
        estimate = truncate_estimate(ls.h_fp_hat, weights, order)
    elif method in ("hard", "soft", "optimal", "sure"):
        estimate = shrink_estimate(ls.h_fp_hat, weights, rank_info.sigma_level, method)
        ctx = make_context(weighted.shape, rank_info.sigma_level)
        order = int(np.count_nonzero(shrink_values(s_weighted, ctx, method) > 0))
    elif method == "bayes":
        gibbs = GibbsConfig(rank=rank_info.r_star, n_total=resolved["nf"],
                            n_burn=resolved["no"],
                            gf_variant=resolved["gf_variant"],
                            rao_blackwell=resolved["rao_blackwell"],
                            seed=resolved["seed"])
        estimate = run_gibbs(data, ls.h_fp_hat, ls.h_f_hat, gibbs).h_fp_bayes
        order = rank_info.r_star
    else:
        raise ConfigError(f"unknown method {method!r}")

    out = Path(args.out if args.out else "identified.csv")
    header = {
        "command": "identify",
        "version": __version__,
        "method": method,
        "scheme": scheme,
        "f": f,
        "p": p,
        "n_samples": t_samples,
        "seed": resolved["seed"],
    }
    write_matrices(out, {
        "h_fp_ls": ls.h_fp_hat,
        "h_fp_est": estimate,
        "singular_values": s_weighted.reshape(1, -1),
        "sigma": np.array([[rank_info.sigma_level]]),
        "r_star": np.array([[float(rank_info.r_star)]]),
        "order": np.array([[float(order)]]),
    }, config=header)
    print(f"wrote {out} (method={method}, order={order}, r*={rank_info.r_star})")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    resolved = parse_config(args)
    config = _bench_config(resolved)
    echo = {k: resolved[k] for k in sorted(resolved)}
    print("config: " + json.dumps(_sanitize(echo), sort_keys=True))
    report = run_benchmark(config)
    out = Path(args.out if args.out else "benchmark_runs.csv")
    summary_path = out.with_name(out.stem + "_summary.json")
    write_run_records(out, report.per_run, config.scheme, config=echo)
    write_summary(summary_path, report.summary, config=echo)
    print(json.dumps(_sanitize(report.summary), indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "identify":
            return cmd_identify(args)
        if args.command == "benchmark":
            return cmd_benchmark(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
