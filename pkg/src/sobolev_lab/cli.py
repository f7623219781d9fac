"""Command-line driver: constants, minimize, spectrum, scan, fit, reproduce.

Option resolution is layered: built-in defaults, then a JSON config file
(--config), then explicit flags.  The fully resolved configuration is
embedded in every JSON report.  Files are written atomically (temp file +
rename).  Exit codes: 0 success, 1 reproduction failure, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import os

# Honor the thread cap before BLAS is initialized by the numpy import.
_threads = os.environ.get("SOBOLEV_LAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import json
import math
import sys
import tempfile

import numpy as np

from . import constants as cst
from . import optimize as opt
from . import reproduce as rep
from . import stability as st
from .discretization import DiscreteFunction, build, laplace_eigenpairs
from .functionals import QuotientSpec, sobolev_conjugate
from .geometry import make_product, make_sphere

EXIT_OK = 0
EXIT_REPRODUCE_FAIL = 1
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """defaults < config file < explicit flags; unknown config keys rejected."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as handle:
                file_cfg = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, value in file_cfg.items():
            if not isinstance(value, type(defaults[key])) and not (
                isinstance(defaults[key], float) and isinstance(value, (int, float))
            ):
                raise ConfigError(
                    f"config key {key!r}: expected {type(defaults[key]).__name__}, "
                    f"got {type(value).__name__}"
                )
            resolved[key] = value
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _build_model(cfg: dict):
    if cfg["model"] == "sphere":
        return make_sphere(cfg["d"])
    if cfg["model"] == "product":
        return make_product(cfg["d"])
    raise ConfigError(f"model must be 'sphere' or 'product', got {cfg['model']!r}")


def _build_spec(cfg: dict):
    model = _build_model(cfg)
    disc = build(model, cfg["n"])
    q = cfg["q"]
    if q <= 0:
        q = sobolev_conjugate(model.dim)
        cfg["q"] = q
    A = cfg.get("A", 0.0)
    if A <= 0:
        if cfg["model"] == "sphere":
            A = cst.a_opt_sphere_closed_form(model.dim, q)
        elif abs(q - sobolev_conjugate(model.dim)) < 1e-12:
            A = cst.a_opt_product_critical(model.dim)
        else:
            A = cst.a_opt_spectral_gap(disc, q)
        cfg["A"] = A
    B = cfg.get("B", 0.0)
    if B <= 0:
        B = model.total_volume ** (2.0 / q - 1.0)
        cfg["B"] = B
    try:
        return QuotientSpec(A=A, B=B, q=q, disc=disc), model, disc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        _write_atomic(out, text)
        print(f"wrote {out}")
    else:
        print(text)


def cmd_constants(args) -> int:
    defaults = {
        "model": "sphere", "d": 3, "q": 0.0, "n": 128, "b_budget": 4, "seed": 0,
    }
    cfg = _resolve(args, defaults)
    model = _build_model(cfg)
    disc = build(model, cfg["n"])
    q = cfg["q"] if cfg["q"] > 0 else sobolev_conjugate(model.dim)
    cfg["q"] = q
    report = cst.constants_report(model, disc, q, b_budget=cfg["b_budget"], seed=cfg["seed"])
    print(report.to_table())
    payload = json.loads(report.to_json())
    payload["config"] = cfg
    if args.out:
        _write_atomic(args.out, json.dumps(payload, indent=2))
        print(f"wrote {args.out}")
    return EXIT_OK


def _initial_guess(cfg: dict, disc):
    init = cfg["init"]
    if init == "constant":
        return DiscreteFunction(disc, np.ones(disc.n))
    if init.startswith("bubble:"):
        return st.bubble(disc, 1.0, float(init.split(":", 1)[1]))
    if init == "random":
        sd = laplace_eigenpairs(disc, min(8, disc.n))
        phis = np.column_stack([f.values for f in sd.eigenfunctions])
        rng = np.random.Generator(np.random.Philox(cfg["seed"]))
        coeffs = rng.standard_normal(phis.shape[1]) * 0.5 ** np.arange(phis.shape[1])
        return DiscreteFunction(disc, 1.0 + phis @ coeffs)
    raise ConfigError(f"init must be constant, random or bubble:<b>, got {init!r}")


def cmd_minimize(args) -> int:
    defaults = {
        "model": "sphere", "d": 3, "q": 0.0, "n": 128, "A": 0.0, "B": 0.0,
        "init": "constant", "seed": 0, "multistart": False,
    }
    cfg = _resolve(args, defaults)
    spec, _, disc = _build_spec(cfg)
    if cfg["multistart"]:
        cp = opt.multistart_minimize(spec, seed=cfg["seed"])
    else:
        cp = opt.minimize(spec, _initial_guess(cfg, disc))
    if not math.isfinite(cp.value):
        raise NumericalError("minimization produced a non-finite value")
    payload = json.loads(cp.to_json())
    payload["certificate_residual"] = opt.certify(spec, cp.u)
    payload["config"] = cfg
    _emit(payload, args.out)
    if not cp.converged:
        raise NumericalError(
            f"minimization did not converge (grad residual {cp.grad_residual:.3e})"
        )
    return EXIT_OK


def cmd_spectrum(args) -> int:
    defaults = {"model": "sphere", "d": 3, "n": 128, "k": 8}
    cfg = _resolve(args, defaults)
    model = _build_model(cfg)
    disc = build(model, cfg["n"])
    if not 1 <= cfg["k"] <= disc.n:
        raise ConfigError(f"k must be in [1, {disc.n}], got {cfg['k']}")
    sd = laplace_eigenpairs(disc, cfg["k"])
    payload = json.loads(sd.to_json())
    payload["schema_version"] = 1
    payload["config"] = cfg
    _emit(payload, args.out)
    return EXIT_OK


def cmd_scan(args) -> int:
    defaults = {
        "model": "sphere", "d": 3, "q": 0.0, "n": 256, "A": 0.0, "B": 0.0,
        "mode_index": 1, "eps_lo": 1e-3, "eps_hi": 1e-1, "eps_count": 25,
        "family": "constants",
    }
    cfg = _resolve(args, defaults)
    if cfg["family"] not in st.EXTREMAL_FAMILIES:
        raise ConfigError(
            f"family must be one of {st.EXTREMAL_FAMILIES}, got {cfg['family']!r}"
        )
    if not 0 < cfg["eps_lo"] < cfg["eps_hi"]:
        raise ConfigError("need 0 < eps_lo < eps_hi")
    spec, _, _ = _build_spec(cfg)
    ray = st.ray_from_constants(
        spec,
        mode_index=cfg["mode_index"],
        epsilons=st.default_epsilons(cfg["eps_count"], cfg["eps_lo"], cfg["eps_hi"]),
    )
    report = st.ray_scan(spec, ray, cfg["family"])
    payload = json.loads(report.to_json())
    payload["config"] = cfg
    _emit(payload, args.out)
    if args.csv:
        _write_atomic(args.csv, report.to_csv())
        print(f"wrote {args.csv}")
    print(
        f"slope {report.fitted_slope:.4f} +/- {report.slope_stderr:.1e} "
        f"-> {report.classification}"
    )
    if math.isnan(report.fitted_slope):
        raise NumericalError("scan produced no usable fit window")
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        with open(args.input) as handle:
            payload = json.load(handle)
        rows = payload["rows"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read scan report {args.input}: {exc}") from exc
    window = [r for r in rows if r.get("in_fit_window") and r["deficit"] > 0]
    if len(window) < 2:
        raise NumericalError("fewer than two usable points in the fit window")
    x = np.array([r["distance"] for r in window])
    y = np.array([r["deficit"] for r in window])
    slope, stderr = st.fit_loglog(x, y)
    verdict = st.classify(None, None, [slope])
    print(f"slope {slope:.4f} +/- {stderr:.1e} over {len(window)} points -> {verdict}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    results = rep.run_suite(only=args.only, n=args.n)
    if not results:
        raise ConfigError(f"--only {args.only!r} matched no criteria")
    print(rep.format_table(results))
    if args.out:
        _write_atomic(
            args.out,
            json.dumps({"schema_version": 1, "results": results}, indent=2),
        )
        print(f"wrote {args.out}")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_REPRODUCE_FAIL


def _add_common(p, *names):
    if "config" in names:
        p.add_argument("--config", help="JSON file with option overrides")
    if "model" in names:
        p.add_argument("--model", choices=("sphere", "product"))
        p.add_argument("--d", type=int, help="ambient dimension (3..16)")
        p.add_argument("--n", type=int, help="number of collocation nodes")
    if "q" in names:
        p.add_argument("--q", type=float, help="exponent in (2, 2*]; default 2*")
    if "AB" in names:
        p.add_argument("--A", type=float, help="gradient constant; default A_opt")
        p.add_argument("--B", type=float, help="zero-order constant; default Vol^(2/q-1)")
    if "seed" in names:
        p.add_argument("--seed", type=int)
    if "out" in names:
        p.add_argument("--out", help="write the JSON report here (atomic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sobolev-lab",
        description="Optimal Sobolev constants and stability experiments on model manifolds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="optimal-constant report for one model")
    _add_common(p, "config", "model", "q", "seed", "out")
    p.add_argument("--b-budget", dest="b_budget", type=int,
                   help="multistart budget for the B_opt lower bound")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("minimize", help="minimize the Sobolev quotient")
    _add_common(p, "config", "model", "q", "AB", "seed", "out")
    p.add_argument("--init", help="constant | random | bubble:<b>")
    p.add_argument("--multistart", action="store_true", default=None)
    p.set_defaults(func=cmd_minimize)

    p = sub.add_parser("spectrum", help="low Laplace eigenvalues of a model")
    _add_common(p, "config", "model", "out")
    p.add_argument("--k", type=int, help="number of eigenpairs")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scan", help="deficit/distance scan along a ray from constants")
    _add_common(p, "config", "model", "q", "AB", "out")
    p.add_argument("--mode-index", dest="mode_index", type=int,
                   help="Laplace mode used as the ray direction")
    p.add_argument("--eps-lo", dest="eps_lo", type=float)
    p.add_argument("--eps-hi", dest="eps_hi", type=float)
    p.add_argument("--eps-count", dest="eps_count", type=int)
    p.add_argument("--family", choices=st.EXTREMAL_FAMILIES)
    p.add_argument("--csv", help="also write the per-epsilon table as CSV")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="re-fit the exponent from a saved scan report")
    p.add_argument("--input", required=True, help="JSON report produced by scan")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("reproduce", help="run the acceptance suite")
    p.add_argument("--only", help="substring filter on criterion names")
    p.add_argument("--n", type=int,
                   help="override resolution (slope tolerances widen below 256)")
    p.add_argument("--out", help="write the results table as JSON")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except (RuntimeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
