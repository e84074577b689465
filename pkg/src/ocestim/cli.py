"""Command-line front end: simulate, estimate, and Monte Carlo sweeps.

File formats owned here:

* observation CSV: header ``t,y1,...,yd``, 17-significant-digit decimals,
  UTF-8, ``\\n`` newlines;
* YAML config with sections ``model``, ``smoother``, ``conditions``,
  ``estimator``, ``mc`` (all optional; flags override);
* JSON reports and run manifests (command, resolved config, seed, package
  version, SHA-256 digests of inputs and outputs).

Exit codes: 0 success, 2 config error, 3 data error, 4 estimator failure,
5 trajectory blow-up.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, oc
from .baselines import EstimatorFailure, nls_estimate, ts_estimate
from .conditions import make_condition_set
from .mc import ExperimentConfig, generate_data, run_experiment
from .models import MODELS, get_model
from .smoother import Observations, fit as spline_fit, gcv_select

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ESTIMATOR = 4
EXIT_BLOWUP = 5

CONFIG_VERSION = 1


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def write_observations_csv(path, obs: Observations):
    lines = ["t," + ",".join(f"y{j + 1}" for j in range(obs.dim))]
    for i in range(obs.n):
        row = [format(obs.times[i], ".17g")] + [format(v, ".17g") for v in obs.values[i]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_observations_csv(path) -> Observations:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read '{path}': {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"'{path}' is empty")
    header = lines[0].split(",")
    if header[0] != "t" or len(header) < 2:
        raise DataError(f"'{path}': expected header 't,y1,...'")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise DataError(f"'{path}': {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataError(f"'{path}': ragged rows")
    try:
        return Observations(times=data[:, 0], values=data[:, 1:])
    except ValueError as exc:
        raise DataError(f"'{path}': {exc}") from exc


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_path, command, config, seed, inputs, outputs):
    manifest = {
        "command": command,
        "config_version": CONFIG_VERSION,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")
    return path


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load config '{path}': {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    return cfg


def _resolve_model(name, section: dict):
    if name is None:
        raise ConfigError("a model name is required (--model or config model.name)")
    if name not in MODELS:
        raise ConfigError(f"unknown model '{name}'; registered: {sorted(MODELS)}")
    kwargs = {k: v for k, v in section.items() if k != "name"}
    try:
        return get_model(name, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad model options: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    model_sec = cfg.get("model", {})
    model = _resolve_model(args.model or model_sec.get("name"), model_sec)
    theta = np.array([float(v) for v in args.theta.split(",")]) if args.theta else None
    try:
        obs = generate_data(
            model, theta=theta, n=args.n, sigma=args.sigma, scheme=args.scheme, seed=args.seed
        )
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    write_observations_csv(args.out, obs)
    write_manifest(
        args.out,
        "simulate",
        {"model": model.name, "n": args.n, "sigma": args.sigma, "scheme": args.scheme,
         "theta": None if theta is None else theta.tolist()},
        args.seed,
        inputs=[],
        outputs=[args.out],
    )
    print(f"wrote {obs.n} observations of {obs.dim} state(s) to {args.out}")
    return EXIT_OK


def _smooth(obs, model, smoother_sec: dict):
    candidates = smoother_sec.get("knot_candidates", list(range(4, 31, 2)))
    constraint = None
    if smoother_sec.get("constrain_initial_value") and model.x0 is not None:
        constraint = (obs.times[0], model.x0)
    knots = gcv_select(obs, candidates, degree=int(smoother_sec.get("degree", 3)),
                       constraint=constraint)
    return spline_fit(obs, knots, constraint=constraint)


def _estimate_report(est, method):
    rep = {"method": method, "theta": np.asarray(est.theta).tolist()}
    if method == "oc":
        rep.update(
            L=int(est.L),
            objective=float(est.objective),
            converged=bool(est.converged),
            iterations=int(est.n_iter),
            message=est.message,
        )
        if est.conf_int is not None:
            rep["conf_int"] = est.conf_int.tolist()
            rep["stderr"] = est.stderr.tolist()
        if est.sse is not None:
            rep["sse"] = float(est.sse)
    else:
        rep["objective"] = float(est.objective)
        rep["converged"] = bool(est.converged)
        if getattr(est, "covariance", None) is not None:
            rep["covariance"] = est.covariance.tolist()
        if getattr(est, "x0", None) is not None:
            rep["x0"] = est.x0.tolist()
    return rep


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    model_sec = cfg.get("model", {})
    model = _resolve_model(args.model or model_sec.get("name"), model_sec)
    obs = read_observations_csv(args.data)
    if obs.dim != model.dim:
        raise DataError(
            f"data has {obs.dim} state column(s) but model '{model.name}' has {model.dim}"
        )
    fit = _smooth(obs, model, cfg.get("smoother", {}))
    est_sec = dict(cfg.get("estimator", {}))
    cond_sec = dict(cfg.get("conditions", {}))
    method = args.method or est_sec.get("method", "oc")

    if method == "oc":
        from .mc import _make_basis

        def make_set(L):
            return make_condition_set(
                model,
                _make_basis(model, L, cond_sec),
                dirichlet=cond_sec.get("dirichlet"),
                neumann=cond_sec.get("neumann"),
            )

        L_range = est_sec.get("L_range")
        weighted = bool(est_sec.get("weighted", False))
        if L_range is not None:
            est = oc.select_L(model, fit, L_range, make_set=make_set, weighted=weighted)
        else:
            cs = make_set(int(est_sec.get("L", max(model.n_params + 2, 6))))
            if weighted:
                est = oc.weighted_two_stage(cs, fit)
            else:
                est = oc.minimize(cs, fit)
    elif method == "ts":
        est = ts_estimate(fit, model, theta_init=est_sec.get("theta_init"))
    elif method == "nls":
        center = est_sec.get("center", model.theta_star)
        est = nls_estimate(
            obs,
            model,
            x0=est_sec.get("x0", "known"),
            center=center,
            starts=int(est_sec.get("starts", 20)),
            dispersion=float(est_sec.get("dispersion", 0.5)),
            seed=args.seed,
        )
    else:
        raise ConfigError(f"unknown method '{method}' (expected oc, ts or nls)")

    report = _estimate_report(est, method)
    report["model"] = model.name
    report["n_observations"] = obs.n
    Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    write_manifest(args.out, "estimate", cfg, args.seed, inputs=[args.data], outputs=[args.out])
    print(f"{method} estimate: {np.array2string(np.asarray(est.theta), precision=6)}")
    return EXIT_OK


def cmd_mc(args) -> int:
    cfg = load_config(args.config)
    mc_sec = dict(cfg.get("mc", {}))
    model_sec = cfg.get("model", {})
    name = args.model or mc_sec.pop("model", None) or model_sec.get("name")
    if name is None:
        raise ConfigError("mc config must name a model")
    if name not in MODELS:
        raise ConfigError(f"unknown model '{name}'; registered: {sorted(MODELS)}")
    if args.seed is not None:
        mc_sec["seed"] = args.seed
    if args.replicates is not None:
        mc_sec["replicates"] = args.replicates
    kwargs = {k: v for k, v in model_sec.items() if k != "name"}
    try:
        config = ExperimentConfig(model=name, model_kwargs=kwargs, **mc_sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad mc config: {exc}") from exc

    report = run_experiment(config)
    rows = ["estimator,n_ok,n_failed,mse,mean_trace_cov,coverage_ellipse"]
    summary = {}
    for label, s in report.summaries.items():
        rows.append(
            f"{label},{s.n_ok},{s.n_failed},{s.mse:.17g},"
            f"{'' if s.mean_trace_cov is None else format(s.mean_trace_cov, '.17g')},"
            f"{'' if s.coverage_ellipse is None else format(s.coverage_ellipse, '.17g')}"
        )
        summary[label] = {
            "n_ok": s.n_ok,
            "n_failed": s.n_failed,
            "mse": s.mse,
            "mse_per_coord": s.mse_per_coord.tolist(),
            "mean_trace_cov": s.mean_trace_cov,
            "coverage_per_coord": None
            if s.coverage_per_coord is None
            else s.coverage_per_coord.tolist(),
            "coverage_ellipse": s.coverage_ellipse,
            "failures": s.failures,
        }
    Path(args.out).write_text("\n".join(rows) + "\n", encoding="utf-8")
    summary_path = Path(args.out).with_suffix(".summary.json")
    summary_path.write_text(
        json.dumps(
            {"theta_star": report.theta_star.tolist(), "wall_seconds": report.wall_seconds,
             "estimators": summary},
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    write_manifest(args.out, "mc", cfg, config.seed, inputs=[],
                   outputs=[args.out, summary_path])
    print(f"wrote {args.out} and {summary_path} ({report.wall_seconds:.1f}s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ocestim",
        description="Estimate ODE/DDE parameters from noisy observations "
        "via weak-form orthogonal conditions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate noisy observations to CSV")
    sim.add_argument("--model", help="registered model name")
    sim.add_argument("--theta", help="comma-separated parameters (default: model reference)")
    sim.add_argument("--n", type=int, default=100)
    sim.add_argument("--sigma", type=float, default=0.0)
    sim.add_argument("--scheme", choices=["equispaced", "uniform"], default="equispaced")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--config", help="YAML config (model section)")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate parameters from a CSV dataset")
    est.add_argument("--data", required=True)
    est.add_argument("--model", help="registered model name")
    est.add_argument("--method", choices=["oc", "ts", "nls"])
    est.add_argument("--config", help="YAML config")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--out", required=True)
    est.set_defaults(func=cmd_estimate)

    mc = sub.add_parser("mc", help="run a Monte Carlo experiment")
    mc.add_argument("--config", required=True)
    mc.add_argument("--model", help="override config model name")
    mc.add_argument("--replicates", type=int)
    mc.add_argument("--seed", type=int)
    mc.add_argument("--out", required=True)
    mc.set_defaults(func=cmd_mc)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimatorFailure as exc:
        print(f"estimator failure: {exc}", file=sys.stderr)
        return EXIT_ESTIMATOR
    except FloatingPointError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
