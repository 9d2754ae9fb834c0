"""Command-line interface.

Three subcommands:

* ``propfit fit``      - fit CSV data (one or two curves), report estimates
  with formula bias, standard error and bias/sqrt(MSE) per parameter.
* ``propfit simulate`` - run a seeded Monte Carlo study from a JSON config
  and emit the formula-vs-simulation bias table.
* ``propfit check``    - run the bundled invariant suite.

Exit codes: 0 success, 1 check failure, 2 input/config error, 3 every
requested fit failed.

Text and JSON outputs are rendered from the same values; JSON carries 12
significant digits and is byte-stable for a fixed seed regardless of
``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .asymptotics import bias_order2, cov_ml_exact, cov_order2
from .checks import render_checks, run_checks
from .config import RunConfig, load_config
from .equivalent_dose import (
    MODE_COMMON_SIGMA,
    MODE_SEPARATE,
    fit_two_curves,
    gamma_bias_se,
    joint_bias_cov,
    partial_bleach_model,
)
from .estimators import METHODS, fit
from .exceptions import ConfigError, ModeError, PropfitError
from .io import read_input_table
from .simulation import compare_bias_table, run_study

ENV_THREADS = "PROPFIT_THREADS"


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def round_floats(obj, digits: int = 12):
    """Recursively round floats to ``digits`` significant digits."""
    if isinstance(obj, float):
        if not np.isfinite(obj):
            return None
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    return obj


def dump_json(obj) -> str:
    return json.dumps(round_floats(obj), indent=2, sort_keys=True) + "\n"


def _write_outputs(text: str, json_text: str, fmt: str, out: str | None) -> None:
    if out is None:
        if fmt in ("text", "both"):
            sys.stdout.write(text)
        if fmt in ("json", "both"):
            sys.stdout.write(json_text)
        return
    if fmt == "both":
        base = out
        for suffix in (".txt", ".json"):
            if base.endswith(suffix):
                base = base[: -len(suffix)]
        with open(base + ".txt", "w", encoding="utf-8") as fh:
            fh.write(text)
        with open(base + ".json", "w", encoding="utf-8") as fh:
            fh.write(json_text)
        return
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(json_text if fmt == "json" else text)


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _pct(bias: float, se: float) -> float:
    mse = bias * bias + se * se
    return 100.0 * abs(bias) / np.sqrt(mse) if mse > 0 else 0.0


def _fit_single(config: RunConfig, data) -> dict:
    model = config.build_model()
    entries: dict = {}
    for method in config.methods:
        try:
            res = fit(model, data, method, config.fit_options)
        except (PropfitError, ValueError) as exc:
            entries[method] = {"error": f"{type(exc).__name__}: {exc}", "converged": False,
                               "iterations": 0, "residual_norm": float("nan"),
                               "sigma_hat": float("nan"), "parameters": []}
            continue
        sigma = res.sigma_hat
        params = []
        try:
            bias = bias_order2(method, model, data, res.theta_hat, sigma).bias
            if method == "ml":
                cov = cov_ml_exact(model, data, res.theta_hat, sigma).cov
            else:
                cov = cov_order2(model, data, res.theta_hat, sigma, method=method).cov
            se = np.sqrt(np.diag(cov))
            for j, name in enumerate(model.param_names):
                params.append({"name": name, "estimate": float(res.theta_hat[j]),
                               "bias": float(bias[j]), "se": float(se[j]),
                               "bias_over_rmse_pct": _pct(float(bias[j]), float(se[j]))})
        except PropfitError:
            for j, name in enumerate(model.param_names):
                params.append({"name": name, "estimate": float(res.theta_hat[j]),
                               "bias": float("nan"), "se": float("nan"),
                               "bias_over_rmse_pct": float("nan")})
        entries[method] = {"converged": bool(res.converged), "iterations": res.iterations,
                           "residual_norm": float(res.residual_norm),
                           "sigma_hat": float(sigma), "parameters": params}
    return {"kind": "fit_report", "model": config.model, "mode": None,
            "curves": {"1": data.n}, "methods": entries}


def _mode_for(config: RunConfig, method: str) -> str:
    if config.mode == "default":
        return MODE_COMMON_SIGMA if method == "ml" else MODE_SEPARATE
    if method == "dwls" and config.mode == MODE_COMMON_SIGMA:
        if config.methods == ("dwls",):
            raise ModeError("data-weighted least squares cannot share a scale")
        return MODE_SEPARATE
    return config.mode


def _fit_pair(config: RunConfig, labels, data1, data2) -> dict:
    model = partial_bleach_model()
    entries: dict = {}
    for method in config.methods:
        mode = _mode_for(config, method)
        try:
            res = fit_two_curves(model, data1, data2, method, mode=mode,
                                 opts=config.fit_options)
        except (PropfitError, ValueError) as exc:
            entries[method] = {"error": f"{type(exc).__name__}: {exc}", "converged": False,
                               "iterations": 0, "residual_norm": float("nan"),
                               "sigma_hat": float("nan"), "mode": mode, "parameters": []}
            continue
        if len(res.sigma_hats) == 1:
            sigma = res.sigma_hats[0]
        else:
            # Pool the per-curve scale estimates with their degrees of freedom.
            dfs = np.array([data1.n - model.curve1.p, data2.n - model.curve2.p], dtype=float)
            sigma = float(np.sqrt(np.sum(dfs * np.square(res.sigma_hats)) / dfs.sum()))
        params = []
        dose = None
        try:
            bias, cov = joint_bias_cov(model, data1.x, data2.x, res.theta_hat, sigma,
                                       method, mode)
            se = np.sqrt(np.diag(cov))
            for j, name in enumerate(model.param_names):
                params.append({"name": name, "estimate": float(res.theta_hat[j]),
                               "bias": float(bias[j]), "se": float(se[j]),
                               "bias_over_rmse_pct": _pct(float(bias[j]), float(se[j]))})
            est = gamma_bias_se(model, data1.x, data2.x, res.theta_hat, sigma, method,
                                fit_mode=mode, bracket=config.gamma_bracket)
            dose = {"gamma_hat": est.gamma_hat,
                    "equivalent_dose": est.equivalent_dose,
                    "bias": est.equivalent_dose_bias, "se": est.se,
                    "bias_over_rmse_pct": _pct(est.bias, est.se)}
        except PropfitError as exc:
            if not params:
                for j, name in enumerate(model.param_names):
                    params.append({"name": name, "estimate": float(res.theta_hat[j]),
                                   "bias": float("nan"), "se": float("nan"),
                                   "bias_over_rmse_pct": float("nan")})
            dose = {"gamma_hat": float("nan"), "equivalent_dose": float("nan"),
                    "bias": float("nan"), "se": float("nan"),
                    "bias_over_rmse_pct": float("nan"),
                    }
            entries[method] = {"converged": bool(res.converged), "iterations": res.iterations,
                               "residual_norm": float(res.residual_norm),
                               "sigma_hat": float(sigma), "mode": mode,
                               "parameters": params, "dose": dose,
                               "error": f"{type(exc).__name__}: {exc}"}
            continue
        entries[method] = {"converged": bool(res.converged), "iterations": res.iterations,
                           "residual_norm": float(res.residual_norm),
                           "sigma_hat": float(sigma), "mode": mode,
                           "parameters": params, "dose": dose}
    return {"kind": "fit_report", "model": "partial_bleach", "mode": config.mode,
            "curves": {labels[0]: data1.n, labels[1]: data2.n}, "methods": entries}


def render_fit_text(report: dict) -> str:
    lines = [f"model: {report['model']}",
             "curves: " + ", ".join(f"{k} (n={v})" for k, v in report["curves"].items()), ""]
    for method, entry in report["methods"].items():
        status = "converged" if entry.get("converged") else "NOT CONVERGED"
        mode = entry.get("mode")
        mode_txt = f", mode={mode}" if mode else ""
        lines.append(f"method: {method.upper()} ({status}{mode_txt})")
        if "error" in entry:
            lines.append(f"  error: {entry['error']}")
        if entry["parameters"]:
            lines.append(f"  sigma estimate: {entry['sigma_hat']:.3f}")
            header = f"  {'parameter':<12}{'estimate':>14}{'bias':>12}{'se':>12}{'bias/rMSE%':>12}"
            lines.append(header)
            rows = list(entry["parameters"])
            if entry.get("dose"):
                d = entry["dose"]
                rows = rows + [{"name": "dose", "estimate": d["equivalent_dose"],
                                "bias": d["bias"], "se": d["se"],
                                "bias_over_rmse_pct": d["bias_over_rmse_pct"]}]
            for p in rows:
                lines.append(f"  {p['name']:<12}{p['estimate']:>14.3f}{p['bias']:>12.3f}"
                             f"{p['se']:>12.3f}{p['bias_over_rmse_pct']:>12.2f}")
        lines.append("")
    return "\n".join(lines)


def cmd_fit(args) -> int:
    try:
        config = load_config(args.config) if args.config else RunConfig()
        if args.method:
            config = replace(config, methods=METHODS if args.method == "all"
                             else (args.method,))
        if args.mode:
            config = replace(config, mode=args.mode)
        table = read_input_table(args.data)
        labels = table.labels
        if len(labels) == 1:
            if args.model:
                config = replace(config, model=args.model)
            if config.two_curve:
                raise ConfigError("two-curve model requested but the CSV has one curve")
            report = _fit_single(config, table.single())
        elif len(labels) == 2:
            model_name = args.model or "partial_bleach"
            if model_name != "partial_bleach":
                raise ConfigError("a two-curve CSV requires the partial_bleach model")
            config = replace(config, model="partial_bleach")
            d1, d2 = table.pair()
            report = _fit_pair(config, labels, d1, d2)
        else:
            raise ConfigError(f"expected 1 or 2 curves, found {len(labels)}")
    except (ConfigError, ModeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report = round_floats(report)
    _write_outputs(render_fit_text(report), dump_json(report), args.format, args.out)
    converged_any = any(e.get("converged") for e in report["methods"].values())
    return 0 if converged_any else 3


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _design_dict(design) -> dict:
    model_name = "partial_bleach" if design.two_curve else design.model.name
    out = {"model": model_name, "theta0": [float(v) for v in design.theta0],
           "x1": [float(v) for v in design.x1],
           "sigma": list(design.sigma_grid), "replicates": design.replicates,
           "seed": design.master_seed, "start": design.start, "mode": design.fit_mode,
           "methods": list(design.methods)}
    if design.two_curve:
        out["x2"] = [float(v) for v in design.x2]
    return out


def sim_report_dict(summary) -> dict:
    design = summary.design
    results = []
    for entry in summary.results:
        results.append({
            "method": entry.method, "sigma": entry.sigma,
            "r_effective": entry.r_effective, "failure_count": entry.failure_count,
            "rejected_count": entry.rejected_count, "redraw_count": entry.redraw_count,
            "cells": [{"target": c.target, "b_t": c.b_t, "b_s": c.b_s, "mc_se": c.mc_se}
                      for c in entry.cells],
        })
    tables = {t: compare_bias_table(summary, t).to_dict() for t in design.target_names}
    return {"kind": "sim_report", "design": _design_dict(design),
            "truths": dict(summary.truths), "results": results, "tables": tables}


def render_sim_text(summary) -> str:
    design = summary.design
    main_target = "gamma" if design.two_curve else design.target_names[0]
    lines = [f"simulation: {design.replicates} replicates, seed {design.master_seed}",
             f"formula (B_T) vs simulation (B_s) bias for {main_target}:", ""]
    lines.append(compare_bias_table(summary, main_target).text())
    anomalies = [r for r in summary.results if r.failure_count or r.rejected_count]
    for r in anomalies:
        lines.append(f"note: {r.method} at sigma={r.sigma:g}: "
                     f"{r.failure_count} fit failures, {r.rejected_count} rejected replicates")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    try:
        config = load_config(args.config)
        design = config.build_design()
        if args.seed is not None:
            design = replace(design, master_seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    summary = run_study(design, threads=args.threads)
    report = sim_report_dict(summary)
    fmt = args.format or config.output_format
    _write_outputs(render_sim_text(summary), dump_json(report), fmt, args.out)
    return 0


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    results = run_checks()
    sys.stdout.write(render_checks(results))
    return 0 if all(r.passed for r in results) else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _default_threads() -> int:
    raw = os.environ.get(ENV_THREADS, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="propfit",
                                     description="proportional-error regression toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit CSV data and report bias/SE per estimator")
    p_fit.add_argument("--data", required=True, help="CSV with columns [curve,]x,y")
    p_fit.add_argument("--config", help="JSON run configuration")
    p_fit.add_argument("--model", choices=["constant", "exponential",
                                           "saturating_exponential", "partial_bleach"])
    p_fit.add_argument("--method", choices=list(METHODS) + ["all"], default="all")
    p_fit.add_argument("--mode", choices=[MODE_SEPARATE, MODE_COMMON_SIGMA])
    p_fit.add_argument("--out", help="output path (both: .txt and .json)")
    p_fit.add_argument("--format", choices=["text", "json", "both"], default="text")
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a seeded Monte Carlo bias study")
    p_sim.add_argument("--config", required=True, help="JSON run configuration with sim section")
    p_sim.add_argument("--seed", type=int, help="override sim.seed")
    p_sim.add_argument("--threads", type=int, default=_default_threads(),
                       help=f"worker threads (default ${ENV_THREADS} or 1)")
    p_sim.add_argument("--out", help="output path (both: .txt and .json)")
    p_sim.add_argument("--format", choices=["text", "json", "both"])
    p_sim.set_defaults(func=cmd_simulate)

    p_check = sub.add_parser("check", help="run the bundled invariant suite")
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
