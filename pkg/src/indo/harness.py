"""
Experiment orchestration: build the shared network and problem, execute
every configured run and write its trace.

Each run produces ``<label>.csv`` (one row per outer iteration, columns
`TRACE_FIELDS`, 17 significant digits) and ``<label>.json`` with the
resolved parameters, run status and the rate report. Nothing
time-dependent is written, so reruns are byte-identical.
"""

import csv
import json
import math
import os
from dataclasses import replace

import numpy as np

from . import analysis
from .config import (ConfigParseError, ExperimentConfig, MonitorSpec, NetworkSpec,
                     ProblemSpec, RunSpec, Scalar)
from .inner import FixedCount, Forcing, InnerSolveError
from .network import generate_rgg
from .objectives import (centralized_solution, logistic_load, quadratic_generate,
                         quadratic_solution)
from .pmm import TRACE_FIELDS, ConfigError, DivergenceError, SolverConfig, run


class DatasetMissingError(FileNotFoundError):
    pass


def build_network(spec):
    return generate_rgg(spec.N, spec.seed)


def build_problem(spec, N):
    if spec.kind == "quadratic":
        return quadratic_generate(spec.n, N, spec.seed)
    path = spec.dataset_path()
    if not os.path.exists(path):
        raise DatasetMissingError(
            "dataset %r not found at %s; download it in LIBSVM format and point "
            "$INDO_DATA_DIR at its directory (or give an absolute problem.dataset)"
            % (spec.dataset, path))
    return logistic_load(path, N, spec.m, seed=spec.seed, n_features=spec.n_features)


def solver_config(spec, problem):
    """Turn a `RunSpec` into a `SolverConfig` with numeric alpha and eps."""
    inner = Forcing(spec.eta) if spec.eta is not None else FixedCount(spec.ell)
    return SolverConfig(
        variant=spec.variant,
        alpha=spec.alpha.value(problem.m, problem.M),
        eps=spec.eps.value(problem.m, problem.M),
        gamma=spec.gamma,
        inner=inner,
        warm_start=spec.warm_start,
        initial_solve=spec.initial_solve,
        residual_norm=spec.residual_norm,
        checked=spec.checked,
    )


def validate_runs(config, problem=None, network=None):
    """
    Check every run against the resolved problem constants.

    Builds the network and problem when not given; logistic problems whose
    dataset is missing are skipped here and reported by `run_experiment`.
    """
    try:
        if network is None:
            network = build_network(config.network)
        if problem is None:
            problem = build_problem(config.problem, network.N)
    except DatasetMissingError:
        return
    for spec in config.runs:
        try:
            solver_config(spec, problem).resolve(problem.m, problem.M,
                                                 network.w_d, network.w_m)
        except (ConfigError, ValueError) as exc:
            raise ConfigParseError("run %s: %s" % (spec.name, exc), spec.line) from None


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % value


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for rec in trace:
            writer.writerow([_fmt(getattr(rec, name)) for name in TRACE_FIELDS])


def read_trace(path):
    """Read a trace CSV back into a dict of float arrays (NaN for blanks)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {name: np.array([float(r[name]) if r[name] else math.nan for r in rows])
            for name in TRACE_FIELDS}


def _clean(obj):
    """Make `obj` strict-JSON serializable (NaN and inf become null)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _config_dict(cfg):
    inner = cfg.inner
    policy = ({"ell": inner.ell} if isinstance(inner, FixedCount)
              else {"eta": inner.eta, "max_iter": inner.max_iter})
    return {"variant": cfg.variant, "alpha": cfg.alpha, "eps": cfg.eps, "gamma": cfg.gamma,
            "inner": policy, "warm_start": cfg.warm_start,
            "initial_solve": cfg.initial_solve, "residual_norm": cfg.residual_norm,
            "checked": cfg.checked}


def _problem_dict(problem, spec):
    out = {"kind": problem.kind, "n": problem.n, "N": problem.N, "m": problem.m,
           "M": problem.M, "L": problem.L, "seed": spec.seed}
    if problem.kind == "logistic":
        out["dataset"] = spec.dataset
        out["samples"] = [int(s) for s in problem.sizes]
    return out


def _network_dict(network, spec):
    return {"N": network.N, "seed": spec.seed, "graph_seed": network.seed,
            "edges": len(network.edges()), "lambda2": network.lambda2,
            "lambda_max": network.lambda_max, "w_d": network.w_d, "w_m": network.w_m}


def run_one(spec, config, problem, network, y_star=None, reference=None):
    """
    Execute one run; returns ``(trace, sidecar dict)``.

    Solver failures do not propagate: the partial trace is kept and the
    sidecar records the status and message.
    """
    cfg = solver_config(spec, problem)
    cfg = cfg.resolve(problem.m, problem.M, network.w_d, network.w_m)
    K = spec.iterations or config.iterations
    monitors = []
    lyap = ineq = None
    if config.monitors.lyapunov:
        lyap = analysis.LyapunovMonitor(reference)
        monitors.append(lyap)
    if config.monitors.inequalities:
        ineq = analysis.InequalityMonitor(problem, reference)
        monitors.append(ineq)
    x0 = np.full((problem.N, problem.n), config.x0)
    metric_ref = y_star if problem.kind == "quadratic" else None

    status, message = "ok", ""
    try:
        result = run(cfg, problem, network, K, monitors=monitors, x0=x0, y_star=metric_ref)
    except (DivergenceError, InnerSolveError) as exc:
        result = exc.result
        status = "diverged" if isinstance(exc, DivergenceError) else "inner_solve_failed"
        message = str(exc)

    side = {
        "label": spec.name,
        "status": status,
        "message": message,
        "iterations_requested": K,
        "iterations_completed": len(result.trace),
        "metric": "E" if problem.kind == "quadratic" else "V",
        "solver": _config_dict(cfg),
        "symbolic": {"alpha": spec.alpha.text, "eps": spec.eps.text},
        "x0": config.x0,
        "max_dual_drift": result.max_dual_drift,
        "final_metric": result.trace[-1].metric if result.trace else None,
    }
    if ineq is not None:
        rep = ineq.report()
        side["inequalities"] = {"violations": len(rep.violations), "checks": rep.counts(),
                                "min_margins": rep.min_margins()}
    if config.monitors.rate_report:
        eta = cfg.inner.eta if isinstance(cfg.inner, Forcing) else None
        side["rate_report"] = analysis.rate_report(problem, network, cfg, x_point=x0,
                                                   eta=eta).to_dict()
    return result.trace, side


def run_experiment(config, log=None):
    """
    Execute all runs of `config` and write their traces.

    Returns the list of written paths (CSV and JSON per run, in run order).

    Raises
    ------
    DatasetMissingError
        When a logistic dataset cannot be found.
    """
    network = build_network(config.network)
    problem = build_problem(config.problem, network.N)
    validate_runs(config, problem, network)
    os.makedirs(config.output_dir, exist_ok=True)

    y_star = quadratic_solution(problem) if problem.kind == "quadratic" else None
    need_ref = config.monitors.lyapunov or config.monitors.inequalities
    if need_ref and y_star is None:
        y_star = centralized_solution(problem)

    written = []
    for spec in config.runs:
        ref = None
        if need_ref:
            cfg = solver_config(spec, problem)
            ref = analysis.LyapunovReference(problem, network, cfg.alpha, cfg.eps,
                                             y_star=y_star)
        trace, side = run_one(spec, config, problem, network, y_star=y_star, reference=ref)
        side["problem"] = _problem_dict(problem, config.problem)
        side["network"] = _network_dict(network, config.network)
        base = os.path.join(config.output_dir, spec.name)
        write_trace(base + ".csv", trace)
        with open(base + ".json", "w") as fh:
            json.dump(_clean(side), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        written += [base + ".csv", base + ".json"]
        if log is not None:
            log("%-20s %-8s K=%d final %s=%.3e" % (spec.name, side["status"],
                                                    side["iterations_completed"],
                                                    side["metric"], side["final_metric"]))
    return written


def analyze(config):
    """Rate reports for every run of `config`, keyed by run label."""
    network = build_network(config.network)
    problem = build_problem(config.problem, network.N)
    validate_runs(config, problem, network)
    x0 = np.full((problem.N, problem.n), config.x0)
    out = {}
    for spec in config.runs:
        cfg = solver_config(spec, problem).resolve(problem.m, problem.M,
                                                    network.w_d, network.w_m)
        eta = cfg.inner.eta if isinstance(cfg.inner, Forcing) else None
        out[spec.name] = _clean(analysis.rate_report(problem, network, cfg, x_point=x0,
                                                     eta=eta).to_dict())
    return out


# -- presets ------------------------------------------------------------------

PRESET_DATASETS = {
    "fig2": ("mushrooms", 112),
    "fig3": ("lsvt.libsvm", 309),
    "fig4": ("parkinsons.libsvm", 754),
}


def _grid(ells, esom_pairs):
    runs = []
    for ell in ells:
        runs.append(RunSpec(variant="indo", ell=ell))
        for alpha, eps in esom_pairs:
            runs.append(RunSpec(variant="esom", ell=ell, alpha=alpha, eps=eps))
    return tuple(runs)


def preset(name, output_dir=None, iterations=None):
    """
    Experiment grids behind the four comparison figures.

    fig1 is the simulated quadratic (n=100, N=30); fig2-fig4 are the
    logistic datasets with ``m = 1e-4``, which drop the ``(0.01M, M)`` ESOM
    pair since there ``M`` is close to one.
    """
    M, m = Scalar(1.0, "M"), Scalar(1.0, "m")
    if name == "fig1":
        problem = ProblemSpec(kind="quadratic", n=100, seed=1)
        pairs = ((M, M), (M, m), (Scalar(0.01, "M"), M))
        K = 2000
    elif name in PRESET_DATASETS:
        dataset, nf = PRESET_DATASETS[name]
        problem = ProblemSpec(kind="logistic", dataset=dataset, m=1e-4, seed=1, n_features=nf)
        pairs = ((M, M), (M, m))
        K = 500
    else:
        raise ValueError("unknown preset %r (expected fig1, fig2, fig3 or fig4)" % name)
    return ExperimentConfig(
        problem=problem,
        network=NetworkSpec(N=30, seed=0),
        runs=_grid((1, 2), pairs),
        output_dir=output_dir or os.path.join("out", name),
        iterations=iterations or K,
        monitors=MonitorSpec(rate_report=True),
    )


def with_output_dir(config, output_dir):
    return replace(config, output_dir=output_dir)
