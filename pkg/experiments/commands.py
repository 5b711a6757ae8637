"""
Experiment commands: uav, ugv, complexity, variance-sweep, coverage.

Each command takes a validated config plus command-line options, writes its CSV
files and returns a result dict. run_command wraps a command with config loading,
run-history bookkeeping and the exit-code mapping
(0 success, 2 config or input error, 3 internal invariant failure).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from complexity_engine.bounds import HoeffdingForm, analytic_report, empirical_report
from complexity_engine.coverage import run_coverage
from dynamics_service.models import DeltaMode, DynamicsFn, SimpleCar, make_double_integrator
from errors import ConfigError, InternalInvariantError
from experiments.config import (
    ComplexityConfig,
    CoverageConfig,
    UavConfig,
    UgvConfig,
    VarianceSweepConfig,
    config_hash,
    load_config,
)
from moments_engine.expectation import expected_total_cost
from mppi_engine.estimator import build_batch, empirical_weight_mean
from reporting.csv_writer import write_csv
from simulation_engine.runner import (
    MpcRunConfig,
    RunLog,
    across_run_dispersion,
    run_mpc,
    terminal_window_mean,
)
from simulation_engine.sweep import variance_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RunOptions:
    out_dir: Path
    seed: int | None = None
    threads: int = 1
    hoeffding_form: HoeffdingForm | None = None
    delta_mode: DeltaMode | None = None


def apply_overrides(config: Any, options: RunOptions) -> Any:
    """Command-line flags take precedence over the file."""
    pi_update: dict[str, Any] = {}
    if options.seed is not None:
        pi_update["seed"] = options.seed
    if options.delta_mode is not None:
        pi_update["delta_mode"] = DeltaMode(options.delta_mode)
    if pi_update:
        config = config.model_copy(update={"pi": config.pi.model_copy(update=pi_update)})
    if options.hoeffding_form is not None and hasattr(config, "query"):
        query = config.query.model_copy(update={"hoeffding_form": HoeffdingForm(options.hoeffding_form)})
        config = config.model_copy(update={"query": query})
    return config


def _metadata(config: Any, **extra: Any) -> dict[str, Any]:
    meta = {
        "experiment": config.experiment,
        "config_hash": config_hash(config),
        "seed": config.pi.seed,
        "delta_mode": config.pi.delta_mode.value,
        "noise_enabled": config.pi.noise_enabled,
        "analytic_indicator": config.cost.analytic_indicator,
    }
    meta.update(extra)
    return meta


def _run_seed(seed: int, run: int) -> int:
    return (seed + run) & _U64


def _path_rows(log: RunLog) -> list[list[Any]]:
    states = log.states()
    controls = log.controls()
    rows = []
    for k, state in enumerate(states):
        u = controls[k] if k < len(log.records) else (None, None)
        rows.append([k, *state, *u])
    return rows


def _batch_rows(log: RunLog) -> list[list[Any]]:
    return [
        [r.step, r.e1_hat, r.min_cost, *r.variance, r.ess, r.margin_hits, r.penetrations]
        for r in log.records
    ]


BATCH_HEADER = ["step", "e1_hat", "min_cost", "var_u1", "var_u2", "ess", "margin_hits", "penetrations"]


def _closed_loop(
    config: UavConfig | UgvConfig,
    dyn: DynamicsFn,
    options: RunOptions,
    label: str,
    path_header: list[str],
    meta: dict[str, Any],
) -> tuple[list[RunLog], list[Path]]:
    spec = config.cost.build(config.pi.dt, config.pi.lam)
    inner = config.pi.build(dyn.m, threads=options.threads)
    logs: list[RunLog] = []
    files: list[Path] = []
    for run in range(config.runs):
        master_seed = _run_seed(config.pi.seed, run)
        print(f"--> {label} run {run} (master seed {master_seed})")
        log = run_mpc(
            MpcRunConfig(
                outer_steps=config.outer_steps,
                inner=inner,
                spec=spec,
                dyn=dyn,
                x0=config.x0_array(),
                actuation_noise=config.actuation_noise,
                master_seed=master_seed,
            )
        )
        run_meta = {**meta, "run": run, "master_seed": master_seed, "status": log.status}
        files.append(write_csv(options.out_dir / f"{label}_path_run{run}.csv", path_header, _path_rows(log), run_meta))
        files.append(write_csv(options.out_dir / f"{label}_batches_run{run}.csv", BATCH_HEADER, _batch_rows(log), run_meta))
        logs.append(log)
    return logs, files


def _terminal_distance(log: RunLog, x_tgt: list[float]) -> float:
    return float(np.linalg.norm(log.terminal_state[:2] - np.asarray(x_tgt[:2])))


def _dispersion_summary(logs: list[RunLog], window: float) -> tuple[float | None, float | None]:
    if len(logs) < 2:
        return None, None
    dispersion = across_run_dispersion(logs)
    return float(np.mean(dispersion)), terminal_window_mean(dispersion, window)


def cmd_uav(config: UavConfig, options: RunOptions) -> dict[str, Any]:
    meta = _metadata(config, actuation_noise=config.actuation_noise)
    files: list[Path] = []
    summary: list[list[Any]] = []
    dispersion_rows: list[list[Any]] = []
    for a in config.a_values:
        dyn = make_double_integrator(a, config.pi.horizon)
        label = f"uav_a{a:g}"
        logs, written = _closed_loop(config, dyn, options, label, ["step", "x", "y", "vx", "vy", "u1", "u2"], {**meta, "a": a})
        files.extend(written)
        for run, log in enumerate(logs):
            summary.append([
                a,
                run,
                log.metadata["master_seed"],
                log.status,
                len(log.records),
                *log.terminal_state[:2],
                _terminal_distance(log, config.cost.x_tgt),
                log.margin_hits,
                log.penetrations,
            ])
        mean_disp, window_disp = _dispersion_summary(logs, 0.1)
        dispersion_rows.append([a, len(logs), mean_disp, window_disp])
    files.append(write_csv(
        options.out_dir / "uav_summary.csv",
        ["a", "run", "master_seed", "status", "steps", "terminal_x", "terminal_y", "terminal_distance", "margin_hits", "penetrations"],
        summary,
        meta,
    ))
    files.append(write_csv(
        options.out_dir / "uav_dispersion.csv",
        ["a", "runs", "mean_dispersion", "terminal_window_dispersion"],
        dispersion_rows,
        meta,
    ))
    diverged = sum(1 for row in summary if row[3] == "diverged")
    return {"success": True, "status": "OK", "message": f"{len(summary)} runs, {diverged} diverged", "files": files}


def cmd_ugv(config: UgvConfig, options: RunOptions) -> dict[str, Any]:
    meta = _metadata(config, actuation_noise=config.actuation_noise)
    files: list[Path] = []
    per_setting: dict[str, np.ndarray] = {}
    summary: list[list[Any]] = []
    for steering in config.steering:
        logs, written = _closed_loop(
            config,
            config.car(steering),
            options,
            f"ugv_{steering.name}",
            ["step", "x", "y", "theta", "phi", "u1", "u2"],
            {**meta, "steering": steering.name},
        )
        files.extend(written)
        distances = [_terminal_distance(log, config.cost.x_tgt) for log in logs]
        dispersion = across_run_dispersion(logs) if len(logs) >= 2 else None
        if dispersion is not None:
            per_setting[steering.name] = dispersion
        summary.append([
            steering.name,
            steering.limits[0],
            steering.limits[1],
            len(logs),
            sum(1 for log in logs if log.diverged),
            float(np.mean(distances)),
            terminal_window_mean(dispersion, config.dispersion_window) if dispersion is not None else None,
        ])
    if per_setting:
        names = list(per_setting)
        length = min(len(d) for d in per_setting.values())
        rows = [[k, *(per_setting[name][k] for name in names)] for k in range(length)]
        files.append(write_csv(options.out_dir / "ugv_dispersion.csv", ["step", *names], rows, meta))
    files.append(write_csv(
        options.out_dir / "ugv_summary.csv",
        ["steering", "phi_min", "phi_max", "runs", "diverged_runs", "mean_terminal_distance", "terminal_window_dispersion"],
        summary,
        meta,
    ))
    return {"success": True, "status": "OK", "message": f"{len(summary)} steering settings", "files": files}


def cmd_complexity(config: ComplexityConfig, options: RunOptions) -> dict[str, Any]:
    form = config.query.hoeffding_form
    meta = _metadata(config, route=config.route, hoeffding_form=form.value)
    query = config.query.build(config.pi.lam)
    spec = config.cost.build(config.pi.dt, config.pi.lam)
    x0 = config.x0_array()
    rows: list[list[Any]] = []
    flagged = 0
    for param, dyn_factory in _complexity_rows(config):
        for horizon in config.horizons:
            dyn = dyn_factory(horizon)
            inner = config.pi.build(dyn.m, horizon=horizon, threads=options.threads)
            if config.route == "analytic":
                e_s = expected_total_cost(dyn, spec, inner.nominal, x0, inner.noise_gain)
                report = analytic_report(query, e_s, form)
            else:
                pilot = build_batch(dyn, spec, replace(inner, num_samples=config.pilot_samples), x0)
                e1_hat = empirical_weight_mean(pilot)
                if pilot.underflow:
                    logger.warning("Pilot weights underflow for %s, T=%d; raise lambda", param, horizon)
                report = empirical_report(query, e1_hat, form)
            if not report.assumption_ok:
                flagged += 1
            print(f"--> {param} T={horizon}: N1={report.n1} N2={report.n2 if report.n2 is not None else 'n/a'}")
            rows.append([
                param,
                horizon,
                report.n2,
                report.multiplier,
                report.n1,
                report.mode,
                report.overflow,
                report.assumption_ok,
                report.n2.log10 if report.n2 is not None else None,
                report.e_s,
                report.e1_hat,
            ])
    path = write_csv(
        options.out_dir / "complexity_table.csv",
        ["param", "T", "N2", "multiplier", "N1", "mode", "overflow", "assumption_ok", "log10_n2", "e_s", "e1_hat"],
        rows,
        meta,
    )
    return {"success": True, "status": "OK", "message": f"{len(rows)} rows, {flagged} flagged", "files": [path]}


def _complexity_rows(config: ComplexityConfig) -> list[tuple[str, Callable[[int], DynamicsFn]]]:
    if config.model == "double_integrator":
        return [(f"a={a:g}", lambda T, a=a: make_double_integrator(a, T)) for a in config.a_values]
    return [
        (s.name, lambda T, s=s: SimpleCar(wheelbase=config.wheelbase, dt=config.pi.dt, steer_limits=s.limits))
        for s in config.steering
    ]


def cmd_variance_sweep(config: VarianceSweepConfig, options: RunOptions) -> dict[str, Any]:
    meta = _metadata(config)
    first_t = config.horizons[0]
    base = MpcRunConfig(
        outer_steps=1,
        inner=config.pi.build(2, horizon=first_t, threads=options.threads),
        spec=config.cost.build(config.pi.dt, config.pi.lam),
        dyn=make_double_integrator(config.a_values[0], first_t),
        x0=config.x0_array(),
    )
    sweep = variance_sweep(base, config.a_values, config.horizons)
    lowest = {
        T: min(r.variance for r in sweep if r.horizon == T)
        for T in config.horizons
    }
    previous: dict[float, float] = {}
    rows = []
    for r in sweep:
        monotone = None if r.a not in previous else r.variance >= previous[r.a]
        previous[r.a] = r.variance
        rows.append([
            r.a,
            r.horizon,
            r.variance,
            r.variance_stderr,
            r.inv_mean_weight,
            r.e_s,
            r.variance_bound,
            r.bound_ok,
            monotone,
            r.variance == lowest[r.horizon],
        ])
    if not all(r.bound_ok for r in sweep):
        raise InternalInvariantError("empirical variance exceeds the analytic variance bound")
    path = write_csv(
        options.out_dir / "variance_sweep.csv",
        ["a", "T", "variance", "variance_stderr", "inv_mean_weight", "e_s", "variance_bound", "bound_ok", "monotone_in_t", "lowest_at_t"],
        rows,
        meta,
    )
    return {"success": True, "status": "OK", "message": f"{len(rows)} grid cells", "files": [path]}


def cmd_coverage(config: CoverageConfig, options: RunOptions) -> dict[str, Any]:
    form = config.query.hoeffding_form
    meta = _metadata(config, hoeffding_form=form.value)
    dyn = make_double_integrator(config.a, config.pi.horizon)
    results = run_coverage(
        dyn,
        config.cost.build(config.pi.dt, config.pi.lam),
        config.pi.build(dyn.m, threads=options.threads),
        config.x0_array(),
        config.query.build(config.pi.lam),
        repetitions=config.repetitions,
        reference_samples=config.reference_samples,
        pilot_samples=config.pilot_samples,
        sample_scale=config.sample_scale,
        form=form,
    )
    rows = [
        [r.bound, r.num_samples, r.repetitions, r.failures, r.observed, r.permitted, r.tolerance, r.passed]
        for r in results
    ]
    for r in results:
        print(f"--> {r.bound}: N={r.num_samples} observed {r.observed:.4f} permitted {r.permitted:g}")
    path = write_csv(
        options.out_dir / "coverage.csv",
        ["bound", "n", "repetitions", "failures", "observed", "permitted", "tolerance", "passed"],
        rows,
        meta,
    )
    return {"success": True, "status": "OK", "message": "coverage protocol finished", "files": [path]}


COMMANDS: dict[str, tuple[type, Callable[[Any, RunOptions], dict[str, Any]]]] = {
    "uav": (UavConfig, cmd_uav),
    "ugv": (UgvConfig, cmd_ugv),
    "complexity": (ComplexityConfig, cmd_complexity),
    "variance_sweep": (VarianceSweepConfig, cmd_variance_sweep),
    "coverage": (CoverageConfig, cmd_coverage),
}


def run_command(kind: str, config_path: str | Path, options: RunOptions) -> dict[str, Any]:
    """Load, dispatch, record in the run history; never raises for expected failures."""
    import database

    if kind not in COMMANDS:
        raise KeyError(f"unknown experiment kind {kind!r}")
    config_type, command = COMMANDS[kind]
    config = None
    try:
        config = load_config(config_path)
        if not isinstance(config, config_type):
            raise ConfigError(f"config describes experiment {config.experiment!r}, not {kind!r}", path="experiment")
        config = apply_overrides(config, options)
        result = {**command(config, options), "exit_code": EXIT_OK}
    except ConfigError as e:
        logger.error("Config error: %s", e)
        result = {"success": False, "status": "CONFIG_ERROR", "message": str(e), "files": [], "exit_code": EXIT_CONFIG}
    except InternalInvariantError as e:
        logger.error("Internal invariant failed: %s", e)
        result = {"success": False, "status": "INVARIANT_FAILED", "message": str(e), "files": [], "exit_code": EXIT_INVARIANT}
    except ValueError as e:
        # RejectedInputError / AssumptionViolationError from a schema-valid but unusable config
        logger.error("Rejected input: %s", e)
        result = {"success": False, "status": "REJECTED", "message": str(e), "files": [], "exit_code": EXIT_CONFIG}
    except Exception as e:
        logger.exception("Command %s failed", kind)
        result = {"success": False, "status": "FAILED", "message": f"{type(e).__name__}: {e}", "files": [], "exit_code": EXIT_FAILURE}

    database.insert_run(
        experiment=kind,
        config_hash=config_hash(config) if config is not None else None,
        seed=config.pi.seed if config is not None else options.seed,
        status=result["status"],
        out_dir=str(options.out_dir),
        exit_code=result["exit_code"],
    )
    return result
