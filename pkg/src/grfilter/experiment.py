"""Seeded experiment orchestration and CSV emission.

A twin experiment is built from three independent seeds: one for the true
trajectory, one for the observation noise, one for the filter.  Observations
are generated once per observation count and reused across every assimilation
setting, so sweeps over the error-model length scale compare filters on
identical data.  All emitted CSVs are pure functions of (config, sweep,
seeds).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, SweepSpec, config_text
from .dynamics import (
    ModelParams,
    RngStream,
    propagate_coeffs,
    sample_stationary,
    spectral_to_grid,
    SpectralField,
)
from .kalman import KfRun, run_kf, snyder_tau_squared
from .metrics import normalized_mode_rmse
from .observations import (
    GrfErrorModel,
    ObservationOperator,
    ObservationSet,
    TrueErrorModel,
    observe_truth,
    true_error_covariance,
)
from .sir import FilterConfig, FilterRun, run_sir

__all__ = [
    "ExperimentArtifacts",
    "make_params",
    "make_operator",
    "make_error_model",
    "generate_truth",
    "generate_observations",
    "run_filter_experiment",
    "run_kalman_experiment",
    "run_experiment",
    "sweep_and_emit",
    "DEFAULT_ELL2_GRID",
    "DEFAULT_N_OBS_VALUES",
    "DEFAULT_N_PARTICLES_VALUES",
]

DEFAULT_ELL2_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
DEFAULT_N_OBS_VALUES = (16, 32, 64, 128)
DEFAULT_N_PARTICLES_VALUES = (100, 200, 400, 800, 1600)


def make_params(config: ExperimentConfig) -> ModelParams:
    return ModelParams(b=config.b, c=config.c, nu=config.nu,
                       domain_length=config.domain_length, n_grid=config.n_grid)


def make_operator(config: ExperimentConfig, n_obs: int | None = None) -> ObservationOperator:
    return ObservationOperator(n_grid=config.n_grid,
                               n_obs=config.n_obs if n_obs is None else n_obs,
                               domain_length=config.domain_length)


def make_error_model(config: ExperimentConfig, op: ObservationOperator,
                     ell2: float | None = None) -> GrfErrorModel:
    """Assimilation error model; the 'diagonal' kind is the ell2=0 member."""
    if config.error_kind == "diagonal":
        ell2 = 0.0
    elif ell2 is None:
        ell2 = config.ell2
    return GrfErrorModel.for_operator(op, ell2=ell2, kappa=config.kappa,
                                      r0=config.obs_variance)


def generate_truth(config: ExperimentConfig) -> np.ndarray:
    """True grid states at every time index 0..n_cycles, seeded by seeds.truth."""
    params = make_params(config)
    rng = RngStream(config.truth_seed)
    state = sample_stationary(params, rng.child(0)).coeffs
    out = np.empty((config.n_cycles + 1, config.n_grid))
    out[0] = spectral_to_grid(SpectralField(state))
    for j in range(1, config.n_cycles + 1):
        state = propagate_coeffs(state, config.dt, params, rng.child(j).generator())
        out[j] = spectral_to_grid(SpectralField(state))
    return out


def generate_observations(config: ExperimentConfig, truth_grid: np.ndarray,
                          n_obs: int | None = None) -> list[ObservationSet]:
    """Noisy observations of the truth at time indices 1..n_cycles.

    The stream is keyed by (seeds.obs, n_obs, time index): every run with the
    same observation count sees literally the same observations, and each
    observation count gets an independent noise sequence.
    """
    op = make_operator(config, n_obs)
    model = TrueErrorModel(variance=config.obs_variance,
                           corr_length=config.obs_corr_length)
    rng = RngStream(config.obs_seed)
    return [
        observe_truth(truth_grid[j], op, model, rng.child(op.n_obs, j), time_index=j)
        for j in range(1, config.n_cycles + 1)
    ]


def run_filter_experiment(config: ExperimentConfig, truth_grid: np.ndarray,
                          observations: list[ObservationSet],
                          ell2: float | None = None,
                          n_particles: int | None = None,
                          replicate: int = 0,
                          compute_crps: bool = True,
                          snapshot_cycles: tuple[int, ...] = ()) -> FilterRun:
    params = make_params(config)
    op = observations[0].operator
    model = make_error_model(config, op, ell2=ell2)
    rng = RngStream(config.filter_seed, (replicate,))
    fc = FilterConfig(error_model=model,
                      n_particles=config.n_particles if n_particles is None else n_particles,
                      resample_threshold=config.resample_threshold, rng=rng)
    return run_sir(observations, params, fc, config.dt, truth_grid=truth_grid,
                   compute_crps=compute_crps, snapshot_cycles=snapshot_cycles)


def run_kalman_experiment(config: ExperimentConfig, truth_grid: np.ndarray,
                          observations: list[ObservationSet],
                          r_model: str = "grf",
                          ell2: float | None = None) -> KfRun:
    """Kalman reference run; r_model is 'grf', 'diagonal', or 'true'."""
    params = make_params(config)
    op = observations[0].operator
    if r_model == "true":
        r = true_error_covariance(op, TrueErrorModel(variance=config.obs_variance,
                                                     corr_length=config.obs_corr_length))
    elif r_model == "diagonal":
        r = GrfErrorModel.for_operator(op, ell2=0.0, kappa=config.kappa,
                                       r0=config.obs_variance)
    elif r_model == "grf":
        r = make_error_model(config, op, ell2=ell2)
    else:
        raise ValueError("r_model must be 'true', 'grf', or 'diagonal'")
    return run_kf(observations, params, r, truth_grid=truth_grid, dt=config.dt)


@dataclass
class ExperimentArtifacts:
    config: ExperimentConfig
    truth_grid: np.ndarray
    observations: list[ObservationSet]
    filter_run: FilterRun
    kf_run: KfRun | None = None


def run_experiment(config: ExperimentConfig, out_dir: str | None = None,
                   run_kalman: bool = False,
                   compute_crps: bool = True,
                   snapshot_cycles: tuple[int, ...] = ()) -> ExperimentArtifacts:
    """One seeded end-to-end run: truth, observations, filter, optional reference."""
    truth = generate_truth(config)
    observations = generate_observations(config, truth)
    pf = run_filter_experiment(config, truth, observations,
                               compute_crps=compute_crps,
                               snapshot_cycles=snapshot_cycles)
    kf = run_kalman_experiment(config, truth, observations) if run_kalman else None
    artifacts = ExperimentArtifacts(config, truth, observations, pf, kf)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_resolved_config(config, out_dir)
        write_truth_csv(truth, os.path.join(out_dir, "truth.csv"))
        write_observations_csv(observations, os.path.join(out_dir, "observations.csv"))
    return artifacts


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def _write_resolved_config(config: ExperimentConfig, out_dir: str) -> None:
    with open(os.path.join(out_dir, "resolved_config.txt"), "w", encoding="utf-8") as handle:
        handle.write(config_text(config))


def write_truth_csv(truth_grid: np.ndarray, path: str) -> None:
    rows = ((j, i, truth_grid[j, i])
            for j in range(truth_grid.shape[0])
            for i in range(truth_grid.shape[1]))
    _write_csv(path, ["time_index", "grid_index", "value"], rows)


def write_observations_csv(observations: list[ObservationSet], path: str) -> None:
    rows = ((obs.time_index, i, int(obs.operator.obs_indices[i]), obs.values[i])
            for obs in observations for i in range(obs.operator.n_obs))
    _write_csv(path, ["time_index", "obs_index", "grid_index", "value"], rows)


def _crps_summary(run: FilterRun) -> tuple[float, float]:
    pooled = run.crps.ravel()
    return float(np.median(pooled)), float(np.mean(pooled))


def sweep_and_emit(config: ExperimentConfig, sweep: SweepSpec, out_dir: str,
                   emit_raw_crps: bool = False,
                   snapshot_cycle: int | None = None,
                   snapshot_thin: int = 8,
                   include_reference: bool = True) -> None:
    """Run a one-axis sweep and write the CSV files behind the figures.

    axis=ell2 emits tau2.csv, mode_rmse.csv, ess.csv, rmse.csv, crps.csv and,
    when a snapshot cycle is chosen, snapshots.csv; axis=n_obs and
    axis=n_particles emit crps.csv.  With runs_per_value > 1 the per-run
    files gain a trailing 'replicate' column.  include_reference=False skips
    the Kalman recursions behind tau2.csv and mode_rmse.csv (they dominate
    the cost at full scale).
    """
    os.makedirs(out_dir, exist_ok=True)
    _write_resolved_config(config, out_dir)
    with_rep = sweep.runs_per_value > 1

    truth = generate_truth(config)
    write_truth_csv(truth, os.path.join(out_dir, "truth.csv"))

    ess_rows, rmse_rows, crps_rows, raw_rows, snap_rows = [], [], [], [], []
    tau_rows, mode_rows = [], []
    observations_by_nobs: dict[int, list[ObservationSet]] = {}

    def obs_for(n_obs: int) -> list[ObservationSet]:
        if n_obs not in observations_by_nobs:
            observations_by_nobs[n_obs] = generate_observations(config, truth, n_obs)
        return observations_by_nobs[n_obs]

    def record_pf(run: FilterRun, ell2: float, n_obs: int, n_particles: int,
                  rep: int) -> None:
        tail = (rep,) if with_rep else ()
        for j in range(run.n_cycles):
            ess_rows.append((ell2, j + 1, run.ess[j]) + tail)
            rmse_rows.append((ell2, j + 1, run.rmse[j]) + tail)
        med, mean = _crps_summary(run)
        crps_rows.append((ell2, n_obs, n_particles, med, mean) + tail)
        if emit_raw_crps:
            for j in range(run.n_cycles):
                for i in range(run.crps.shape[1]):
                    raw_rows.append((ell2, n_obs, n_particles, j + 1, i,
                                     run.crps[j, i]) + tail)
        for cycle, (values, weights) in run.snapshots.items():
            op = make_operator(config, n_obs)
            pos = np.arange(config.n_grid) * (config.domain_length / config.n_grid)
            keep = np.arange(0, config.n_grid, snapshot_thin)
            w_mean = weights @ values
            for m in range(values.shape[0]):
                for i in keep:
                    snap_rows.append((ell2, cycle, "member", m, weights[m],
                                      pos[i], values[m, i]))
            for i in keep:
                snap_rows.append((ell2, cycle, "posterior_mean", "", "", pos[i], w_mean[i]))
                snap_rows.append((ell2, cycle, "truth", "", "", pos[i], truth[cycle, i]))
            obs_at = observations_by_nobs[n_obs][cycle - 1]
            for i in range(op.n_obs):
                snap_rows.append((ell2, cycle, "observation", i, "",
                                  op.positions[i], obs_at.values[i]))

    snapshots = (snapshot_cycle,) if snapshot_cycle is not None else ()

    if sweep.axis == "ell2":
        observations = obs_for(config.n_obs)
        write_observations_csv(observations,
                               os.path.join(out_dir, "observations.csv"))
        op = make_operator(config)
        params = make_params(config)
        for value in sweep.values:
            for rep in range(sweep.runs_per_value):
                run = run_filter_experiment(config, truth, observations,
                                            ell2=float(value), replicate=rep,
                                            snapshot_cycles=snapshots)
                record_pf(run, float(value), config.n_obs, config.n_particles, rep)
            if not include_reference:
                continue
            kf = run_kalman_experiment(config, truth, observations,
                                       r_model="grf", ell2=float(value))
            model = make_error_model(config, op, ell2=float(value))
            report = snyder_tau_squared(kf.final_prior_cov, op, model)
            tau_rows.append((float(value), report.tau2, report.required_ensemble))
            ratios = normalized_mode_rmse(kf.means, truth[1:], params)
            for mode, ratio in enumerate(ratios):
                mode_rows.append((float(value), mode, ratio))
    elif sweep.axis == "n_obs":
        for value in sweep.values:
            observations = obs_for(int(value))
            for rep in range(sweep.runs_per_value):
                run = run_filter_experiment(config, truth, observations,
                                            replicate=rep)
                med, mean = _crps_summary(run)
                tail = (rep,) if with_rep else ()
                crps_rows.append((config.ell2, int(value), config.n_particles,
                                  med, mean) + tail)
                if emit_raw_crps:
                    for j in range(run.n_cycles):
                        for i in range(run.crps.shape[1]):
                            raw_rows.append((config.ell2, int(value),
                                             config.n_particles, j + 1, i,
                                             run.crps[j, i]) + tail)
    else:  # n_particles
        observations = obs_for(config.n_obs)
        write_observations_csv(observations,
                               os.path.join(out_dir, "observations.csv"))
        for value in sweep.values:
            for rep in range(sweep.runs_per_value):
                run = run_filter_experiment(config, truth, observations,
                                            n_particles=int(value), replicate=rep)
                med, mean = _crps_summary(run)
                tail = (rep,) if with_rep else ()
                crps_rows.append((config.ell2, config.n_obs, int(value),
                                  med, mean) + tail)

    rep_col = ["replicate"] if with_rep else []
    if ess_rows:
        _write_csv(os.path.join(out_dir, "ess.csv"),
                   ["ell2", "cycle", "ess"] + rep_col, ess_rows)
        _write_csv(os.path.join(out_dir, "rmse.csv"),
                   ["ell2", "cycle", "rmse"] + rep_col, rmse_rows)
    _write_csv(os.path.join(out_dir, "crps.csv"),
               ["ell2", "n_obs", "n_particles", "median_crps", "mean_crps"] + rep_col,
               crps_rows)
    if tau_rows:
        _write_csv(os.path.join(out_dir, "tau2.csv"),
                   ["ell2", "tau2", "required_ensemble"], tau_rows)
        _write_csv(os.path.join(out_dir, "mode_rmse.csv"),
                   ["ell2", "mode", "normalized_rmse"], mode_rows)
    if emit_raw_crps:
        _write_csv(os.path.join(out_dir, "crps_raw.csv"),
                   ["ell2", "n_obs", "n_particles", "cycle", "grid_index", "crps"] + rep_col,
                   raw_rows)
    if snap_rows:
        _write_csv(os.path.join(out_dir, "snapshots.csv"),
                   ["ell2", "cycle", "kind", "member", "weight", "position", "value"],
                   snap_rows)
