"""End-to-end target checks at the full experiment scale.

One test per numbered criterion; each prints a single PASS/FAIL line with the
measured values before asserting.  Shared artifacts (the truth, the
observation sets, the filter and reference sweeps) are computed once per
session.  The full module takes roughly 20 minutes on a 2-CPU machine, most
of it in the eleven Kalman covariance recursions of the tau^2 sweep.
"""

import time

import numpy as np
import pytest

from grfilter.config import ExperimentConfig, SweepSpec, replace
from grfilter.dynamics import (
    ModelParams,
    RngStream,
    mode_rate,
    noise_amplitude,
    propagate_coeffs,
    sample_stationary,
    stationary_covariance_matrix,
)
from grfilter.experiment import (
    generate_observations,
    generate_truth,
    make_error_model,
    make_operator,
    run_filter_experiment,
    run_kalman_experiment,
    sweep_and_emit,
)
from grfilter.kalman import (
    GaussianState,
    kf_update,
    mode_posterior_stats,
    powerlaw_tau,
    snyder_tau_squared,
)
from grfilter.metrics import WeightedSample, crps_weighted, normalized_mode_rmse
from grfilter.observations import (
    GrfErrorModel,
    ObservationOperator,
    ObservationSet,
    grf_quadratic_form,
    grf_quadratic_forms,
    grf_spectrum,
    smoothing_factor,
)
from grfilter.sir import Ensemble, effective_sample_size, normalize_log_weights, \
    resample_multinomial

from test_metrics import crps_quadrature

pytestmark = pytest.mark.acceptance

ELL2_GRID = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))
FINAL90 = slice(10, None)


def report(criterion: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def config():
    return ExperimentConfig().validate()


@pytest.fixture(scope="session")
def truth(config):
    return generate_truth(config)


@pytest.fixture(scope="session")
def obs64(config, truth):
    return generate_observations(config, truth)


@pytest.fixture(scope="session")
def kf_sweep(config, truth, obs64):
    """tau^2, required ensemble, median RMSE, and mode-error curves per ell2."""
    op = make_operator(config)
    params = ModelParams(b=config.b, c=config.c, nu=config.nu,
                         domain_length=config.domain_length, n_grid=config.n_grid)
    out = {"tau2": {}, "required": {}, "med_rmse": {}, "mode_ratio": {}}
    tic = time.perf_counter()
    for ell2 in ELL2_GRID:
        run = run_kalman_experiment(config, truth, obs64, r_model="grf", ell2=ell2)
        model = make_error_model(config, op, ell2=ell2)
        rep = snyder_tau_squared(run.final_prior_cov, op, model)
        out["tau2"][ell2] = rep.tau2
        out["required"][ell2] = rep.required_ensemble
        out["med_rmse"][ell2] = float(np.median(run.rmse[FINAL90]))
        out["mode_ratio"][ell2] = normalized_mode_rmse(run.means, truth[1:], params)
    out["seconds"] = time.perf_counter() - tic
    return out


@pytest.fixture(scope="session")
def kf_true(config, truth, obs64):
    return run_kalman_experiment(config, truth, obs64, r_model="true")


@pytest.fixture(scope="session")
def pf_sweep(config, truth, obs64):
    return {ell2: run_filter_experiment(config, truth, obs64, ell2=ell2)
            for ell2 in ELL2_GRID}


@pytest.fixture(scope="session")
def crps_by_ny(config, truth):
    curves = {}
    for ny in (16, 128):
        obs = generate_observations(config, truth, ny)
        curves[ny] = {ell2: float(np.median(
            run_filter_experiment(config, truth, obs, ell2=ell2).crps))
            for ell2 in ELL2_GRID}
    return curves


@pytest.fixture(scope="session")
def crps_by_ne(config, truth, obs64):
    sizes = (100, 200, 400, 800, 1600)
    return {ne: float(np.mean(
        run_filter_experiment(config, truth, obs64, ell2=0.3, n_particles=ne).crps))
        for ne in sizes}


def _ess_stats(config, truth, obs64, runs=None):
    meds, mean1 = {}, None
    for ell2 in (0.0, 0.3, 1.0):
        run = runs[ell2] if runs is not None else \
            run_filter_experiment(config, truth, obs64, ell2=ell2)
        meds[ell2] = float(np.median(run.ess))
        if ell2 == 1.0:
            mean1 = float(np.mean(run.ess))
    return meds[0.3] / meds[0.0], meds[1.0] / meds[0.0], mean1 / config.n_particles


def test_criterion_1_tau_sweep(kf_sweep):
    taus = [kf_sweep["tau2"][e] for e in ELL2_GRID]
    t0, t1 = taus[0], taus[-1]
    in_window_0 = 90.0 <= t0 <= 150.0
    in_window_1 = 13.0 <= t1 <= 23.0
    decreasing = bool(np.all(np.diff(taus) < 0.0))
    in_budget = kf_sweep["seconds"] <= 600.0
    detail = (f"tau2(0)={t0:.1f} (target [90,150]: {'ok' if in_window_0 else 'OUT'}), "
              f"tau2(1)={t1:.1f} (target [13,23]: {'ok' if in_window_1 else 'OUT'}), "
              f"strictly decreasing over 11 points: {decreasing}, "
              f"sweep time {kf_sweep['seconds']:.0f}s (budget 600s: "
              f"{'ok' if in_budget else 'OUT'}); "
              f"required ensemble {kf_sweep['required'][0.0]:.2e} -> "
              f"{kf_sweep['required'][1.0]:.2e}")
    ok = in_window_0 and in_window_1 and decreasing and in_budget
    report("1 tau^2 sweep", ok, detail)
    assert ok, detail


def test_mode_errors_approach_climatology_faster_with_smoothing(kf_sweep):
    # companion check to the tau^2 sweep: raising ell2 pushes the normalized
    # per-mode error of the reference mean toward 1 on the observable small
    # scales (modes 10..32 with 64 observations)
    band = slice(10, 33)
    r0 = float(np.mean(kf_sweep["mode_ratio"][0.0][band]))
    r4 = float(np.mean(kf_sweep["mode_ratio"][0.4][band]))
    ok = r4 > r0
    report("mode-error companion", ok,
           f"mean normalized mode error over modes 10-32: {r0:.3f} at ell2=0 "
           f"-> {r4:.3f} at ell2=0.4 (expected to increase)")
    assert ok


def test_criterion_2_ess_improvement(config, truth, obs64, pf_sweep):
    r03, r10, frac1 = _ess_stats(config, truth, obs64, runs=pf_sweep)
    trials = [(r03, r10, frac1)]
    ok_single = r03 >= 5.0 and r10 >= 15.0 and 0.05 <= frac1 <= 0.30
    if not ok_single:
        # marginal failure path: two more independent seed triples
        for shift in (100, 200):
            alt = replace(config, truth_seed=config.truth_seed + shift,
                          obs_seed=config.obs_seed + shift,
                          filter_seed=config.filter_seed + shift)
            alt_truth = generate_truth(alt)
            alt_obs = generate_observations(alt, alt_truth)
            trials.append(_ess_stats(alt, alt_truth, alt_obs))
    r03_med = float(np.median([t[0] for t in trials]))
    r10_med = float(np.median([t[1] for t in trials]))
    frac_med = float(np.median([t[2] for t in trials]))
    ok = r03_med >= 5.0 and r10_med >= 15.0 and 0.05 <= frac_med <= 0.30
    detail = (f"median over {len(trials)} seed(s): ESS(0.3)/ESS(0)={r03_med:.2f} "
              f"(target >=5), ESS(1)/ESS(0)={r10_med:.2f} (target >=15), "
              f"mean ESS(1)/N_e={100 * frac_med:.1f}% (target 5-30%)")
    report("2 ESS improvement", ok, detail)
    assert ok, detail


def test_criterion_3_rmse_below_obs_error(pf_sweep):
    assert all(run.n_cycles == 100 for run in pf_sweep.values())
    meds = {e: float(np.median(run.rmse[FINAL90])) for e, run in pf_sweep.items()}
    worst = max(meds, key=meds.get)
    ok = all(v < 0.6 for v in meds.values())
    detail = (f"median RMSE (final 90 cycles) across 11 ell2 values in "
              f"[{min(meds.values()):.3f}, {meds[worst]:.3f}] "
              f"(worst at ell2={worst}); target < 0.6 everywhere")
    report("3 RMSE robustness", ok, detail)
    assert ok, detail


def test_criterion_4_kalman_baseline(kf_true, pf_sweep):
    kf_med = float(np.median(kf_true.rmse[FINAL90]))
    in_window = 0.24 <= kf_med <= 0.40
    pf_meds = {e: float(np.median(run.rmse[FINAL90])) for e, run in pf_sweep.items()}
    beats_pf = all(kf_med < v for v in pf_meds.values())
    ok = in_window and beats_pf
    detail = (f"KF(true R) median RMSE={kf_med:.3f} (target [0.24,0.40]); "
              f"KF < PF at every ell2: {beats_pf} "
              f"(min PF median {min(pf_meds.values()):.3f})")
    report("4 Kalman baseline", ok, detail)
    assert ok, detail


def test_criterion_5_crps_improvement(pf_sweep, crps_by_ny):
    c0 = float(np.median(pf_sweep[0.0].crps))
    c03 = float(np.median(pf_sweep[0.3].crps))
    improved = c03 <= 0.9 * c0
    optimum_16 = min(crps_by_ny[16], key=crps_by_ny[16].get)
    optimum_128 = min(crps_by_ny[128], key=crps_by_ny[128].get)
    ordered = optimum_128 > optimum_16
    curve64 = {e: float(np.median(run.crps)) for e, run in pf_sweep.items()}
    argmin64 = min(curve64, key=curve64.get)
    ok = improved and ordered
    detail = (f"N_y=64 pooled-median CRPS {c0:.4f} -> {c03:.4f} at ell2=0.3 "
              f"({100 * (1 - c03 / c0):.1f}% better; target >=10%); "
              f"optimal ell2: N_y=128 at {optimum_128} vs N_y=16 at {optimum_16} "
              f"(target: 128 > 16); N_y=64 argmin at ell2={argmin64} (info)")
    report("5 CRPS improvement", ok, detail)
    assert ok, detail


def test_criterion_6_spread_recovery(pf_sweep):
    def ratio(run):
        return float(np.mean(run.spread) / np.mean(run.rmse))

    r0, r1 = ratio(pf_sweep[0.0]), ratio(pf_sweep[1.0])
    ok = r1 >= 1.5 * r0
    detail = (f"time-averaged spread/RMSE: {r0:.3f} at ell2=0 -> {r1:.3f} at "
              f"ell2=1 (ratio {r1 / r0:.2f}; target >=1.5)")
    report("6 spread recovery", ok, detail)
    assert ok, detail


def test_criterion_7_ensemble_size_sweep(crps_by_ne):
    sizes = sorted(crps_by_ne)
    values = [crps_by_ne[ne] for ne in sizes]
    ok = all(values[i + 1] <= 1.02 * values[i] for i in range(len(values) - 1))
    detail = "mean pooled CRPS by N_e " + ", ".join(
        f"{ne}:{v:.4f}" for ne, v in zip(sizes, values)) + \
        " (target nonincreasing with 2% slack)"
    report("7 ensemble-size sweep", ok, detail)
    assert ok, detail


def test_criterion_8_property_suites(tmp_path):
    tic = time.perf_counter()
    failures = []

    # (a) quadratic form: tridiagonal vs spectral vs smoothing factor
    rng = np.random.default_rng(0)
    op = ObservationOperator(n_grid=2048, n_obs=64)
    models = [GrfErrorModel.for_operator(op, ell2=e, kappa=k)
              for e, k in ((0.0, 1.0), (0.2, 1.0), (1.0, 1.0), (0.4, 2.0), (0.7, 0.5))]
    for model in models:
        smoother = smoothing_factor(model)
        for _ in range(100):
            d = rng.standard_normal(model.n_obs)
            ref = grf_quadratic_form(model, d)
            spec = float(grf_quadratic_forms(model, d))
            sm = smoother.apply(d / np.sqrt(model.r0))
            if abs(spec - ref) > 1e-8 * max(ref, 1e-10) or \
               abs(float(sm @ sm) - ref) > 1e-8 * max(ref, 1e-10):
                failures.append("quadratic-form routes disagree")
                break

    # (b) CRPS energy form vs integration oracle, 1000 samples
    rng = np.random.default_rng(1)
    for _ in range(1000):
        n = int(rng.integers(1, 10))
        values = rng.standard_normal(n)
        w = rng.uniform(0.05, 1.0, n)
        w /= w.sum()
        y = rng.standard_normal()
        a = crps_weighted(WeightedSample(values, w), y)
        b = crps_quadrature(values, w, y)
        if abs(a - b) > 1e-6:
            failures.append("CRPS energy form vs integration oracle")
            break

    # (c) transition moments vs closed form, Monte Carlo at 5 sigma
    params = ModelParams(n_grid=16)
    start = sample_stationary(params, RngStream(3).child(0)).coeffs
    m = 100_000
    out = propagate_coeffs(np.tile(start, (m, 1)), 0.05, params,
                           RngStream(3).child(1).generator())
    k = 3
    theta = mode_rate(k, params)
    q = noise_amplitude(k) ** 2 * (1 - np.exp(-2 * theta.real * 0.05)) / (2 * theta.real)
    dev = out[:, k] - start[k] * np.exp(-theta * 0.05)
    if abs(np.mean(dev.real)) > 5 * np.sqrt(q / 2 / m) or \
       abs(np.mean(np.abs(dev) ** 2) - q) > 5 * q / np.sqrt(m):
        failures.append("transition moments off closed form")

    # (d) commuting case lambda^2 = sigma^2/gamma^2 vs dense eigensolve
    n = 16
    params16 = ModelParams(n_grid=n)
    op_full = ObservationOperator(n_grid=n, n_obs=n)
    model = GrfErrorModel.for_operator(op_full, ell2=0.4)
    prior = stationary_covariance_matrix(params16)
    sigma2 = np.fft.fft(prior[:, 0]).real
    expected = np.sort(sigma2 / grf_spectrum(model))
    got = np.sort(snyder_tau_squared(prior, op_full, model).lambda2)
    if np.max(np.abs(got - expected)) > 1e-8 * max(expected.max(), 1.0):
        failures.append("commuting-case eigenvalues off")

    # (e) power-law tails
    discrete, integral = powerlaw_tau(-2.0, -4.0, 512)
    if abs(discrete - 0.3 * 512**5) > 0.10 * 0.3 * 512**5:
        failures.append("steep power-law sum out of range")
    _, flat_integral = powerlaw_tau(-2.0, 0.0, 10**6)
    if abs(flat_integral - 1.5) > 1e-3:
        failures.append("flat power-law integral not 3/2")

    # (f) KF update: PSD ordering and per-mode agreement
    state = GaussianState(np.zeros(n), prior)
    obs = ObservationSet(np.ones(n), op_full, time_index=1)
    post = kf_update(state, obs, model)
    if np.min(np.linalg.eigvalsh(prior - post.cov)) < -1e-8 * np.max(np.abs(prior)):
        failures.append("KF update violated PSD ordering")
    post_spec = np.fft.fft(post.cov[:, 0]).real
    gamma2 = grf_spectrum(model)
    for k in range(n):
        ref = mode_posterior_stats(sigma2[k], gamma2[k], 0.0, 0.0).variance
        if abs(post_spec[k] - ref) > 1e-10 * max(ref, 1.0):
            failures.append("KF update disagrees with mode algebra")
            break

    # (g) ESS and resampling invariants
    lw = normalize_log_weights(np.random.default_rng(2).standard_normal(50))
    ens = Ensemble(np.zeros((50, 16), dtype=complex), lw)
    ess = effective_sample_size(ens)
    if not (1.0 - 1e-9 <= ess <= 50 + 1e-9):
        failures.append("ESS out of bounds")
    shifted = normalize_log_weights(lw + 17.0)
    if np.max(np.abs(np.exp(shifted) - np.exp(lw))) > 1e-12:
        failures.append("ESS not scale invariant")
    uniform = Ensemble(np.zeros((50, 16), dtype=complex), np.full(50, -np.log(50.0)))
    if abs(effective_sample_size(uniform) - 50.0) > 1e-9:
        failures.append("uniform ESS not N_e")
    onehot = np.full(50, -1e6)
    onehot[7] = 0.0
    degenerate = Ensemble(np.zeros((50, 16), dtype=complex),
                          normalize_log_weights(onehot))
    resampled = resample_multinomial(degenerate, RngStream(11).child(0))
    if abs(effective_sample_size(degenerate) - 1.0) > 1e-6 or \
       np.max(np.abs(resampled.log_weights + np.log(50.0))) > 1e-12:
        failures.append("one-hot resampling invariants broken")

    # (h) determinism: repeated seeded sweeps are byte identical
    cfg = replace(ExperimentConfig(), n_grid=128, n_cycles=5, n_obs=16,
                  n_particles=10)
    blobs = []
    for name in ("d1", "d2"):
        out_dir = tmp_path / name
        sweep_and_emit(cfg, SweepSpec(axis="ell2", values=(0.0, 0.5)), str(out_dir))
        blobs.append(b"".join(sorted((out_dir / f).read_bytes()
                                     for f in ("ess.csv", "rmse.csv", "crps.csv",
                                               "tau2.csv"))))
    if blobs[0] != blobs[1]:
        failures.append("seeded runs not byte-identical")

    elapsed = time.perf_counter() - tic
    ok = not failures and elapsed < 120.0
    detail = (f"8 sub-suites in {elapsed:.0f}s (budget 120s)" if ok else
              f"failures: {failures or 'none'}; elapsed {elapsed:.0f}s")
    report("8 property suites", ok, detail)
    assert ok, detail
