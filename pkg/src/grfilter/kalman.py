"""Exact Kalman filtering for the linear testbed, plus collapse diagnostics.

On this linear Gaussian problem the Kalman filter is the optimal filter, so
it serves both as the accuracy reference and as the source of the forecast
covariance that feeds the effective-dimension diagnostic: the ensemble size a
bootstrap particle filter needs to avoid weight collapse scales like
exp(tau^2 / 2) with

    tau^2 = sum_k lambda_k^2 (1.5 lambda_k^2 + 1),

where lambda_k^2 are the eigenvalues of R^{-1/2} H P H^T R^{-1/2} for the
forecast covariance P and observation-error covariance R.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.linalg

from .dynamics import (
    ModelParams,
    decay_factors,
    stationary_covariance_matrix,
    transition_noise_covariance_matrix,
)
from .metrics import rmse
from .observations import GrfErrorModel, ObservationOperator, ObservationSet, grf_spectrum

__all__ = [
    "GaussianState",
    "ModePosterior",
    "TauReport",
    "KfRun",
    "kf_forecast",
    "kf_update",
    "run_kf",
    "mode_posterior_stats",
    "snyder_tau_squared",
    "powerlaw_tau",
]


@dataclass
class GaussianState:
    """Grid-space Gaussian belief: mean vector and dense covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (n, n):
            raise ValueError("mean must be (n,) and cov (n, n)")


@dataclass(frozen=True)
class ModePosterior:
    """Scalar-mode posterior from conjugate Gaussian algebra."""

    mean: complex
    variance: float


@dataclass(frozen=True)
class TauReport:
    """Effective-dimension diagnostic: spectrum, tau^2, and implied ensemble size."""

    lambda2: np.ndarray
    tau2: float
    required_ensemble: float


@dataclass
class KfRun:
    """Per-cycle Kalman record; full covariances kept for the final step only."""

    means: np.ndarray          # (n_cycles, n_grid) posterior means
    prior_trace: np.ndarray
    post_trace: np.ndarray
    final_prior_cov: np.ndarray
    final_post_cov: np.ndarray
    rmse: np.ndarray | None = None


_FFT_WORKERS = 2


@lru_cache(maxsize=8)
def _cached_noise_cov(params: ModelParams, dt: float) -> np.ndarray:
    return transition_noise_covariance_matrix(params, dt)


def kf_forecast(state: GaussianState, dt: float, params: ModelParams) -> GaussianState:
    """Propagate mean and covariance exactly through the linear dynamics.

    The transition matrix A is diagonal in Fourier space, so the covariance
    map A P A^T runs as one transform-scale-transform sweep in O(n^2 log n)
    instead of dense O(n^3) products; the process noise adds the circulant
    transition covariance for the step.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    n = params.n_grid
    if state.mean.shape[0] != n:
        raise ValueError("state size does not match params.n_grid")
    if dt == 0.0:
        return GaussianState(state.mean.copy(), state.cov.copy())
    dec = decay_factors(params, dt)
    dec_half = dec[: n // 2 + 1]
    mean = np.fft.irfft(np.fft.rfft(state.mean) * dec_half, n=n)
    spec = scipy.fft.rfft2(state.cov, workers=_FFT_WORKERS)
    spec *= dec[:, None] * dec_half[None, :]
    cov = scipy.fft.irfft2(spec, s=(n, n), workers=_FFT_WORKERS)
    cov += _cached_noise_cov(params, dt)
    return GaussianState(mean, cov)


def _dense_r(r, op: ObservationOperator) -> np.ndarray:
    if isinstance(r, GrfErrorModel):
        from .observations import grf_dense

        if r.n_obs != op.n_obs:
            raise ValueError("error model size does not match operator")
        return grf_dense(r)
    r = np.asarray(r, dtype=float)
    if r.shape != (op.n_obs, op.n_obs):
        raise ValueError("R must be (n_obs, n_obs)")
    return r


def kf_update(state: GaussianState, obs: ObservationSet, r) -> GaussianState:
    """Measurement update with gain K = P H^T (R + H P H^T)^{-1}.

    ``r`` may be a dense matrix or a GrfErrorModel.  The posterior covariance
    (I - K H) P is symmetrized before return to clear roundoff skew.
    """
    op = obs.operator
    stride = op.stride
    r_mat = _dense_r(r, op)
    cov_rows = np.ascontiguousarray(state.cov[::stride])   # H P, uniform-stride H
    innov_cov = cov_rows[:, ::stride] + r_mat
    try:
        gain = scipy.linalg.solve(innov_cov, cov_rows, assume_a="pos").T
    except np.linalg.LinAlgError as exc:  # pragma: no cover - SPD by construction
        raise RuntimeError("innovation covariance is not invertible") from exc
    mean = state.mean + gain @ (obs.values - state.mean[::stride])
    cov = state.cov - gain @ cov_rows
    cov = 0.5 * (cov + cov.T)
    return GaussianState(mean, cov)


def run_kf(observations: list[ObservationSet], params: ModelParams, r,
           truth_grid: np.ndarray | None = None, dt: float | None = None) -> KfRun:
    """Alternate forecast/update cycles starting from the stationary prior."""
    n_cycles = len(observations)
    if n_cycles == 0:
        raise ValueError("no observations supplied")
    if dt is None:
        raise ValueError("assimilation interval dt is required")
    for j, obs in enumerate(observations):
        if obs.time_index != j + 1:
            raise ValueError("observation time indices must run 1..n_cycles")
    if truth_grid is not None:
        truth_grid = np.asarray(truth_grid, dtype=float)
        if truth_grid.shape != (n_cycles + 1, params.n_grid):
            raise ValueError("truth_grid must have n_cycles+1 rows of n_grid values")

    state = GaussianState(np.zeros(params.n_grid), stationary_covariance_matrix(params))
    means = np.empty((n_cycles, params.n_grid))
    prior_trace = np.empty(n_cycles)
    post_trace = np.empty(n_cycles)
    errs = np.empty(n_cycles) if truth_grid is not None else None
    final_prior = None
    for j, obs in enumerate(observations):
        state = kf_forecast(state, dt, params)
        prior_trace[j] = np.trace(state.cov)
        if j == n_cycles - 1:
            final_prior = state.cov.copy()
        state = kf_update(state, obs, r)
        post_trace[j] = np.trace(state.cov)
        means[j] = state.mean
        if errs is not None:
            errs[j] = rmse(state.mean, truth_grid[j + 1])
    return KfRun(means=means, prior_trace=prior_trace, post_trace=post_trace,
                 final_prior_cov=final_prior, final_post_cov=state.cov, rmse=errs)


def mode_posterior_stats(sigma2: float, gamma2: float,
                         x_hat: complex, y_hat: complex) -> ModePosterior:
    """Posterior of one Fourier mode from prior (x_hat, sigma2) and obs (y_hat, gamma2).

    gamma2 may be infinite (uninformative: posterior equals prior) or zero
    (perfect observation).  A doubly degenerate sigma2 = gamma2 = 0 returns
    the prior mean with zero variance.
    """
    if sigma2 < 0.0:
        raise ValueError("sigma2 must be nonnegative")
    if gamma2 < 0.0:
        raise ValueError("gamma2 must be nonnegative")
    if np.isinf(gamma2) or (sigma2 == 0.0 and gamma2 == 0.0):
        return ModePosterior(mean=complex(x_hat), variance=float(sigma2))
    gain = sigma2 / (sigma2 + gamma2)
    mean = x_hat + gain * (y_hat - x_hat)
    variance = sigma2 * gamma2 / (sigma2 + gamma2)
    return ModePosterior(mean=complex(mean), variance=float(variance))


def _inv_sqrt(r, op: ObservationOperator) -> np.ndarray:
    """Symmetric R^{-1/2}: spectral for circulant models, eigen otherwise."""
    if isinstance(r, GrfErrorModel):
        symbol = grf_spectrum(r) ** -0.5
        col = np.fft.ifft(symbol).real
        return scipy.linalg.circulant(col)
    r = np.asarray(r, dtype=float)
    vals, vecs = np.linalg.eigh(r)
    if np.min(vals) <= 0.0:
        raise ValueError("R must be positive definite")
    return (vecs * vals**-0.5) @ vecs.T


def snyder_tau_squared(prior_cov: np.ndarray, op: ObservationOperator, r) -> TauReport:
    """Effective-dimension report from a forecast covariance and error model.

    Forms M = R^{-1/2} H P H^T R^{-1/2} with the symmetric root of R, clips
    the eigenvalue spectrum at zero (symmetrization residue only), and sums
    lambda^2 (1.5 lambda^2 + 1).
    """
    prior_cov = np.asarray(prior_cov, dtype=float)
    idx = op.obs_indices
    p_obs = prior_cov[np.ix_(idx, idx)]
    p_eigs = np.linalg.eigvalsh(p_obs)
    scale = max(float(np.max(np.abs(p_eigs))), 1e-300)
    if p_eigs[0] < -1e-10 * scale:
        raise ValueError("prior covariance is not positive semidefinite")
    root = _inv_sqrt(r, op)
    m = root @ p_obs @ root
    lam2 = np.clip(np.linalg.eigvalsh(m), 0.0, None)
    tau2 = float(np.sum(lam2 * (1.5 * lam2 + 1.0)))
    with np.errstate(over="ignore"):
        required = float(np.exp(tau2 / 2.0))
    return TauReport(lambda2=lam2, tau2=tau2, required_ensemble=required)


def _power_integral(exponent: float, n: float) -> float:
    # int_1^n k^exponent dk
    if exponent == -1.0:
        return float(np.log(n))
    return (n ** (exponent + 1.0) - 1.0) / (exponent + 1.0)


def powerlaw_tau(sigma_exponent: float, gamma_exponent: float,
                 n_obs: int) -> tuple[float, float]:
    """tau^2 for power-law spectra sigma^2 = k^a, gamma^2 = k^b, k = 1..N.

    Returns the discrete sum and its integral approximation
    int_1^N lam^2 (1.5 lam^2 + 1) dk with lam^2 = k^(a-b).  For a-b = 2 the
    integral grows like 0.3 N^5; for a-b = -2 it tends to 3/2 as N grows.
    """
    if n_obs < 1:
        raise ValueError("n_obs must be positive")
    p = sigma_exponent - gamma_exponent
    k = np.arange(1, n_obs + 1, dtype=float)
    lam2 = k**p
    discrete = float(np.sum(lam2 * (1.5 * lam2 + 1.0)))
    integral = 1.5 * _power_integral(2.0 * p, float(n_obs)) + _power_integral(p, float(n_obs))
    return discrete, float(integral)
