"""Verification metrics for weighted ensembles against a known truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import ModelParams, stationary_scale

__all__ = [
    "WeightedSample",
    "BoxplotSummary",
    "rmse",
    "crps_weighted",
    "crps_field",
    "crps_field_values",
    "ensemble_spread",
    "weighted_spread",
    "normalized_mode_rmse",
    "summarize_boxplot",
]


@dataclass(frozen=True)
class WeightedSample:
    """Scalar sample values with normalized nonnegative weights."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if v.shape != w.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and weights must be matching nonempty 1-D arrays")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(np.sum(w) - 1.0) > 1e-12 * max(1.0, v.size):
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class BoxplotSummary:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    n_outliers: int


def rmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Root mean square pointwise difference over the spatial grid."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError("fields must have equal length")
    return float(np.sqrt(np.mean((estimate - truth) ** 2)))


def crps_field_values(member_values: np.ndarray, weights: np.ndarray,
                      truth_values: np.ndarray) -> np.ndarray:
    """CRPS of the weighted empirical forecast at each grid point.

    Energy form, sum_i w_i |x_i - y| - 0.5 sum_ij w_i w_j |x_i - x_j|,
    evaluated through the sorted-cumulative identity in O(N log N) per point:
    the pairwise double sum equals the integral of F(1-F), which is piecewise
    constant between order statistics.
    """
    member_values = np.asarray(member_values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    truth_values = np.asarray(truth_values, dtype=float)
    if member_values.ndim != 2:
        raise ValueError("member_values must be (n_members, n_points)")
    order = np.argsort(member_values, axis=0)
    xs = np.take_along_axis(member_values, order, axis=0)
    ws = weights[order]
    term1 = np.sum(ws * np.abs(xs - truth_values[None, :]), axis=0)
    cum = np.cumsum(ws, axis=0)[:-1]
    term2 = np.sum(cum * (1.0 - cum) * np.diff(xs, axis=0), axis=0)
    return term1 - term2


def crps_weighted(sample: WeightedSample, obs: float) -> float:
    """CRPS of a weighted scalar sample against a single verifying value."""
    values = crps_field_values(sample.values[:, None], sample.weights,
                               np.array([float(obs)]))
    return float(values[0])


def crps_field(ens, truth_grid: np.ndarray) -> np.ndarray:
    """Per-gridpoint CRPS of a spectral ensemble against the true grid field."""
    return crps_field_values(ens.member_grids(), ens.weights,
                             np.asarray(truth_grid, dtype=float))


def weighted_spread(member_values: np.ndarray, weights: np.ndarray) -> float:
    """Square root of the spatially averaged weighted ensemble variance."""
    member_values = np.asarray(member_values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    mean = weights @ member_values
    var = weights @ member_values**2 - mean**2
    return float(np.sqrt(np.mean(np.maximum(var, 0.0))))


def ensemble_spread(ens) -> float:
    """Spread of a spectral ensemble; zero for a single member."""
    if ens.n_members == 1:
        return 0.0
    return weighted_spread(ens.member_grids(), ens.weights)


def normalized_mode_rmse(mean_series: np.ndarray, truth_series: np.ndarray,
                         params: ModelParams, n_modes: int = 50) -> np.ndarray:
    """Time-averaged per-mode error of an estimate, in climatological units.

    For each of the first n_modes Fourier coefficients, the root mean square
    (over time) difference between the estimated and true coefficients,
    divided by that mode's stationary standard deviation.  A useless estimate
    that always returns zero scores 1 in expectation at every mode.
    """
    mean_series = np.asarray(mean_series, dtype=float)
    truth_series = np.asarray(truth_series, dtype=float)
    if mean_series.shape != truth_series.shape:
        raise ValueError("series must be aligned with equal shapes")
    n = mean_series.shape[1]
    err = (np.fft.rfft(mean_series, axis=1) - np.fft.rfft(truth_series, axis=1)) / n
    rms = np.sqrt(np.mean(np.abs(err[:, :n_modes]) ** 2, axis=0))
    return rms / stationary_scale(np.arange(n_modes), params)


def summarize_boxplot(series: np.ndarray) -> BoxplotSummary:
    """Median, quartiles, 1.5*IQR whiskers, and outlier count of a series.

    Quartiles use linear interpolation between order statistics; whiskers sit
    on the most extreme data points within 1.5*IQR of the quartiles.
    """
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("series must be nonempty")
    q1, med, q3 = np.percentile(x, [25.0, 50.0, 75.0])
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    inside = x[(x >= lo_fence) & (x <= hi_fence)]
    n_outliers = int(x.size - inside.size)
    return BoxplotSummary(median=float(med), q1=float(q1), q3=float(q3),
                          whisker_low=float(np.min(inside)),
                          whisker_high=float(np.max(inside)),
                          n_outliers=n_outliers)
