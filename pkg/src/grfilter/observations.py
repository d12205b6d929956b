"""Synthetic observations and observation-error covariance models.

Observations sample the grid field at a uniform stride and carry additive
Gaussian noise.  Two error covariances appear:

* the true generating covariance, with variance 0.36 and exponentially
  decaying spatial correlations, used only to synthesize observations;
* the assimilation surrogate, a circulant family whose variance grows with
  wavenumber.  It is the periodic second-order finite difference of
  r0 * (1 - ell^2 Laplacian)^kappa on the observation grid, so its inverse
  applies in O(N log N) through either a cyclic tridiagonal solve (kappa=1)
  or spectral division (any kappa), and it admits an equivalent smoothing
  operator S with C^{-1} = S^T S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dynamics import RngStream

__all__ = [
    "ObservationOperator",
    "TrueErrorModel",
    "GrfErrorModel",
    "ObservationSet",
    "CirculantOperator",
    "true_error_covariance",
    "observe_truth",
    "grf_spectrum",
    "grf_matrix",
    "grf_dense",
    "grf_solve",
    "grf_quadratic_form",
    "grf_quadratic_forms",
    "smoothing_factor",
    "smoothed_weight_exponent",
]


@dataclass(frozen=True)
class ObservationOperator:
    """Point sampling of the grid field at every ``stride``-th location."""

    n_grid: int
    n_obs: int
    domain_length: float = 2.0 * np.pi

    def __post_init__(self) -> None:
        if self.n_obs < 1 or self.n_grid < 1:
            raise ValueError("n_obs and n_grid must be positive")
        if self.n_grid % self.n_obs != 0:
            raise ValueError(
                f"n_obs={self.n_obs} does not divide n_grid={self.n_grid}"
            )

    @property
    def stride(self) -> int:
        return self.n_grid // self.n_obs

    @property
    def obs_indices(self) -> np.ndarray:
        return np.arange(self.n_obs) * self.stride

    @property
    def delta(self) -> float:
        return self.domain_length / self.n_obs

    @property
    def positions(self) -> np.ndarray:
        return self.obs_indices * (self.domain_length / self.n_grid)

    def apply(self, grid_values: np.ndarray) -> np.ndarray:
        """Restrict grid rows (..., n_grid) to the observed locations."""
        grid_values = np.asarray(grid_values)
        if grid_values.shape[-1] != self.n_grid:
            raise ValueError("field length does not match n_grid")
        return grid_values[..., self.obs_indices]


@dataclass(frozen=True)
class TrueErrorModel:
    """Generating error law: variance 0.36, correlations exp(-distance/0.06)."""

    variance: float = 0.36
    corr_length: float = 0.06

    def __post_init__(self) -> None:
        if self.variance <= 0.0:
            raise ValueError("variance must be positive")
        if self.corr_length <= 0.0:
            raise ValueError("corr_length must be positive")


@dataclass(frozen=True)
class ObservationSet:
    """Observed values at one assimilation time."""

    values: np.ndarray
    operator: ObservationOperator
    time_index: int = 0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.operator.n_obs,):
            raise ValueError("values length must equal the operator's n_obs")
        object.__setattr__(self, "values", v)


def true_error_covariance(op: ObservationOperator, model: TrueErrorModel) -> np.ndarray:
    """Dense covariance of the generating noise between observation sites.

    Distances are the shortest way around the periodic domain, so the matrix
    is circulant and symmetric positive definite.
    """
    i = np.arange(op.n_obs)
    steps = np.abs(i[:, None] - i[None, :])
    steps = np.minimum(steps, op.n_obs - steps)
    dist = steps * op.delta
    return model.variance * np.exp(-dist / model.corr_length)


def observe_truth(truth_grid: np.ndarray, op: ObservationOperator,
                  model: TrueErrorModel, rng: RngStream,
                  time_index: int = 0) -> ObservationSet:
    """Sample y = H(truth) + eta with eta drawn from the true error law.

    The noise is generated through a Cholesky factor of the covariance, so
    its sample statistics match ``true_error_covariance`` exactly in law.
    """
    cov = true_error_covariance(op, model)
    chol = np.linalg.cholesky(cov)
    z = rng.generator().standard_normal(op.n_obs)
    values = op.apply(np.asarray(truth_grid, dtype=float)) + chol @ z
    return ObservationSet(values, op, time_index)


@dataclass(frozen=True)
class GrfErrorModel:
    """Surrogate observation-error covariance with growing small-scale variance.

    R = r0 * C where C discretizes (1 - ell^2 Laplacian)^kappa on the periodic
    observation grid of spacing delta.  At ell2=0 the model collapses to the
    diagonal r0 * I; the constant mode keeps variance r0 for every ell2.
    """

    n_obs: int
    delta: float
    ell2: float = 0.0
    kappa: float = 1.0
    r0: float = 0.36

    def __post_init__(self) -> None:
        if self.n_obs < 1:
            raise ValueError("n_obs must be positive")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.ell2 < 0.0:
            raise ValueError("ell2 must be nonnegative")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.r0 <= 0.0:
            raise ValueError("r0 must be positive")

    @classmethod
    def for_operator(cls, op: ObservationOperator, ell2: float = 0.0,
                     kappa: float = 1.0, r0: float = 0.36) -> "GrfErrorModel":
        return cls(n_obs=op.n_obs, delta=op.delta, ell2=ell2, kappa=kappa, r0=r0)


def grf_spectrum(model: GrfErrorModel) -> np.ndarray:
    """Eigenvalues of R on the discrete Fourier modes m = 0 .. N-1.

    eigenvalue(m) = r0 * (1 + 2 (ell^2/delta^2) (1 - cos(2 pi m / N)))^kappa,
    nondecreasing in the folded wavenumber min(m, N-m) and equal to r0 at m=0.
    """
    m = np.arange(model.n_obs)
    ratio = model.ell2 / model.delta**2
    base = 1.0 + 2.0 * ratio * (1.0 - np.cos(2.0 * np.pi * m / model.n_obs))
    return model.r0 * base**model.kappa


def grf_matrix(model: GrfErrorModel) -> np.ndarray:
    """Dense periodic tridiagonal form of R, available for kappa = 1 only.

    Diagonal entries are r0 (1 + 2 ell^2/delta^2); the nearest-neighbour
    entries, including the periodic corners, are -r0 ell^2/delta^2, the
    centered second-difference weights of -ell^2 d^2/dx^2.
    """
    if model.kappa != 1.0:
        raise ValueError("tridiagonal form requires kappa=1; use grf_spectrum")
    n = model.n_obs
    if n < 3:
        raise ValueError("tridiagonal form needs at least 3 observations")
    ratio = model.ell2 / model.delta**2
    diag = model.r0 * (1.0 + 2.0 * ratio)
    off = -model.r0 * ratio
    mat = np.zeros((n, n))
    np.fill_diagonal(mat, diag)
    idx = np.arange(n - 1)
    mat[idx, idx + 1] = off
    mat[idx + 1, idx] = off
    mat[0, n - 1] = off
    mat[n - 1, 0] = off
    return mat


def grf_dense(model: GrfErrorModel) -> np.ndarray:
    """Dense R for any kappa, synthesized from the circulant eigenvalues."""
    col = np.fft.ifft(grf_spectrum(model)).real
    return scipy.linalg.circulant(col)


def _solve_cyclic_tridiagonal(diag: float, off: float, rhs: np.ndarray) -> np.ndarray:
    """Solve the symmetric periodic tridiagonal system via a corner correction.

    The periodic corners are folded into a rank-one update of an ordinary
    tridiagonal matrix, which two banded solves plus the Sherman-Morrison
    identity undo.
    """
    n = rhs.shape[0]
    gamma = -diag
    d = np.full(n, diag)
    d[0] -= gamma
    d[-1] -= off * off / gamma
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = d
    ab[2, :-1] = off
    y = scipy.linalg.solve_banded((1, 1), ab, rhs)
    u = np.zeros(n)
    u[0] = gamma
    u[-1] = off
    q = scipy.linalg.solve_banded((1, 1), ab, u)
    vy = y[0] + (off / gamma) * y[-1]
    vq = q[0] + (off / gamma) * q[-1]
    return y - q * (vy / (1.0 + vq))


def grf_solve(model: GrfErrorModel, d: np.ndarray) -> np.ndarray:
    """Apply R^{-1} to a vector: cyclic tridiagonal for kappa=1, else spectral."""
    d = np.asarray(d, dtype=float)
    if d.shape != (model.n_obs,):
        raise ValueError("vector length must equal n_obs")
    if model.kappa == 1.0 and model.n_obs >= 3:
        ratio = model.ell2 / model.delta**2
        return _solve_cyclic_tridiagonal(
            model.r0 * (1.0 + 2.0 * ratio), -model.r0 * ratio, d
        )
    return np.fft.ifft(np.fft.fft(d) / grf_spectrum(model)).real


def grf_quadratic_form(model: GrfErrorModel, d: np.ndarray) -> float:
    """d^T R^{-1} d, the squared observation-space mismatch under the model."""
    d = np.asarray(d, dtype=float)
    value = float(d @ grf_solve(model, d))
    if not np.isfinite(value) or value < -1e-9 * max(1.0, float(d @ d)):
        raise RuntimeError("quadratic-form solve broke down")
    return max(value, 0.0)


def grf_quadratic_forms(model: GrfErrorModel, ds: np.ndarray) -> np.ndarray:
    """Batched d^T R^{-1} d over rows (..., n_obs), via spectral division.

    Agrees with :func:`grf_quadratic_form` to solver tolerance and is the
    form used in the particle-weight hot loop.
    """
    ds = np.asarray(ds, dtype=float)
    if ds.shape[-1] != model.n_obs:
        raise ValueError("vector length must equal n_obs")
    spec = np.abs(np.fft.fft(ds, axis=-1)) ** 2
    return np.sum(spec / grf_spectrum(model), axis=-1) / model.n_obs


@dataclass(frozen=True)
class CirculantOperator:
    """Real circulant operator given by its eigenvalues on DFT modes."""

    symbol: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "symbol", np.asarray(self.symbol, dtype=float))

    @property
    def n(self) -> int:
        return self.symbol.shape[0]

    def apply(self, d: np.ndarray) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        return np.fft.ifft(np.fft.fft(d, axis=-1) * self.symbol, axis=-1).real

    def matrix(self) -> np.ndarray:
        return scipy.linalg.circulant(np.fft.ifft(self.symbol).real)


def smoothing_factor(model: GrfErrorModel) -> CirculantOperator:
    """Smoothing operator S with S^T S = C^{-1}, where R = r0 * C.

    Built spectrally as C^{-1/2}: symmetric, circulant, and the identity at
    ell2=0.  |S R0^{-1/2} d|^2 reproduces the quadratic form d^T R^{-1} d.
    """
    return CirculantOperator((grf_spectrum(model) / model.r0) ** -0.5)


def smoothed_weight_exponent(model: GrfErrorModel, op: ObservationOperator,
                             obs: ObservationSet, state_grid: np.ndarray) -> float:
    """Log-likelihood exponent -0.5 |S R0^{-1/2} (y - H x)|^2.

    Identical (to roundoff) to -0.5 * grf_quadratic_form on the innovation:
    smoothing the whitened innovation and assuming independent unit errors is
    the same update as using the full surrogate covariance.
    """
    innovation = obs.values - op.apply(np.asarray(state_grid, dtype=float))
    smoothed = smoothing_factor(model).apply(innovation / np.sqrt(model.r0))
    return -0.5 * float(smoothed @ smoothed)
