"""Exact spectral simulation of a damped, advected, stochastically forced line model.

The model is the linear stochastic PDE

    du/dt = (-b - c d/dx + nu d^2/dx^2) u + F_t

on a periodic domain of length 2*pi, driven by forcing that is white in time
and spatially correlated through a wavenumber-dependent amplitude.  The state
is carried as the complex Fourier coefficients u_hat(k) of the real field

    u(x) = sum_k u_hat(k) exp(i k x),    k = -n/2+1, ..., n/2,

stored in numpy fft ordering.  Each mode evolves as an independent complex
Ornstein-Uhlenbeck process with rate theta_k = b + i*k*c + nu*k**2, so state
transitions over any time step are sampled exactly from the closed-form
Gaussian transition law rather than time stepped.

Grid fields are plain float arrays of length ``n_grid`` sampled at the
equispaced points x_j = j * L / n_grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

__all__ = [
    "ModelParams",
    "RngStream",
    "SpectralField",
    "wavenumbers",
    "mode_rate",
    "noise_amplitude",
    "stationary_scale",
    "decay_factors",
    "noise_scales",
    "standard_hermitian_noise",
    "hermitian_from_half",
    "is_hermitian",
    "sample_stationary",
    "propagate",
    "propagate_coeffs",
    "spectral_to_grid",
    "grid_to_spectral",
    "climatological_variance",
    "stationary_covariance_matrix",
    "transition_noise_covariance_matrix",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ModelParams:
    """Coefficients of du = (-b - c d/dx + nu d^2/dx^2) u dt + forcing."""

    b: float = 1.0
    c: float = TWO_PI
    nu: float = 1.0 / 9.0
    domain_length: float = TWO_PI
    n_grid: int = 2048

    def __post_init__(self) -> None:
        if self.b <= 0.0:
            raise ValueError("damping rate b must be positive")
        if self.nu <= 0.0:
            raise ValueError("viscosity nu must be positive")
        n = self.n_grid
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError("n_grid must be a power of two >= 2")
        if self.domain_length <= 0.0:
            raise ValueError("domain_length must be positive")

    @property
    def grid_points(self) -> np.ndarray:
        return np.arange(self.n_grid) * (self.domain_length / self.n_grid)


@dataclass(frozen=True)
class RngStream:
    """Deterministic random stream addressed by a seed and an integer path.

    Children derived with :meth:`child` are statistically independent and do
    not depend on the order in which they are created, so per-particle and
    per-step substreams can be drawn concurrently while staying bit
    reproducible.
    """

    seed: int
    path: tuple[int, ...] = ()

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.default_rng(ss)


def wavenumbers(n_grid: int) -> np.ndarray:
    """Integer wavenumbers in numpy fft ordering: 0, 1, ..., n/2-1, -n/2, ..., -1."""
    return np.rint(np.fft.fftfreq(n_grid, d=1.0 / n_grid)).astype(int)


def mode_rate(k, params: ModelParams):
    """Complex decay rate theta_k = b + i*k*c + nu*k**2 of Fourier mode k.

    The real part b + nu*k**2 is strictly positive, so every mode is stable.
    For domains of length other than 2*pi the physical wavenumber 2*pi*k/L is
    used in the advection and diffusion terms.
    """
    k = np.asarray(k)
    if np.any(np.abs(k) > params.n_grid // 2):
        raise ValueError("wavenumber outside resolved band")
    kp = k * (TWO_PI / params.domain_length)
    theta = np.asarray(params.b + 1j * kp * params.c + params.nu * kp**2)
    return complex(theta) if theta.ndim == 0 else theta


def noise_amplitude(k):
    """Forcing amplitude zeta_k with zeta^2 = 1/(1+|k|); even in k."""
    k = np.asarray(k)
    zeta = np.asarray((1.0 + np.abs(k)) ** -0.5)
    return float(zeta) if zeta.ndim == 0 else zeta


def stationary_scale(k, params: ModelParams):
    """Root mean square magnitude of mode k under the stationary law.

    This is zeta_k / sqrt(2 * Re theta_k); squared, it is E|u_hat(k)|^2 at
    statistical equilibrium.
    """
    k = np.asarray(k)
    theta_r = np.real(mode_rate(k, params))
    scale = np.asarray(noise_amplitude(k) / np.sqrt(2.0 * theta_r))
    return float(scale) if scale.ndim == 0 else scale


def decay_factors(params: ModelParams, dt: float) -> np.ndarray:
    """Per-mode deterministic transition factors exp(-theta_k * dt), fft order.

    The Nyquist mode carries only the real decay exp(-Re theta * dt): its sine
    component vanishes on the grid, so keeping the advection phase there would
    rotate a necessarily real coefficient off the real axis.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    k = wavenumbers(params.n_grid)
    theta = mode_rate(k, params)
    dec = np.exp(-theta * dt)
    nyq = params.n_grid // 2
    dec[nyq] = np.exp(-theta[nyq].real * dt)
    return dec


def noise_scales(params: ModelParams, dt: float) -> np.ndarray:
    """Per-mode standard deviations of the transition noise over a step dt.

    Equal to zeta_k * sqrt((1 - exp(-2 Re theta_k dt)) / (2 Re theta_k)); the
    square grows from 0 at dt=0 to the stationary variance as dt -> inf.
    """
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    k = wavenumbers(params.n_grid)
    theta_r = np.real(mode_rate(k, params))
    var = noise_amplitude(k) ** 2 * (-np.expm1(-2.0 * theta_r * dt)) / (2.0 * theta_r)
    return np.sqrt(var)


def hermitian_from_half(half: np.ndarray, n_grid: int) -> np.ndarray:
    """Assemble a full fft-order spectrum from modes 0..n/2, exactly Hermitian.

    The k=0 and Nyquist entries are forced real; negative modes are written as
    explicit conjugates so that symmetry holds bit for bit.
    """
    half = np.array(half, dtype=complex)
    nyq = n_grid // 2
    if half.shape[-1] != nyq + 1:
        raise ValueError("half spectrum must have n_grid//2 + 1 entries")
    half[..., 0] = half[..., 0].real
    half[..., nyq] = half[..., nyq].real
    out = np.empty(half.shape[:-1] + (n_grid,), dtype=complex)
    out[..., : nyq + 1] = half
    out[..., nyq + 1 :] = np.conj(half[..., nyq - 1 : 0 : -1])
    return out


def standard_hermitian_noise(generator: np.random.Generator, n_grid: int, size=()) -> np.ndarray:
    """Hermitian complex noise with E|chi_k|^2 = 1 for every mode.

    Interior modes are circularly symmetric; k=0 and Nyquist come out real
    with unit variance.  Implemented as the normalized rfft of white grid
    noise, which yields exactly this law.
    """
    w = generator.standard_normal(tuple(size) + (n_grid,))
    half = np.fft.rfft(w, axis=-1) / np.sqrt(n_grid)
    return hermitian_from_half(half, n_grid)


def is_hermitian(coeffs: np.ndarray, tol: float = 0.0) -> bool:
    """Check coeffs(-k) == conj(coeffs(k)); tol=0 demands exact equality."""
    c = np.asarray(coeffs)
    mirrored = np.conj(np.roll(c[..., ::-1], 1, axis=-1))
    if tol == 0.0:
        return bool(np.array_equal(c, mirrored))
    scale = max(float(np.max(np.abs(c))), 1e-300)
    return bool(np.max(np.abs(c - mirrored)) <= tol * scale)


@dataclass(frozen=True)
class SpectralField:
    """Fourier coefficients of a real periodic field, in numpy fft ordering."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 1:
            raise ValueError("SpectralField holds a single 1-D spectrum")
        n = c.shape[0]
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError("spectrum length must be a power of two >= 2")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_grid(self) -> int:
        return self.coeffs.shape[0]

    def to_grid(self) -> np.ndarray:
        return spectral_to_grid(self)


def sample_stationary(params: ModelParams, rng: RngStream) -> SpectralField:
    """Draw one state from the stationary distribution of the model.

    Mode k >= 1 is circularly symmetric complex normal with rms magnitude
    ``stationary_scale(k)``; k=0 and Nyquist are real normals with the same
    mean square, which keeps the grid field real.
    """
    chi = standard_hermitian_noise(rng.generator(), params.n_grid)
    scales = stationary_scale(wavenumbers(params.n_grid), params)
    return SpectralField(scales * chi)


def propagate_coeffs(coeffs: np.ndarray, dt: float, params: ModelParams,
                     generator: np.random.Generator) -> np.ndarray:
    """Advance coefficient rows (..., n_grid) by dt with exact transition sampling."""
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    coeffs = np.asarray(coeffs, dtype=complex)
    dec = decay_factors(params, dt)
    scl = noise_scales(params, dt)
    chi = standard_hermitian_noise(generator, params.n_grid, coeffs.shape[:-1])
    return coeffs * dec + scl * chi


def propagate(state: SpectralField, dt: float, params: ModelParams,
              rng: RngStream) -> SpectralField:
    """Advance a single state by dt; dt=0 returns the state unchanged."""
    if state.n_grid != params.n_grid:
        raise ValueError("state size does not match params.n_grid")
    return SpectralField(propagate_coeffs(state.coeffs, dt, params, rng.generator()))


def spectral_to_grid(state: SpectralField) -> np.ndarray:
    """Evaluate u(x_j) = sum_k u_hat(k) exp(i k x_j) on the model grid.

    Rejects spectra that are not Hermitian to within 1e-12 of their own
    magnitude, since those do not describe a real field.
    """
    c = state.coeffs
    if not is_hermitian(c, tol=1e-12):
        raise ValueError("spectrum is not Hermitian-symmetric; field would not be real")
    n = state.n_grid
    return np.fft.irfft(c[: n // 2 + 1] * n, n=n)


def grid_to_spectral(values: np.ndarray) -> SpectralField:
    """Inverse of :func:`spectral_to_grid`; output is exactly Hermitian."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError("grid field must be 1-D")
    n = values.shape[0]
    half = np.fft.rfft(values) / n
    return SpectralField(hermitian_from_half(half, n))


def climatological_variance(params: ModelParams) -> float:
    """Pointwise stationary variance of the grid field.

    Under the declared transform convention this is the k=0 and Nyquist mean
    squares plus twice the interior mode mean squares.
    """
    n = params.n_grid
    s2 = stationary_scale(wavenumbers(n), params) ** 2
    return float(s2[0] + s2[n // 2] + 2.0 * np.sum(s2[1 : n // 2]))


def _circulant_from_mode_variances(var_spectrum: np.ndarray) -> np.ndarray:
    # Cov(u_i, u_j) = sum_k var_k exp(i k (x_i - x_j)): circulant, first column
    # n * ifft(var) which is real because var is even in k.
    n = var_spectrum.shape[0]
    col = np.fft.ifft(var_spectrum * n).real
    return scipy.linalg.circulant(col)


def stationary_covariance_matrix(params: ModelParams) -> np.ndarray:
    """Grid-space covariance of the stationary field (n_grid x n_grid)."""
    s2 = stationary_scale(wavenumbers(params.n_grid), params) ** 2
    return _circulant_from_mode_variances(s2)


def transition_noise_covariance_matrix(params: ModelParams, dt: float) -> np.ndarray:
    """Grid-space covariance of the transition noise accumulated over dt."""
    q = noise_scales(params, dt) ** 2
    return _circulant_from_mode_variances(q)
