"""2D-FFT angle/delay estimation and sub-array joint localization/synchronization.

The per-block estimator removes the pilots, takes a zero-padded unitary 2D
FFT and reads the bearing and the biased range off the strongest bin. The
near-field procedure runs it on non-overlapping sub-arrays, intersects the
resulting bearing lines and then averages the range residuals into a clock
bias estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scenario import C, Scenario
from .synth import ObservationGrid


@dataclass(frozen=True)
class EstimatorConfig:
    pad_spatial: int = 10
    pad_freq: int = 1
    d_bar_m: float = 2.0
    weights_mode: str = "uniform"  # or "crb"
    refine: bool = False
    grid_x: tuple[float, float] = (-20.0, 20.0)
    grid_y: tuple[float, float] = (0.0, 20.0)
    grid_points: int = 200
    max_iter: int = 50
    step_tol: float = 1e-9

    def __post_init__(self):
        if self.pad_spatial < 1 or self.pad_freq < 1:
            raise ValueError("pad factors must be >= 1")
        if self.weights_mode not in ("uniform", "crb"):
            raise ValueError("weights_mode must be 'uniform' or 'crb'")


@dataclass(frozen=True)
class SpectrumPeak:
    spatial_bin: int
    frequency_bin: int
    cos_theta: float
    delta: float
    magnitude: float


@dataclass(frozen=True)
class SubarrayMeasurement:
    center: tuple[float, float]
    theta_hat: float
    delta_hat: float
    var_theta: float = 1.0
    var_delta: float = 1.0

    def __post_init__(self):
        if not (self.var_theta > 0 and self.var_delta > 0):
            raise ValueError("measurement variances must be positive")


@dataclass(frozen=True)
class PositionFit:
    position: np.ndarray
    identifiable: bool
    converged: bool
    cost: float
    iterations: int = 0


@dataclass(frozen=True)
class LocalizationResult:
    position_hat: np.ndarray
    bias_hat: float
    identifiable: bool
    converged: bool
    subarray_size: int
    measurements: list[SubarrayMeasurement] = field(default_factory=list)


def remove_pilots(obs: ObservationGrid) -> np.ndarray:
    """Y S^H (S S^H)^-1, i.e. every column divided by its pilot."""
    if np.any(obs.pilots == 0):
        raise ValueError("zero pilot symbol: cannot remove pilots")
    return obs.samples / obs.pilots[None, :]


def fft2_spectrum(Yc: np.ndarray, pad_spatial: int = 10, pad_freq: int = 1) -> np.ndarray:
    """Unitary 2D DFT of ``Yc`` zero-padded to (pad_spatial*rows, pad_freq*cols)."""
    Yc = np.asarray(Yc)
    if Yc.ndim != 2 or Yc.size == 0:
        raise ValueError("expected a non-empty 2-D array")
    if pad_spatial < 1 or pad_freq < 1:
        raise ValueError("pad factors must be >= 1")
    A = int(round(pad_spatial * Yc.shape[0]))
    B = int(round(pad_freq * Yc.shape[1]))
    padded = np.zeros((A, B), dtype=complex)
    padded[: Yc.shape[0], : Yc.shape[1]] = Yc
    return np.fft.fft2(padded, norm="ortho")


def _wrap(f):
    """Fold a normalized frequency into [-1/2, 1/2)."""
    return (f + 0.5) % 1.0 - 0.5


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    den = left - 2 * mid + right
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / den, -0.5, 0.5))


def peak_to_params(Z: np.ndarray, s: Scenario, refine: bool = False) -> SpectrumPeak:
    """Map the strongest bin of |Z| to (cos theta, delta).

    Spatial frequency nu (cycles per element) gives cos theta = nu*lambda/Delta.
    The frequency bin gives the per-subcarrier phase slope -2 pi delta Delta_f / c,
    folded into the unambiguous range of width c/Delta_f.
    """
    mag = np.abs(Z)
    if mag.size == 0:
        raise ValueError("empty spectrum")
    A, B = mag.shape
    flat = int(np.argmax(mag))  # first maximum: lowest linear index wins ties
    m, q = divmod(flat, B)
    fm, fq = float(m), float(q)
    if refine:
        if A >= 3:
            fm += _parabolic_offset(mag[(m - 1) % A, q], mag[m, q], mag[(m + 1) % A, q])
        if B >= 3:
            fq += _parabolic_offset(mag[m, (q - 1) % B], mag[m, q], mag[m, (q + 1) % B])
    nu = _wrap(fm / A)
    cos_t = float(np.clip(nu * s.wavelength / s.element_spacing, -1.0, 1.0))
    slope = 2 * np.pi * _wrap(fq / B)
    delta = -slope * C / (2 * np.pi * s.subcarrier_spacing)
    return SpectrumPeak(m, q, cos_t, float(delta), float(mag[m, q]))


def estimate_peak(obs: ObservationGrid, s: Scenario,
                  cfg: EstimatorConfig = EstimatorConfig()) -> SpectrumPeak:
    Z = fft2_spectrum(remove_pilots(obs), cfg.pad_spatial, cfg.pad_freq)
    return peak_to_params(Z, s, cfg.refine)


def choose_subarray_size(d_bar: float, s: Scenario) -> int:
    """Largest block that is far field at ``d_bar`` and narrowband, within [1, N+1]."""
    if d_bar <= 0:
        raise ValueError("expected distance must be positive")
    lam, D = s.wavelength, s.element_spacing
    n_sub = int(np.floor(np.sqrt(d_bar * lam / 2) / D))
    n_sub = min(max(n_sub, 1), s.num_antennas)
    cap = int(np.floor(C / (10 * s.bandwidth * D)))
    if cap >= 1:
        n_sub = min(n_sub, cap)
    return n_sub


def _crb_variances(s: Scenario, obs: ObservationGrid, n_sub: int, theta: float, d_bar: float):
    """Standard far-field CRBs of one block's bearing and biased range at distance d_bar."""
    gamma = 1.0 / (d_bar**2 * s.noise_spectral) if s.noise_spectral > 0 else 1e300
    energies = np.abs(obs.pilots) ** 2
    k = s.subcarrier_indices.astype(float)
    EK0, EK2 = energies.sum(), np.sum(k**2 * energies)
    m = np.arange(n_sub) - (n_sub - 1) / 2
    EN2 = float(np.sum(m**2))
    j_theta = gamma * EK0 * EN2 * s.element_spacing**2 * np.sin(theta) ** 2
    j_delta = gamma * EK2 * n_sub * s.r_f**2
    var_theta = 1 / j_theta if j_theta > 0 else 1e12
    var_delta = 1 / j_delta if j_delta > 0 else 1e12
    return var_theta, var_delta


def subarray_measurements(obs: ObservationGrid, n_sub: int, s: Scenario,
                          cfg: EstimatorConfig = EstimatorConfig()) -> list[SubarrayMeasurement]:
    """One bearing/range measurement per full block of ``n_sub`` rows; leftovers dropped."""
    if not (1 <= n_sub <= s.num_antennas):
        raise ValueError(f"sub-array size {n_sub} outside [1, {s.num_antennas}]")
    if obs.shape != (s.num_antennas, s.num_subcarriers):
        raise ValueError("observation grid does not match the scenario dimensions")
    positions = s.antenna_positions
    eps = 1e-12
    out = []
    for b in range(s.num_antennas // n_sub):
        rows = slice(b * n_sub, (b + 1) * n_sub)
        peak = estimate_peak(obs.rows(rows.start, rows.stop), s, cfg)
        theta = float(np.clip(np.arccos(peak.cos_theta), eps, np.pi - eps))
        center = positions[rows].mean(axis=0)
        if cfg.weights_mode == "crb":
            vt, vd = _crb_variances(s, obs, n_sub, theta, cfg.d_bar_m)
        else:
            vt, vd = 1.0, 1.0
        out.append(SubarrayMeasurement((float(center[0]), float(center[1])), theta,
                                       peak.delta, vt, vd))
    return out


def _bearings(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Bearing arccos((x - cx)/||x - c||) from each center; points (..., 2) -> (..., M)."""
    dx = points[..., None, 0] - centers[:, 0]
    dy = points[..., None, 1] - centers[:, 1]
    return np.arctan2(np.abs(dy), dx)


def bearing_cost(x: np.ndarray, meas: Sequence[SubarrayMeasurement]) -> np.ndarray:
    centers = np.array([m.center for m in meas])
    theta = np.array([m.theta_hat for m in meas])
    var = np.array([m.var_theta for m in meas])
    res = theta - _bearings(np.asarray(x, dtype=float), centers)
    return np.sum(res**2 / (2 * var), axis=-1)


def _distinct_centers(meas: Sequence[SubarrayMeasurement]) -> int:
    return len({m.center for m in meas})


def solve_position(meas: Sequence[SubarrayMeasurement],
                   cfg: EstimatorConfig = EstimatorConfig()) -> PositionFit:
    """Weighted bearing-line intersection: grid search, then Gauss-Newton."""
    if _distinct_centers(meas) < 2:
        return PositionFit(np.full(2, np.nan), False, False, np.inf)
    centers = np.array([m.center for m in meas])
    theta = np.array([m.theta_hat for m in meas])
    sigma = np.sqrt([m.var_theta for m in meas])

    (x0, x1), (y0, y1), npts = cfg.grid_x, cfg.grid_y, cfg.grid_points
    xs = np.linspace(x0, x1, npts)
    ys = np.linspace(y0, y1, npts + 1)[1:]  # y strictly positive
    grid = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
    costs = bearing_cost(grid, meas)
    i, j = np.unravel_index(int(np.argmin(costs)), costs.shape)
    x_grid = grid[i, j].copy()
    cost_grid = float(costs[i, j])

    def residual(p):
        return (theta - _bearings(p, centers)) / sigma

    def jacobian(p):
        dx = p[0] - centers[:, 0]
        dy = p[1] - centers[:, 1]
        r2 = dx**2 + dy**2
        # derivative of -bearing/sigma
        return np.column_stack([dy / r2, -dx / r2]) / sigma[:, None]

    x = x_grid.copy()
    cost = 0.5 * float(np.sum(residual(x) ** 2))
    converged = False
    span = max(x1 - x0, y1 - y0)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        r = residual(x)
        step, *_ = np.linalg.lstsq(jacobian(x), -r, rcond=None)
        t = 1.0
        while True:
            cand = x + t * step
            if cand[1] > 0:
                c_new = 0.5 * float(np.sum(residual(cand) ** 2))
                if c_new <= cost or t < 1e-6:
                    break
            elif t < 1e-6:
                break
            t *= 0.5
        if cand[1] <= 0 or not np.all(np.isfinite(cand)):
            break
        x, cost = cand, c_new
        if np.linalg.norm(t * step) < cfg.step_tol:
            converged = True
            break
        if np.linalg.norm(x) > 10 * span:
            break

    if not converged or cost > cost_grid:
        return PositionFit(x_grid, True, False, cost_grid, it)
    return PositionFit(x, True, True, cost, it)


def solve_bias(x_hat, meas: Sequence[SubarrayMeasurement]) -> float:
    """Weighted least-squares clock bias from delta_hat = ||x - c|| - B."""
    if len(meas) == 0:
        raise ValueError("no measurements")
    x_hat = np.asarray(x_hat, dtype=float)
    ranges = np.array([np.linalg.norm(x_hat - np.asarray(m.center)) for m in meas])
    delta = np.array([m.delta_hat for m in meas])
    w = 1 / np.array([m.var_delta for m in meas])
    return float(np.sum(w * (ranges - delta)) / np.sum(w))


def localize_near_field(obs: ObservationGrid, s: Scenario,
                        cfg: EstimatorConfig = EstimatorConfig(),
                        n_sub: int | None = None) -> LocalizationResult:
    """Sub-array localization and synchronization.

    ``n_sub`` overrides the block size otherwise derived from ``cfg.d_bar_m``.
    Single-element blocks carry no bearing information, so they make the
    problem non-identifiable regardless of how many there are.
    """
    if n_sub is None:
        n_sub = choose_subarray_size(cfg.d_bar_m, s)
    meas = subarray_measurements(obs, n_sub, s, cfg)
    if n_sub < 2 or _distinct_centers(meas) < 2:
        return LocalizationResult(np.full(2, np.nan), float("nan"), False, False, n_sub, meas)
    fit = solve_position(meas, cfg)
    bias = solve_bias(fit.position, meas)
    return LocalizationResult(fit.position, bias, fit.identifiable, fit.converged, n_sub, meas)


def localize_far_field_known_bias(obs: ObservationGrid, s: Scenario, B: float,
                                  cfg: EstimatorConfig = EstimatorConfig()) -> np.ndarray:
    """Full-array estimate with the clock bias supplied: d = delta + B along the bearing."""
    peak = estimate_peak(obs, s, cfg)
    d_hat = peak.delta + B
    sin_t = np.sqrt(max(0.0, 1 - peak.cos_theta**2))
    return d_hat * np.array([peak.cos_theta, sin_t])
