"""Post hoc marginal calibration of recursive ensemble forecasts.

Forecasts from consecutive windows are grouped per element and lead
step; residual standard deviations per step are smoothed to a
non-decreasing curve, residuals are standardized by the smoothed
curve, and Gaussian prediction intervals/PIT values follow from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.stats import kstest, norm

from .errors import BadLevel, InsufficientData, TooFewWindows, ZeroSigma
from .forecasting import iterative_forecast
from .reservoir import HyperParams

SIGMA_FLOOR = 1e-8


@dataclass(frozen=True)
class WindowedForecasts:
    """Point forecasts grouped by element and lead step across windows.

    Arrays are (n_elements, n_steps, n_windows); window w's j-step
    forecast targets observed row origin + w*n_steps + j.
    """

    forecasts: np.ndarray
    truth: np.ndarray
    ensemble_sd: np.ndarray
    origin: int

    @property
    def n_windows(self) -> int:
        return self.forecasts.shape[2]

    @property
    def n_steps(self) -> int:
        return self.forecasts.shape[1]

    @property
    def n_elements(self) -> int:
        return self.forecasts.shape[0]


@dataclass(frozen=True)
class CalibrationModel:
    """Per-element monotone SD curves plus the residual archives."""

    sigma_hat: np.ndarray        # (n_elements, n_steps) raw residual SD
    sigma_tilde: np.ndarray      # (n_elements, n_steps) monotone, floored
    residuals: np.ndarray        # (n_elements, n_steps, n_windows)
    standardized: np.ndarray     # residuals / sigma_tilde

    def __post_init__(self):
        if np.any(self.sigma_tilde <= 0.0):
            raise ZeroSigma("sigma_tilde must be positive after flooring")
        if np.any(np.diff(self.sigma_tilde, axis=1) < -1e-12):
            raise ValueError("sigma_tilde must be non-decreasing in the step")

    @property
    def pooled_samples(self) -> np.ndarray:
        """Standardized residual vectors pooled over steps and windows, (N, n_elements)."""
        n_l = self.standardized.shape[0]
        return self.standardized.transpose(1, 2, 0).reshape(-1, n_l)

    def interpolator(self, element: int) -> PchipInterpolator:
        """Monotone cubic interpolant of the smoothed SD curve over steps 1..n_f."""
        steps = np.arange(1, self.sigma_tilde.shape[1] + 1, dtype=np.float64)
        return PchipInterpolator(steps, self.sigma_tilde[element])


def build_windowed_forecasts(data: np.ndarray, hp: HyperParams, n_w: int,
                             n_f: int, n_ens: int, seed: int) -> WindowedForecasts:
    """Forecast n_w consecutive windows of length n_f from the series tail.

    The last n_w * n_f rows of `data` are forecast targets; window w
    conditions on everything observed before its origin.  The same seed
    is passed to every window, so member reservoirs are identical
    across windows.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InsufficientData("data must be a (T, n_elements) matrix")
    if n_w < 1 or n_f < 1:
        raise ValueError("n_w and n_f must be >= 1")
    origin = data.shape[0] - n_w * n_f
    if origin <= hp.embed * hp.lead + hp.washout:
        raise InsufficientData(
            f"need > {hp.embed * hp.lead + hp.washout + n_w * n_f} rows, "
            f"got {data.shape[0]}"
        )
    n_l = data.shape[1]
    forecasts = np.empty((n_l, n_f, n_w))
    truth = np.empty((n_l, n_f, n_w))
    ensemble_sd = np.empty((n_l, n_f, n_w))
    for w in range(n_w):
        start = origin + w * n_f
        fc = iterative_forecast(data[:start], hp, n_f, n_ens, seed)
        forecasts[:, :, w] = fc.mean.T
        truth[:, :, w] = data[start:start + n_f].T
        ddof = 1 if fc.n_members > 1 else 0
        ensemble_sd[:, :, w] = fc.members.std(axis=0, ddof=ddof).T
    return WindowedForecasts(forecasts=forecasts, truth=truth,
                             ensemble_sd=ensemble_sd, origin=origin)


def residuals_and_sd(wf: WindowedForecasts) -> tuple[np.ndarray, np.ndarray]:
    """Residuals (truth minus forecast) and their per-step SD across windows."""
    if wf.n_windows < 2:
        raise TooFewWindows("residual SD needs at least two windows")
    residuals = wf.truth - wf.forecasts
    sigma_hat = residuals.std(axis=2, ddof=1)
    return residuals, sigma_hat


def monotone_spline(values: np.ndarray) -> np.ndarray:
    """Non-decreasing fit to a per-step SD sequence.

    Pool-adjacent-violators projection; where the input is already
    non-decreasing it is returned unchanged.  The projected knots feed
    the monotone cubic interpolant (see CalibrationModel.interpolator)
    for evaluation between steps.
    """
    y = np.asarray(values, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("need a 1-D sequence of length >= 2")
    if np.any(y < 0.0):
        raise ValueError("SD values must be nonnegative")
    vals: list[float] = []
    counts: list[int] = []
    for v in y:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, c2 = vals.pop(), counts.pop()
            v1, c1 = vals.pop(), counts.pop()
            vals.append((v1 * c1 + v2 * c2) / (c1 + c2))
            counts.append(c1 + c2)
    return np.repeat(vals, counts)


def standardize(residuals: np.ndarray, sigma_tilde: np.ndarray) -> np.ndarray:
    """Divide each (element, step) residual series by its smoothed SD."""
    residuals = np.asarray(residuals, dtype=np.float64)
    sigma_tilde = np.asarray(sigma_tilde, dtype=np.float64)
    if np.any(sigma_tilde <= 0.0):
        raise ZeroSigma("sigma_tilde must be positive; floor degenerate values first")
    return residuals / sigma_tilde[:, :, None]


def fit_calibration(wf: WindowedForecasts) -> CalibrationModel:
    """Run the full per-element calibration loop on grouped forecasts."""
    residuals, sigma_hat = residuals_and_sd(wf)
    sigma_tilde = np.empty_like(sigma_hat)
    for ell in range(wf.n_elements):
        sigma_tilde[ell] = monotone_spline(sigma_hat[ell])
    sigma_tilde = np.maximum(sigma_tilde, SIGMA_FLOOR)
    return CalibrationModel(
        sigma_hat=sigma_hat,
        sigma_tilde=sigma_tilde,
        residuals=residuals,
        standardized=standardize(residuals, sigma_tilde),
    )


def uncalibrated_standardized(wf: WindowedForecasts) -> np.ndarray:
    """Residuals standardized by the raw per-step ensemble SD."""
    residuals = wf.truth - wf.forecasts
    return residuals / np.maximum(wf.ensemble_sd, SIGMA_FLOOR)


def pit(standardized_residual) -> np.ndarray:
    """Probability integral transform under the standard normal reference."""
    return norm.cdf(standardized_residual)


def ks_uniformity(pit_values: np.ndarray) -> float:
    """Kolmogorov-Smirnov statistic of PIT values against Uniform(0,1)."""
    return float(kstest(np.asarray(pit_values).ravel(), "uniform").statistic)


def interval(mean, sigma_tilde, level: float) -> tuple[np.ndarray, np.ndarray]:
    """Central Gaussian prediction interval, symmetric about the point forecast."""
    if not 0.0 < level < 1.0:
        raise BadLevel(f"level must lie in (0, 1), got {level}")
    half = norm.ppf(0.5 * (1.0 + level)) * np.asarray(sigma_tilde, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    return mean - half, mean + half


def coverage(lo: np.ndarray, hi: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of truths falling inside [lo, hi]."""
    lo = np.asarray(lo)
    hi = np.asarray(hi)
    truth = np.asarray(truth)
    inside = (truth >= lo) & (truth <= hi)
    return float(np.mean(inside))
