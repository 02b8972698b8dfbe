"""Classical comparators: per-element ARFIMA models and the linear state-space
reduction of the echo-state model (identity activation, no leak memory).

ARFIMA estimation is conditional sum of squares on the fractionally
differenced, demeaned series; order selection is by AIC over a grid of
fractional-difference values and small ARMA orders.  Forecasts use the
truncated infinite autoregressive representation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import NonStationaryFit, OptimizerFailed
from .forecasting import ForecastEnsemble, iterative_forecast
from .reservoir import HyperParams

_D_GRID = tuple(np.round(np.arange(0.0, 0.5, 0.05), 2))
_COEF_BOUND = 0.99
_ROOT_MARGIN = 1.001


@dataclass(frozen=True)
class ArfimaModel:
    """Fitted fractional-difference model for one series."""

    p: int
    q: int
    d: float
    ar: np.ndarray
    ma: np.ndarray
    sigma2: float
    mean: float
    trunc: int
    aic: float

    def __post_init__(self):
        if not 0.0 <= self.d < 0.5:
            raise ValueError("d must lie in [0, 0.5)")
        if self.p and not _roots_outside(_ar_poly(self.ar), 1.0):
            raise NonStationaryFit("AR polynomial has a root inside the unit circle")


def frac_diff_coeffs(d: float, n_coeffs: int) -> np.ndarray:
    """Binomial-series coefficients of the fractional difference operator.

    coeffs[0] = 1 and coeffs[k] = coeffs[k-1] * (k - 1 - d) / k.
    """
    if n_coeffs < 1:
        raise ValueError("n_coeffs must be >= 1")
    out = np.empty(n_coeffs + 1)
    out[0] = 1.0
    for k in range(1, n_coeffs + 1):
        out[k] = out[k - 1] * (k - 1.0 - d) / k
    return out


def _ar_poly(ar: np.ndarray) -> np.ndarray:
    return np.concatenate([[1.0], -np.asarray(ar, dtype=np.float64)])


def _ma_poly(ma: np.ndarray) -> np.ndarray:
    return np.concatenate([[1.0], np.asarray(ma, dtype=np.float64)])


def _roots_outside(poly: np.ndarray, margin: float = _ROOT_MARGIN) -> bool:
    """All roots of the lag polynomial outside the unit circle (+margin).

    Orders one and two use the closed-form triangle conditions; higher
    orders fall back to companion-matrix roots.
    """
    if poly.size <= 1:
        return True
    slack = margin - 1.0
    if poly.size == 2:
        return abs(poly[1]) < 1.0 - slack
    if poly.size == 3:
        b1, b2 = poly[1], poly[2]
        return (abs(b2) < 1.0 - slack
                and b1 + b2 > -1.0 + slack
                and b2 - b1 > -1.0 + slack)
    return bool(np.all(np.abs(np.roots(poly[::-1])) > margin))


def _css(y_frac: np.ndarray, ar: np.ndarray, ma: np.ndarray) -> float:
    """Conditional sum of squared innovations, zero initial conditions."""
    eps = lfilter(_ar_poly(ar), _ma_poly(ma), y_frac)
    return float(np.dot(eps, eps))


def fit_arfima(series: np.ndarray, max_p: int = 2, max_q: int = 2,
               d_grid: Sequence[float] = _D_GRID,
               trunc: int | None = None) -> ArfimaModel:
    """Fit by conditional sum of squares, selecting (p, d, q) by AIC.

    Each candidate's ARMA coefficients are optimized with a bounded
    derivative-free search; candidates whose AR polynomial has a root
    on or inside the unit circle are discarded.  Ties in AIC go to the
    earliest candidate in (d, p, q) grid order.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    n = y.size
    if n < 50:
        raise ValueError("series must have at least 50 points")
    if trunc is None:
        trunc = min(n, 1000)
    mean = float(y.mean())
    centered = y - mean

    best = None
    for d in d_grid:
        y_frac = lfilter(frac_diff_coeffs(float(d), trunc), [1.0], centered)
        for p in range(max_p + 1):
            for q in range(max_q + 1):
                coef, css = _fit_candidate(y_frac, p, q)
                if coef is None:
                    continue
                sigma2 = css / n
                n_par = p + q + 1 + (1 if d > 0 else 0)
                aic = n * np.log(max(sigma2, 1e-300)) + 2.0 * n_par
                if best is None or aic < best[0] - 1e-12:
                    best = (aic, float(d), p, q, coef, sigma2)
    if best is None:
        raise NonStationaryFit("no candidate produced a stationary fit")
    aic, d, p, q, coef, sigma2 = best
    return ArfimaModel(p=p, q=q, d=d, ar=coef[:p], ma=coef[p:],
                       sigma2=sigma2, mean=mean, trunc=trunc, aic=aic)


def _fit_candidate(y_frac: np.ndarray, p: int, q: int):
    """Optimize ARMA coefficients for one candidate; returns (coef, css).

    Pure-AR candidates are exact: conditional least squares is linear in
    the coefficients.  Mixed candidates use a bounded derivative-free
    search started from the AR-only solution.
    """
    if p == 0 and q == 0:
        return np.empty(0), float(np.dot(y_frac, y_frac))
    big = 1e12

    def ar_least_squares(order):
        cols = [y_frac[order - k:-k] for k in range(1, order + 1)]
        design = np.column_stack(cols)
        target = y_frac[order:]
        coef, *_ = np.linalg.lstsq(design, target, rcond=None)
        return coef

    if q == 0:
        ar = ar_least_squares(p)
        if not _roots_outside(_ar_poly(ar), 1.0):
            return None, np.inf
        return ar, _css(y_frac, ar, np.empty(0))

    def objective(theta):
        ar, ma = theta[:p], theta[p:]
        if not (_roots_outside(_ar_poly(ar)) and _roots_outside(_ma_poly(ma))):
            return big
        return _css(y_frac, ar, ma)

    x0 = np.zeros(p + q)
    if p:
        start = ar_least_squares(p)
        if _roots_outside(_ar_poly(start)):
            x0[:p] = np.clip(start, -_COEF_BOUND, _COEF_BOUND)
    bounds = [(-_COEF_BOUND, _COEF_BOUND)] * (p + q)
    try:
        res = minimize(objective, x0, method="Powell", bounds=bounds,
                       options={"maxfev": 150 * (p + q), "xtol": 1e-4,
                                "ftol": 1e-7})
    except Exception as exc:  # pragma: no cover - scipy internal failures
        raise OptimizerFailed(str(exc)) from exc
    if not np.isfinite(res.fun) or res.fun >= big:
        return None, np.inf
    coef = np.asarray(res.x, dtype=np.float64)
    if not _roots_outside(_ar_poly(coef[:p]), 1.0):
        return None, np.inf
    return coef, float(res.fun)


def _series_divide(numer: np.ndarray, denom: np.ndarray, n_out: int) -> np.ndarray:
    """Power-series division numer / denom, denom[0] assumed 1."""
    out = np.zeros(n_out + 1)
    for k in range(n_out + 1):
        acc = numer[k] if k < numer.size else 0.0
        for i in range(1, min(k, denom.size - 1) + 1):
            acc -= denom[i] * out[k - i]
        out[k] = acc
    return out


def ar_representation(model: ArfimaModel, n_coeffs: int) -> np.ndarray:
    """Truncated infinite-AR weights of the fitted model (index 0 is 1)."""
    frac = frac_diff_coeffs(model.d, n_coeffs)
    numer = np.convolve(_ar_poly(model.ar), frac)[:n_coeffs + 1]
    return _series_divide(numer, _ma_poly(model.ma), n_coeffs)


def ma_representation(model: ArfimaModel, n_coeffs: int) -> np.ndarray:
    """Truncated moving-average weights, used for forecast variances."""
    pi = ar_representation(model, n_coeffs)
    psi = np.zeros(n_coeffs + 1)
    psi[0] = 1.0
    for h in range(1, n_coeffs + 1):
        psi[h] = -np.dot(pi[1:h + 1], psi[h - 1::-1][:h])
    return psi


def forecast_arfima(model: ArfimaModel, series: np.ndarray,
                    n_f: int) -> tuple[np.ndarray, np.ndarray]:
    """Point forecasts and Gaussian predictive SDs for n_f steps ahead."""
    if n_f < 1:
        raise ValueError("n_f must be >= 1")
    y = np.asarray(series, dtype=np.float64).ravel() - model.mean
    n = y.size
    k = min(model.trunc, n + n_f)
    pi = ar_representation(model, k)
    extended = np.concatenate([y, np.zeros(n_f)])
    for h in range(n_f):
        t = n + h
        lo = max(t - k, 0)
        window = extended[lo:t][::-1]  # lags 1..t-lo
        extended[t] = -np.dot(pi[1:window.size + 1], window)
    psi = ma_representation(model, n_f - 1)
    sd = np.sqrt(model.sigma2 * np.cumsum(psi * psi))
    return extended[n:] + model.mean, sd


def state_space_forecast(train: np.ndarray, hp: HyperParams, n_f: int,
                         n_ens: int, seed: int) -> ForecastEnsemble:
    """Linear special case of the echo-state forecaster.

    Identity activation with no leak memory turns the hidden recursion
    into a linear state-space update; everything else (recursive
    forecasting, readout refits) is shared.
    """
    linear_hp = replace(hp, activation="identity", leak=1.0)
    return iterative_forecast(train, linear_hp, n_f, n_ens, seed)
