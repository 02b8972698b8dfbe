import numpy as np
import pytest
from scipy.signal import lfilter
from scipy.special import gammaln, gammasgn

from echocast.baselines import (
    ArfimaModel,
    ar_representation,
    fit_arfima,
    forecast_arfima,
    frac_diff_coeffs,
    ma_representation,
    state_space_forecast,
)
from echocast.errors import NonStationaryFit
from echocast.forecasting import iterative_forecast, mse
from echocast.reservoir import HyperParams


def simulate_arfima(n, d, ar=(), ma=(), seed=0, burn=500):
    """Fractionally integrated ARMA simulation via linear filters."""
    rng = np.random.default_rng(seed)
    eps = rng.standard_normal(n + burn)
    ar_poly = np.concatenate([[1.0], -np.asarray(ar, dtype=float)])
    ma_poly = np.concatenate([[1.0], np.asarray(ma, dtype=float)])
    arma = lfilter(ma_poly, ar_poly, eps)
    frac = frac_diff_coeffs(d, n + burn)
    series = lfilter([1.0], frac, arma)  # inverse fractional differencing
    return series[burn:]


class TestFracDiffCoeffs:
    def test_no_differencing(self):
        np.testing.assert_array_equal(frac_diff_coeffs(0.0, 4),
                                      np.array([1.0, 0, 0, 0, 0]))

    def test_first_difference(self):
        np.testing.assert_array_equal(frac_diff_coeffs(1.0, 4),
                                      np.array([1.0, -1.0, 0.0, -0.0, -0.0]))

    def test_gamma_ratio_oracle(self):
        """coeff_k = Gamma(k-d) / (Gamma(k+1) Gamma(-d)), sign-aware."""
        d = 0.4
        got = frac_diff_coeffs(d, 5)
        for k in range(1, 6):
            magnitude = np.exp(gammaln(k - d) - gammaln(k + 1) - gammaln(-d))
            sign = gammasgn(k - d) * gammasgn(-d)
            assert abs(got[k] - sign * magnitude) < 1e-12
        assert got[0] == 1.0

    def test_absolute_summability_below_half(self):
        """Partial sums of |coeffs| grow sublinearly and flatten for d<0.5."""
        coeffs = np.abs(frac_diff_coeffs(0.45, 20_000))
        tail_first = coeffs[100:1000].sum()
        tail_last = coeffs[10_000:20_001].sum()
        assert tail_last < tail_first  # decaying tail contributions

    def test_requires_positive_length(self):
        with pytest.raises(ValueError):
            frac_diff_coeffs(0.3, 0)


class TestFitArfima:
    def test_white_noise_selects_null_model(self):
        rng = np.random.default_rng(0)
        series = 5.0 + rng.standard_normal(400)
        model = fit_arfima(series)
        assert model.p == 0
        assert model.q == 0
        assert model.d == 0.0
        point, sd = forecast_arfima(model, series, 5)
        np.testing.assert_allclose(point, np.full(5, series.mean()), atol=1e-12)
        assert abs(sd[0] - 1.0) < 0.1

    def test_simulate_and_recover(self):
        series = simulate_arfima(2000, d=0.3, ar=(0.5,), seed=2)
        model = fit_arfima(series)
        assert abs(model.d - 0.3) <= 0.1
        assert model.p >= 1
        assert abs(model.ar[0] - 0.5) <= 0.15

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            fit_arfima(np.zeros(30))

    def test_aic_deterministic(self):
        rng = np.random.default_rng(3)
        series = rng.standard_normal(200)
        a = fit_arfima(series)
        b = fit_arfima(series)
        assert (a.p, a.q, a.d) == (b.p, b.q, b.d)
        np.testing.assert_array_equal(a.ar, b.ar)

    def test_stationarity_invariant(self):
        with pytest.raises(NonStationaryFit):
            ArfimaModel(p=1, q=0, d=0.0, ar=np.array([1.01]), ma=np.empty(0),
                        sigma2=1.0, mean=0.0, trunc=100, aic=0.0)

    def test_d_range_invariant(self):
        with pytest.raises(ValueError):
            ArfimaModel(p=0, q=0, d=0.6, ar=np.empty(0), ma=np.empty(0),
                        sigma2=1.0, mean=0.0, trunc=100, aic=0.0)


class TestForecastArfima:
    def test_pure_ar_matches_textbook_recursion(self):
        """d=0, q=0: forecasts equal the AR(p) recursion exactly."""
        rng = np.random.default_rng(4)
        phi = np.array([0.6, -0.2])
        series = rng.standard_normal(300)
        for t in range(2, 300):
            series[t] += phi[0] * series[t - 1] + phi[1] * series[t - 2]
        model = ArfimaModel(p=2, q=0, d=0.0, ar=phi, ma=np.empty(0),
                            sigma2=1.0, mean=0.0, trunc=300, aic=0.0)
        point, _ = forecast_arfima(model, series, 6)
        ext = list(series)
        for _ in range(6):
            ext.append(phi[0] * ext[-1] + phi[1] * ext[-2])
        np.testing.assert_allclose(point, ext[300:], atol=1e-10)

    def test_ar_representation_inverts_ma(self):
        model = ArfimaModel(p=1, q=1, d=0.2, ar=np.array([0.4]),
                            ma=np.array([0.3]), sigma2=1.0, mean=0.0,
                            trunc=200, aic=0.0)
        pi = ar_representation(model, 50)
        psi = ma_representation(model, 50)
        conv = np.convolve(pi, psi)[:51]
        expected = np.zeros(51)
        expected[0] = 1.0
        np.testing.assert_allclose(conv, expected, atol=1e-10)

    def test_predictive_sd_nondecreasing(self):
        model = ArfimaModel(p=1, q=0, d=0.1, ar=np.array([0.5]), ma=np.empty(0),
                            sigma2=2.0, mean=0.0, trunc=200, aic=0.0)
        _, sd = forecast_arfima(model, np.random.default_rng(5).standard_normal(100), 10)
        assert np.all(np.diff(sd) >= -1e-12)
        assert abs(sd[0] - np.sqrt(2.0)) < 1e-12


class TestStateSpaceForecast:
    def test_delegates_with_linear_settings(self, lorenz_small):
        data = lorenz_small[0][:100, :3]
        hp = HyperParams(n_reservoir=10, embed=2, leak=0.0023,
                         spectral_radius=0.6, ridge=0.01)
        fc = state_space_forecast(data, hp, 4, 3, seed=0)
        linear_hp = HyperParams(n_reservoir=10, embed=2, leak=1.0,
                                spectral_radius=0.6, ridge=0.01,
                                activation="identity")
        direct = iterative_forecast(data, linear_hp, 4, 3, seed=0)
        np.testing.assert_array_equal(fc.members, direct.members)

    def test_linear_data_favors_linear_model(self):
        """On linear-Gaussian AR data the linear reduction is competitive."""
        rng = np.random.default_rng(6)
        n, n_l = 400, 3
        data = np.zeros((n, n_l))
        for t in range(1, n):
            data[t] = 0.85 * data[t - 1] + 0.4 * rng.standard_normal(n_l)
        hp = HyperParams(n_reservoir=30, embed=2, leak=0.0023,
                         spectral_radius=0.6, ridge=0.001)
        train, test = data[:380], data[380:]
        ss = state_space_forecast(train, hp, 20, 30, seed=1)
        esn = iterative_forecast(train, hp, 20, 30, seed=1)
        ss_mse = float(np.median(mse(ss.mean, test)))
        esn_mse = float(np.median(mse(esn.mean, test)))
        assert ss_mse <= esn_mse * 1.1
