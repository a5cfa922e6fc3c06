"""scikit-learn compatible wrappers around the functional API.

``X`` is the sample time (shape ``(n,)`` or ``(n, 1)``) and ``y`` the raw
flux for the curve regressors; ``predict`` returns flux in the units of the
``y`` seen by ``fit``. :class:`PulseNormalizer` works on a batch of pulses
sharing one time grid, one pulse per row.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_1d, check_same_length, check_time_grid
from .curves import GdcParams, SdcParams, knudsen_ratio, residence_time
from .fingerprint import DEFAULT_ALPHA, Regime, SeriesPoint, classify, decide_regime
from .fit import FitOptions, fit_gdc, fit_sdc
from .preprocess import PulseTrace, normalize, pulse_from_arrays


class PulseNormalizer(TransformerMixin, BaseEstimator):
    """Baseline-shift and area-normalize pulses row by row.

    Parameters
    ----------
    times : array-like of shape (n_times,)
        Shared sample times used for the trapezoidal area.
    """

    def __init__(self, times=None):
        self.times = times

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True, dtype=float)
        t = check_time_grid(self.times) if self.times is not None else np.arange(X.shape[1], dtype=float)
        if t.size != X.shape[1]:
            raise ValueError(f"times has {t.size} entries but X has {X.shape[1]} columns")
        self.times_ = t
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "times_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, expected {self.n_features_in_}")
        return np.vstack([normalize(PulseTrace(self.times_, row)).flux_bar for row in X])


class _CurveRegressor(RegressorMixin, BaseEstimator):

    def _prepare(self, X, y):
        t = check_time_grid(X, "X")
        f = check_1d(y, "y", min_length=2)
        check_same_length(t, f, "X and y")
        if self.normalize:
            pulse = normalize(PulseTrace(t, f))
        else:
            pulse = pulse_from_arrays(t, f)
        self.baseline_shift_ = pulse.baseline_shift
        self.area_scale_ = pulse.area_scale
        self.n_features_in_ = 1
        return pulse

    def _options(self) -> FitOptions:
        return FitOptions(max_iter=self.max_iter, ftol=self.ftol, xtol=self.xtol,
                          time_basis=self.time_basis, eta=self.eta, jacobian=self.jacobian)

    def predict(self, X):
        check_is_fitted(self, "result_")
        t = check_1d(X, "X")
        return self.result_.predict(t) * self.area_scale_ - self.baseline_shift_

    def _finish(self, result):
        self.result_ = result
        self.intercept_ = result.model.x_bar
        self.beta_ = result.model.beta
        self.converged_ = result.converged
        self.n_iter_ = result.iterations
        self.rmse_ = result.rmse
        self.r2_ = result.r_squared


class GDCRegressor(_CurveRegressor):
    """Generalized diffusion curve fitted by Levenberg-Marquardt.

    Parameters
    ----------
    normalize : bool, default=True
        Baseline-shift and area-normalize ``y`` before fitting. With False
        ``y`` is taken as already normalized.
    init : GdcParams or tuple, optional
        Starting ``(lam, mu, sigma)``; moment-based when None.
    time_basis : {"clock", "dimensionless"}
    eta : float
        Time scale for the dimensionless basis.
    max_iter, ftol, xtol : solver limits.
    jacobian : {"analytic", "numeric"}

    Attributes
    ----------
    lam_, mu_, sigma_, beta_, intercept_ : fitted parameters
    knudsen_ratio_, residence_time_ : derived quantities
    result_ : FitResult
    """

    def __init__(self, normalize=True, init=None, time_basis="clock", eta=1.0,
                 max_iter=500, ftol=1e-12, xtol=1e-10, jacobian="analytic"):
        self.normalize = normalize
        self.init = init
        self.time_basis = time_basis
        self.eta = eta
        self.max_iter = max_iter
        self.ftol = ftol
        self.xtol = xtol
        self.jacobian = jacobian

    def fit(self, X, y):
        pulse = self._prepare(X, y)
        init = self.init
        if init is not None and not isinstance(init, GdcParams):
            init = GdcParams(*init)
        result = fit_gdc(pulse, init, self._options())
        self._finish(result)
        shape = result.model.shape
        self.lam_, self.mu_, self.sigma_ = shape.lam, shape.mu, shape.sigma
        self.knudsen_ratio_ = knudsen_ratio(shape)
        self.residence_time_ = residence_time(shape)
        return self


class SDCRegressor(_CurveRegressor):
    """Standard diffusion curve with free rate, scale and intercept.

    Same parameters as :class:`GDCRegressor` with ``init`` an
    :class:`SdcParams` or a rate ``eta``.
    """

    def __init__(self, normalize=True, init=None, time_basis="clock", eta=1.0,
                 max_iter=500, ftol=1e-12, xtol=1e-10, jacobian="analytic"):
        self.normalize = normalize
        self.init = init
        self.time_basis = time_basis
        self.eta = eta
        self.max_iter = max_iter
        self.ftol = ftol
        self.xtol = xtol
        self.jacobian = jacobian

    def fit(self, X, y):
        pulse = self._prepare(X, y)
        init = self.init
        if init is not None and not isinstance(init, SdcParams):
            init = SdcParams(eta=float(init))
        result = fit_sdc(pulse, init, self._options())
        self._finish(result)
        self.eta_ = result.model.shape.eta
        self.scale_ = result.model.beta
        return self


class TransportFingerprint(BaseEstimator):
    """Regress ``lam`` on ``exp(-mu)`` over a pulse series and label the regime.

    ``fit(X, y)`` takes ``X`` = fitted ``mu`` values and ``y`` = fitted
    ``lam`` values; ``sigma`` (optional, same length) only feeds the
    per-pulse transport estimates.
    """

    def __init__(self, alpha=DEFAULT_ALPHA):
        self.alpha = alpha

    def fit(self, X, y, sigma=None):
        mu = check_1d(X, "X", min_length=1)
        lam = check_1d(y, "y", min_length=1)
        check_same_length(mu, lam, "X and y")
        sig = np.full_like(mu, 0.5) if sigma is None else check_1d(sigma, "sigma")
        points = [SeriesPoint(str(i), None, float(l), float(m), float(s))
                  for i, (l, m, s) in enumerate(zip(lam, mu, sig))]
        report = classify(points, self.alpha)
        self.report_ = report
        self.ols_ = report.ols
        self.regime_ = report.regime
        self.intercept_ = report.ols.a0
        self.coef_ = np.array([report.ols.a1])
        self.knudsen_ratios_ = np.array(report.knudsen_ratios)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Rate ``a0 + a1 * exp(-mu)`` for each ``mu`` in ``X``."""
        check_is_fitted(self, "ols_")
        mu = check_1d(X, "X")
        return self.ols_.predict(np.exp(-mu))

    def regime_at(self, alpha) -> Regime:
        """Regime label for a different significance level, without refitting."""
        check_is_fitted(self, "ols_")
        return decide_regime(self.ols_, alpha)
