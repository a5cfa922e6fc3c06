"""Least-squares estimation of SDC and GDC parameters from a normalized pulse.

The fitted model is ``flux_bar(t) = x_bar + beta * curve(t * s)`` where
``x_bar`` absorbs the noise-biased baseline, ``beta`` the overall scale and
``s`` the time basis scale (``eta`` for dimensionless time, 1 for seconds).
Positive parameters are optimized in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import curves
from .curves import GdcParams, SdcParams
from .errors import InvalidArgumentError, RankDeficiencyError
from .lm import levenberg_marquardt
from .preprocess import NormalizedPulse, trapezoid

GDC_PARAM_NAMES = ("x_bar", "beta", "lam", "mu", "sigma")
SDC_PARAM_NAMES = ("x_bar", "scale", "eta")

FALLBACK_INIT = GdcParams(lam=2.5, mu=-2.4, sigma=0.5)
SIGMA_INIT = 0.5
LAMBDA_INIT_FLOOR = 0.1
# Peak height over robust noise level below which a trace is treated as noise.
MIN_INIT_SNR = 6.0

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class FitOptions:
    """Solver and model-basis settings shared by :func:`fit_gdc` and :func:`fit_sdc`.

    ``time_basis="dimensionless"`` fits against ``tau = t * eta`` with the
    supplied ``eta``; ``"clock"`` fits directly in the pulse's time units,
    which absorbs ``eta`` into ``lam`` and ``mu``.
    """

    max_iter: int = 500
    ftol: float = 1e-12
    xtol: float = 1e-10
    time_basis: str = "clock"
    eta: float = 1.0
    jacobian: str = "analytic"
    sdc_terms: int = 200

    def __post_init__(self):
        if self.time_basis not in ("clock", "dimensionless"):
            raise InvalidArgumentError(f"time_basis must be 'clock' or 'dimensionless', got {self.time_basis!r}")
        if self.jacobian not in ("analytic", "numeric"):
            raise InvalidArgumentError(f"jacobian must be 'analytic' or 'numeric', got {self.jacobian!r}")
        if not self.eta > 0:
            raise InvalidArgumentError("eta must be > 0")
        if self.max_iter < 1:
            raise InvalidArgumentError("max_iter must be >= 1")

    @property
    def time_scale(self) -> float:
        return self.eta if self.time_basis == "dimensionless" else 1.0


@dataclass(frozen=True)
class FitModel:
    kind: str  # "GDC" or "SDC"
    x_bar: float
    beta: float
    shape: GdcParams | SdcParams
    time_basis: str
    time_scale: float

    def __post_init__(self):
        if not self.beta > 0:
            raise InvalidArgumentError(f"beta must be > 0, got {self.beta!r}")

    def curve(self, times) -> np.ndarray:
        """Transport curve ``beta * curve(t * s)`` without the intercept."""
        tau = np.asarray(times, dtype=float) * self.time_scale
        if self.kind == "GDC":
            s = self.shape
            return self.beta * curves._gdc_unchecked(tau, s.lam, s.mu, s.sigma)
        eta = self.shape.eta
        return self.beta * eta * curves._sdc_unchecked(np.maximum(tau, 0.0) * eta, curves.DEFAULT_TERMS)

    def predict(self, times) -> np.ndarray:
        return self.x_bar + self.curve(times)

    @property
    def area_fraction(self) -> float:
        """Area of the fitted transport curve in normalized-flux units."""
        if self.kind == "GDC":
            return self.beta * curves.gdc_area(self.shape) / self.time_scale
        return self.beta / self.time_scale


@dataclass
class FitResult:
    model: FitModel
    rmse: float
    r_squared: float
    mse: float
    residuals: np.ndarray
    covariance: np.ndarray
    param_names: tuple[str, ...]
    iterations: int
    converged: bool
    message: str = ""
    init_fallback: bool = False
    pulse_id: str = "pulse"
    metadata: dict = field(default_factory=dict)

    @property
    def params(self) -> dict[str, float]:
        m = self.model
        if m.kind == "GDC":
            values = (m.x_bar, m.beta, m.shape.lam, m.shape.mu, m.shape.sigma)
        else:
            values = (m.x_bar, m.beta, m.shape.eta)
        return dict(zip(self.param_names, values))

    @property
    def stderr(self) -> dict[str, float]:
        diag = np.diag(self.covariance)
        return {k: float(math.sqrt(v)) if v >= 0 else float("nan") for k, v in zip(self.param_names, diag)}

    def predict(self, times) -> np.ndarray:
        return self.model.predict(times)


class Conversion(NamedTuple):
    value: float  # clamped to [0, 1]
    raw: float  # 1 - sum(betas)
    clamped: bool


def conversion(betas) -> Conversion:
    """Conversion ``1 - sum(betas)`` over the tracked species' area fractions."""
    b = np.atleast_1d(np.asarray(betas, dtype=float))
    if b.size == 0 or not np.all(np.isfinite(b)):
        raise InvalidArgumentError("betas must be a non-empty finite vector")
    if np.any(b < 0):
        raise InvalidArgumentError("betas must be non-negative")
    raw = 1.0 - float(math.fsum(b))
    value = min(1.0, max(0.0, raw))
    return Conversion(value=value, raw=raw, clamped=value != raw)


def _noise_level(y: np.ndarray) -> float:
    d = np.diff(y)
    return float(np.median(np.abs(d - np.median(d)))) / 0.6744897501960817 / _SQRT2


def default_init(pulse: NormalizedPulse, time_scale: float = 1.0) -> tuple[GdcParams, bool]:
    """Moment-based starting point for the GDC fit.

    Returns ``(params, fallback)``; ``fallback`` is True when the trace's
    moments were unusable, or it showed no peak above the noise, and the
    Knudsen-neighbourhood constants were returned instead.
    """
    t = np.asarray(pulse.times, dtype=float) * time_scale
    y = np.asarray(pulse.flux_bar, dtype=float)
    noise = _noise_level(y)
    peak = float(np.max(y) - np.median(y))
    if noise > 0 and peak / noise < MIN_INIT_SNR:
        return FALLBACK_INIT, True
    with np.errstate(all="ignore"):
        t_peak = float(t[int(np.argmax(y))])
        area = trapezoid(y, t)
        t_mean = trapezoid(t * y, t) / area
        mu0 = math.log(t_peak) + SIGMA_INIT ** 2 if t_peak > 0 else float("nan")
        denom = t_mean - math.exp(mu0 + 0.5 * SIGMA_INIT ** 2) if math.isfinite(mu0) else float("nan")
        # a lognormal mean beyond the pulse mean leaves no room for the exponential
        # factor; start from the exponential mean alone instead of the floor
        lam0 = 1.0 / denom if denom > 0 else 1.0 / t_mean
    if not (math.isfinite(mu0) and math.isfinite(t_mean) and math.isfinite(lam0)):
        return FALLBACK_INIT, True
    return GdcParams(lam=max(lam0, LAMBDA_INIT_FLOOR), mu=mu0, sigma=SIGMA_INIT), False


def _linear_scale_fit(y: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """Least-squares ``(x_bar, beta)`` for ``y ~ x_bar + beta * g``."""
    A = np.column_stack([np.ones_like(g), g])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    x_bar, beta = float(coef[0]), float(coef[1])
    if not beta > 0 or not math.isfinite(beta):
        return 0.0, 1.0
    return x_bar, beta


def _gdc_model_and_jac(t: np.ndarray, q: np.ndarray, need_jac: bool):
    x_bar, log_beta, log_lam, mu, log_sigma = q
    # np.exp: an overflowing trial step yields inf and is rejected by the solver
    beta, lam, sigma = np.exp([log_beta, log_lam, log_sigma])
    pos = t > 0
    tp = t[pos]
    z = (np.log(tp) - mu) / sigma
    E = np.exp(-lam * tp)
    Phi = 0.5 * (1.0 + curves._erf_unchecked(z / _SQRT2))
    g = np.zeros_like(t)
    g[pos] = lam * E * Phi
    f = x_bar + beta * g
    if not need_jac:
        return f, None
    J = np.zeros((t.size, 5))
    J[:, 0] = 1.0
    J[:, 1] = beta * g
    phi = np.exp(-0.5 * z * z) / _SQRT2PI
    J[pos, 2] = beta * lam * E * (1.0 - lam * tp) * Phi
    J[pos, 3] = -beta * lam * E * phi / sigma
    J[pos, 4] = -beta * lam * E * phi * z
    return f, J


def _sdc_model_and_jac(t: np.ndarray, q: np.ndarray, terms: int, need_jac: bool):
    x_bar, log_scale, log_eta = q
    scale, eta = np.exp([log_scale, log_eta])
    tau = np.maximum(t, 0.0) * eta
    S = curves._sdc_unchecked(tau, terms)
    f = x_bar + scale * eta * S
    if not need_jac:
        return f, None
    dS = curves._sdc_dtau_unchecked(tau, terms)
    J = np.empty((t.size, 3))
    J[:, 0] = 1.0
    J[:, 1] = scale * eta * S
    J[:, 2] = scale * eta * (S + tau * dS)
    return f, J


def _natural_jacobian(Jq: np.ndarray, q: np.ndarray, log_mask: np.ndarray) -> np.ndarray:
    # d/dp = d/dlog(p) / p for log-parameterized entries.
    factors = np.where(log_mask, np.exp(q), 1.0)
    return Jq / factors


def _solve(t, y, q0, model_and_jac, opts: FitOptions):
    def residual(q):
        return y - model_and_jac(t, q, False)[0]

    jac = None
    if opts.jacobian == "analytic":
        def jac(q):
            return -model_and_jac(t, q, True)[1]

    return levenberg_marquardt(residual, q0, jac, max_iter=opts.max_iter, ftol=opts.ftol, xtol=opts.xtol)


def _diagnostics(y: np.ndarray, residuals: np.ndarray, Jnat: np.ndarray, names):
    n, p = Jnat.shape
    ss_res = float(residuals @ residuals)
    centered = y - y.mean()
    ss_tot = float(centered @ centered)
    mse = ss_res / n
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    col = np.linalg.norm(Jnat, axis=0)
    if np.any(~np.isfinite(Jnat)) or np.any(col == 0):
        raise RankDeficiencyError(f"Jacobian has a zero or non-finite column ({names})")
    Js = Jnat / col
    if np.linalg.matrix_rank(Js) < p:
        raise RankDeficiencyError(f"Jacobian is rank deficient at the solution ({names})")
    u = np.linalg.inv(Js.T @ Js)
    cov = mse * u / np.outer(col, col)
    return mse, r2, cov


def _check_pulse(pulse: NormalizedPulse, min_samples: int, what: str):
    if len(pulse) < min_samples:
        raise InvalidArgumentError(f"{what} needs at least {min_samples} samples, got {len(pulse)}")


def fit_gdc(pulse: NormalizedPulse, init: GdcParams | None = None, opts: FitOptions | None = None) -> FitResult:
    """Fit ``x_bar + beta * GDC(t * s | lam, mu, sigma)`` to a normalized pulse.

    Parameters
    ----------
    pulse : NormalizedPulse
        At least six samples.
    init : GdcParams, optional
        Starting shape parameters; :func:`default_init` when omitted.
    opts : FitOptions, optional

    Returns
    -------
    FitResult
        ``converged`` is False when the iteration budget ran out.

    Raises
    ------
    RankDeficiencyError
        If the Jacobian at the solution is singular.
    """
    opts = opts or FitOptions()
    _check_pulse(pulse, 6, "fit_gdc")
    s = opts.time_scale
    t = np.asarray(pulse.times, dtype=float) * s
    y = np.asarray(pulse.flux_bar, dtype=float)
    fallback = False
    if init is None:
        init, fallback = default_init(pulse, s)
    g0 = curves._gdc_unchecked(t, init.lam, init.mu, init.sigma)
    x0, b0 = _linear_scale_fit(y, g0)
    q0 = np.array([x0, math.log(b0), math.log(init.lam), init.mu, math.log(init.sigma)])

    sol = _solve(t, y, q0, _gdc_model_and_jac, opts)
    q = sol.x
    log_mask = np.array([False, True, True, False, True])
    if not np.all(np.isfinite(q)) or np.any(np.abs(q[log_mask]) > 700):
        raise RankDeficiencyError("GDC fit left the representable parameter range")
    _, Jq = _gdc_model_and_jac(t, q, True)
    Jnat = _natural_jacobian(Jq, q, log_mask)
    mse, r2, cov = _diagnostics(y, sol.residuals, Jnat, "GDC")
    model = FitModel(
        kind="GDC",
        x_bar=float(q[0]),
        beta=math.exp(q[1]),
        shape=GdcParams(lam=math.exp(q[2]), mu=float(q[3]), sigma=math.exp(q[4])),
        time_basis=opts.time_basis,
        time_scale=s,
    )
    return FitResult(
        model=model, rmse=math.sqrt(mse), r_squared=r2, mse=mse,
        residuals=sol.residuals, covariance=cov, param_names=GDC_PARAM_NAMES,
        iterations=sol.iterations, converged=sol.converged, message=sol.reason,
        init_fallback=fallback, pulse_id=pulse.pulse_id,
        metadata={"injection_nmol": pulse.injection_nmol, "gain": pulse.gain},
    )


def sdc_init(pulse: NormalizedPulse, time_scale: float = 1.0) -> SdcParams:
    """Rate from the SDC's peak at ``tau = 1/6``, or its mean ``1/2`` as backup."""
    t = np.asarray(pulse.times, dtype=float) * time_scale
    y = np.asarray(pulse.flux_bar, dtype=float)
    t_peak = float(t[int(np.argmax(y))])
    if t_peak > 0:
        return SdcParams(eta=1.0 / (6.0 * t_peak))
    t_mean = trapezoid(t * y, t) / trapezoid(y, t)
    if t_mean > 0 and math.isfinite(t_mean):
        return SdcParams(eta=0.5 / t_mean)
    return SdcParams(eta=1.0)


def fit_sdc(pulse: NormalizedPulse, init: SdcParams | None = None, opts: FitOptions | None = None) -> FitResult:
    """Fit ``x_bar + scale * eta * SDC(t * s * eta)`` to a normalized pulse.

    With the ``eta * SDC(t * eta)`` form the fitted ``scale`` is directly the
    transported area fraction. ``opts.sdc_terms`` series terms are used.
    """
    opts = opts or FitOptions()
    _check_pulse(pulse, 3, "fit_sdc")
    s = opts.time_scale
    t = np.asarray(pulse.times, dtype=float) * s
    y = np.asarray(pulse.flux_bar, dtype=float)
    if init is None:
        init = sdc_init(pulse, s)
    terms = opts.sdc_terms

    def model_and_jac(tt, q, need_jac):
        return _sdc_model_and_jac(tt, q, terms, need_jac)

    g0 = init.eta * curves._sdc_unchecked(np.maximum(t, 0.0) * init.eta, terms)
    x0, b0 = _linear_scale_fit(y, g0)
    q0 = np.array([x0, math.log(b0), math.log(init.eta)])
    sol = _solve(t, y, q0, model_and_jac, opts)
    q = sol.x
    log_mask = np.array([False, True, True])
    if not np.all(np.isfinite(q)) or np.any(np.abs(q[log_mask]) > 700):
        raise RankDeficiencyError("SDC fit left the representable parameter range")
    _, Jq = model_and_jac(t, q, True)
    Jnat = _natural_jacobian(Jq, q, log_mask)
    mse, r2, cov = _diagnostics(y, sol.residuals, Jnat, "SDC")
    model = FitModel(
        kind="SDC",
        x_bar=float(q[0]),
        beta=math.exp(q[1]),
        shape=SdcParams(eta=math.exp(q[2])),
        time_basis=opts.time_basis,
        time_scale=s,
    )
    return FitResult(
        model=model, rmse=math.sqrt(mse), r_squared=r2, mse=mse,
        residuals=sol.residuals, covariance=cov, param_names=SDC_PARAM_NAMES,
        iterations=sol.iterations, converged=sol.converged, message=sol.reason,
        pulse_id=pulse.pulse_id,
        metadata={"injection_nmol": pulse.injection_nmol, "gain": pulse.gain},
    )


def sum_of_squares(pulse: NormalizedPulse, result: FitResult, params: dict[str, float] | None = None) -> float:
    """Residual sum of squares of ``result``'s model, optionally with overridden parameters."""
    p = dict(result.params)
    if params:
        p.update(params)
    m = result.model
    if m.kind == "GDC":
        shape = GdcParams(lam=p["lam"], mu=p["mu"], sigma=p["sigma"])
        model = replace(m, x_bar=p["x_bar"], beta=p["beta"], shape=shape)
        pred = model.predict(pulse.times)
    else:
        eta = p["eta"]
        tau = np.asarray(pulse.times, dtype=float) * m.time_scale * eta
        pred = p["x_bar"] + p["scale"] * eta * curves._sdc_unchecked(np.maximum(tau, 0.0), 200)
    r = np.asarray(pulse.flux_bar) - pred
    return float(r @ r)
