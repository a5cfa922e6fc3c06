"""Curve families for TAP outlet flux.

The standard diffusion curve (SDC) is the outlet flux of Fick's second law
in a closed-open packed bed,

    SDC(tau) = pi * sum_n (-1)^n (2n+1) exp(-(2n+1)^2 pi^2 tau / 4),

evaluated here at unit rate and unit injected amount. It factors into
``pi * exp(-pi^2 tau / 4) * F*(tau)`` where ``F*`` rises monotonically to 1.
For ``tau < 0.1`` the equivalent short-time (Poisson-summed) form

    SDC(tau) = (pi tau^3)^(-1/2) * sum_n (-1)^n (2n+1) exp(-(2n+1)^2 / (4 tau))

is used instead; it needs a handful of terms and avoids the cancellation
the long-time series suffers where the flux is tiny.

The generalized diffusion curve (GDC) replaces ``F*`` with a lognormal CDF
and the leading exponential with an exponential density of free rate:

    gdc(tau) = lam * exp(-lam * tau) * Phi(tau | mu, sigma).

All functions take dimensionless time ``tau`` as a scalar or an array and
return the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._validation import check_finite_scalar, check_positive, check_positive_int
from .errors import DomainError, InvalidArgumentError
from .specfun import _erf_unchecked

PI2_4 = math.pi ** 2 / 4.0
#: Knudsen-ideal ratio ``lam * exp(mu)`` for lam = pi^2/4, mu = -pi^2/4.
KNUDSEN_RATIO = PI2_4 * math.exp(-PI2_4)

DEFAULT_TERMS = 2000
# Below this the SDC is zero to double precision and the series is ill-conditioned.
TAU_FLOOR = 1e-6
_TERM_EPS = 1e-14
_BLOCK = 32
# Short-time form below this tau; 8 terms reach exp(-225 / (4 * 0.1)) ~ 0.
_SHORT_TAU = 0.1
_SHORT_N = np.arange(8, dtype=float)
_SHORT_A = np.where(_SHORT_N % 2 == 0, 1.0, -1.0) * (2 * _SHORT_N + 1)
_SHORT_C = (2 * _SHORT_N + 1) ** 2 / 4.0
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SdcParams:
    """Rate ``eta = D / (eps L^2)`` in 1/s and injected amount ``n_mol``."""

    eta: float = 1.0
    n_mol: float = 1.0

    def __post_init__(self):
        check_positive(self.eta, "eta")
        check_positive(self.n_mol, "n_mol")


@dataclass(frozen=True)
class ReactorConfig:
    """Packed-bed geometry and transport properties (cgs units)."""

    length: float
    area: float
    porosity: float
    diffusivity: float

    def __post_init__(self):
        for name in ("length", "area", "diffusivity"):
            check_positive(getattr(self, name), name)
        p = check_finite_scalar(self.porosity, "porosity")
        if not 0.0 < p < 1.0:
            raise InvalidArgumentError(f"porosity must lie in (0, 1), got {p!r}")

    @property
    def eta(self) -> float:
        """Rate of transport ``D / (eps L^2)`` in 1/s."""
        return self.diffusivity / (self.porosity * self.length ** 2)

    def initial_concentration(self, n_mol: float) -> float:
        """Concentration ``N / (eps A L)`` of a pulse spread over the bed."""
        return check_positive(n_mol, "n_mol") / (self.porosity * self.area * self.length)

    def sdc_params(self, n_mol: float = 1.0) -> SdcParams:
        return SdcParams(eta=self.eta, n_mol=n_mol)


@dataclass(frozen=True)
class GdcParams:
    """Shape parameters of the generalized diffusion curve."""

    lam: float
    mu: float
    sigma: float

    def __post_init__(self):
        check_positive(self.lam, "lam")
        check_finite_scalar(self.mu, "mu")
        check_positive(self.sigma, "sigma")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.lam, self.mu, self.sigma)


#: Parameters that make the GDC reproduce the SDC's analytic constants.
KNUDSEN_IDEAL = GdcParams(lam=PI2_4, mu=-PI2_4, sigma=0.5)


def _as_tau(tau) -> tuple[np.ndarray, bool]:
    arr = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("tau must be finite")
    return arr, arr.ndim == 0


def _ret(values: np.ndarray, scalar: bool):
    if scalar:
        return float(values.reshape(()))
    return values


def _alternating_series(tau: np.ndarray, terms: int, decay) -> np.ndarray:
    """Sum ``(-1)^n (2n+1) exp(-decay(n) * tau)`` for ``n < terms``.

    Stops after the first block in which every term is below ``_TERM_EPS``.
    """
    flat = tau.reshape(-1)
    total = np.zeros_like(flat)
    for start in range(0, terms, _BLOCK):
        n = np.arange(start, min(start + _BLOCK, terms), dtype=float)
        sign = np.where(n % 2 == 0, 1.0, -1.0)
        block = (sign * (2 * n + 1))[:, None] * np.exp(-np.outer(decay(n), flat))
        total += block.sum(axis=0)
        if np.max(np.abs(block[-1]), initial=0.0) < _TERM_EPS:
            break
    return total.reshape(tau.shape)


def sdc_flux(tau, terms: int = DEFAULT_TERMS):
    """Area-normalized SDC at unit rate and unit amount.

    For rate ``eta`` and amount ``N`` in clock time the flux is
    ``N * eta * sdc_flux(t * eta)``. Values at ``0 < tau < 1e-6`` are 0.
    ``terms`` bounds the long-time series used for ``tau >= 0.1``.

    Raises
    ------
    DomainError
        If any ``tau <= 0``.
    """
    terms = check_positive_int(terms, "terms")
    arr, scalar = _as_tau(tau)
    if np.any(arr <= 0):
        raise DomainError("sdc_flux is defined for tau > 0")
    return _ret(_sdc_unchecked(arr, terms), scalar)


def _sdc_short_time(tau: np.ndarray, derivative: bool = False) -> np.ndarray:
    # the short-time form, or its tau-derivative
    e = np.exp(-np.outer(_SHORT_C, 1.0 / tau))
    front = 1.0 / np.sqrt(math.pi * tau ** 3)
    if not derivative:
        return front * (_SHORT_A @ e)
    return front * ((_SHORT_A * _SHORT_C) @ e / tau ** 2 - 1.5 * (_SHORT_A @ e) / tau)


def _split(tau: np.ndarray):
    short = (tau >= TAU_FLOOR) & (tau < _SHORT_TAU)
    return short, tau >= _SHORT_TAU


def _sdc_unchecked(tau: np.ndarray, terms: int) -> np.ndarray:
    out = np.zeros_like(tau, dtype=float)
    short, long_ = _split(tau)
    if np.any(short):
        out[short] = _sdc_short_time(tau[short])
    if np.any(long_):
        out[long_] = math.pi * _alternating_series(tau[long_], terms, lambda n: (2 * n + 1) ** 2 * PI2_4)
    return np.maximum(out, 0.0)


def _sdc_dtau_unchecked(tau: np.ndarray, terms: int) -> np.ndarray:
    # d/dtau of the SDC; used by the analytic Jacobian of the SDC fit.
    out = np.zeros_like(tau, dtype=float)
    short, long_ = _split(tau)
    if np.any(short):
        out[short] = _sdc_short_time(tau[short], derivative=True)
    if not np.any(long_):
        return out
    flat = tau[long_]
    total = np.zeros_like(flat)
    for start in range(0, terms, _BLOCK):
        n = np.arange(start, min(start + _BLOCK, terms), dtype=float)
        k = (2 * n + 1) ** 2 * PI2_4
        sign = np.where(n % 2 == 0, 1.0, -1.0)
        block = (sign * (2 * n + 1) * -k)[:, None] * np.exp(-np.outer(k, flat))
        total += block.sum(axis=0)
        if np.max(np.abs(block[-1]), initial=0.0) < _TERM_EPS:
            break
    out[long_] = math.pi * total
    return out


def sdc_fstar(tau, terms: int = DEFAULT_TERMS):
    """Cumulative-arrival factor ``F*`` of the SDC.

    ``sdc_flux(tau) == pi * exp(-pi^2 tau / 4) * sdc_fstar(tau)``. Rises
    monotonically from 0 to 1; values at ``0 < tau < 1e-6`` are 0.
    """
    terms = check_positive_int(terms, "terms")
    arr, scalar = _as_tau(tau)
    if np.any(arr <= 0):
        raise DomainError("sdc_fstar is defined for tau > 0")
    out = np.zeros_like(arr, dtype=float)
    short, long_ = _split(arr)
    if np.any(short):
        t = arr[short]
        out[short] = _sdc_short_time(t) * np.exp(PI2_4 * t) / math.pi
    if np.any(long_):
        out[long_] = _alternating_series(arr[long_], terms, lambda n: n * (n + 1) * math.pi ** 2)
    return _ret(np.clip(out, 0.0, 1.0), scalar)


def exponential_pdf(tau, lam: float):
    """Exponential density ``lam * exp(-lam * tau)``; zero for ``tau < 0``."""
    lam = check_positive(lam, "lam")
    arr, scalar = _as_tau(tau)
    out = np.where(arr >= 0, lam * np.exp(-lam * np.maximum(arr, 0.0)), 0.0)
    return _ret(out, scalar)


def lognormal_pdf(tau, mu: float, sigma: float):
    """Lognormal density of dimensionless time; 0 on ``tau <= 0``."""
    mu = check_finite_scalar(mu, "mu")
    sigma = check_positive(sigma, "sigma")
    arr, scalar = _as_tau(tau)
    out = np.zeros_like(arr, dtype=float)
    pos = arr > 0
    t = arr[pos]
    z = (np.log(t) - mu) / sigma
    out[pos] = np.exp(-0.5 * z * z) / (t * sigma * _SQRT2PI)
    return _ret(out, scalar)


def lognormal_cdf(tau, mu: float, sigma: float):
    """Lognormal CDF ``(1 + erf((ln tau - mu) / (sigma sqrt 2))) / 2``; 0 on ``tau <= 0``."""
    mu = check_finite_scalar(mu, "mu")
    sigma = check_positive(sigma, "sigma")
    arr, scalar = _as_tau(tau)
    return _ret(_lognormal_cdf_unchecked(arr, mu, sigma), scalar)


def _lognormal_cdf_unchecked(arr: np.ndarray, mu: float, sigma: float) -> np.ndarray:
    out = np.zeros_like(arr, dtype=float)
    pos = arr > 0
    z = (np.log(arr[pos]) - mu) / (sigma * _SQRT2)
    out[pos] = 0.5 * (1.0 + _erf_unchecked(z))
    return out


def _coerce_params(params) -> GdcParams:
    if isinstance(params, GdcParams):
        return params
    try:
        lam, mu, sigma = params
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"expected GdcParams or (lam, mu, sigma), got {params!r}") from None
    return GdcParams(float(lam), float(mu), float(sigma))


def gdc_flux(tau, params):
    """Unnormalized GDC ``Exp(tau | lam) * Phi(tau | mu, sigma)``.

    ``params`` is a :class:`GdcParams` or a ``(lam, mu, sigma)`` triple.
    Multiply by ``1 / gdc_area(params)`` for unit area.
    """
    p = _coerce_params(params)
    arr, scalar = _as_tau(tau)
    return _ret(_gdc_unchecked(arr, p.lam, p.mu, p.sigma), scalar)


def _gdc_unchecked(tau: np.ndarray, lam: float, mu: float, sigma: float) -> np.ndarray:
    out = np.zeros_like(tau, dtype=float)
    pos = tau > 0
    t = tau[pos]
    z = (np.log(t) - mu) / (sigma * _SQRT2)
    out[pos] = lam * np.exp(-lam * t) * 0.5 * (1.0 + _erf_unchecked(z))
    return out


def gdc_tau_max(params) -> float:
    """Upper limit of the quadrature part of :func:`gdc_area`."""
    p = _coerce_params(params)
    return math.exp(p.mu + 6.0 * p.sigma) + 20.0 / p.lam


def gdc_area(params) -> float:
    """Total integral of :func:`gdc_flux` over ``(0, inf)``.

    Adaptive Gauss-Kronrod quadrature on ``(0, tau_max]`` plus the
    exponential tail beyond it, where the CDF factor is within 1e-9 of one.
    """
    p = _coerce_params(params)
    upper = gdc_tau_max(p)
    median = math.exp(p.mu)
    knots = [x for x in (median, 1.0 / p.lam) if 0 < x < upper]
    lam, mu, k = p.lam, p.mu, 1.0 / (p.sigma * _SQRT2)

    def integrand(t):
        # Scalar form of _gdc_unchecked; quad calls it point by point.
        if t <= 0.0:
            return 0.0
        return lam * math.exp(-lam * t) * 0.5 * (1.0 + math.erf((math.log(t) - mu) * k))

    value, _ = integrate.quad(
        integrand, 0.0, upper, points=sorted(set(knots)) or None,
        limit=200, epsabs=1e-13, epsrel=1e-12,
    )
    return value + integrand(upper) / lam


def gdc_normalization(params) -> float:
    """Coefficient ``1 / gdc_area`` giving the GDC unit area."""
    return 1.0 / gdc_area(params)


def knudsen_ratio(params) -> float:
    """``lam * exp(mu)``, i.e. ``lam / exp(-mu)``; ~0.209 for ideal Knudsen transport."""
    p = _coerce_params(params)
    return p.lam * math.exp(p.mu)


def residence_time(params) -> float:
    """Sum of the two factors' means, ``1/lam + exp(mu + sigma^2 / 2)``."""
    p = _coerce_params(params)
    return 1.0 / p.lam + math.exp(p.mu + 0.5 * p.sigma ** 2)


def eta_from_gdc(params):
    """Per-pulse transport estimate ``1/lam + exp(mu + sigma^2/2)``.

    ``params`` is one parameter set (returns a float) or a sequence of them
    (returns an array, one entry per pulse). Identical to
    :func:`residence_time` for dimensionless-time fits; carries seconds when
    the parameters were fit in clock time.
    """
    if isinstance(params, GdcParams):
        return residence_time(params)
    return np.array([residence_time(p) for p in params], dtype=float)
