"""Transport-regime fingerprinting from a series of GDC fits.

Over consecutive pulses the rate parameter ``lam`` is regressed on the
concentration proxy ``exp(-mu)``:

    lam = a0 + a1 * exp(-mu) + noise

A significant intercept with an insignificant slope means ``lam`` does not
depend on concentration (Knudsen diffusion); both significant means it does
(non-Knudsen transport).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .curves import KNUDSEN_RATIO, GdcParams, eta_from_gdc
from .errors import InsufficientDataError, InvalidArgumentError, RankDeficiencyError
from .specfun import student_t_two_sided_p

DEFAULT_ALPHA = 0.05


class Regime(str, Enum):
    KNUDSEN = "Knudsen"
    NON_KNUDSEN = "NonKnudsen"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class SeriesPoint:
    pulse_id: str
    injection_nmol: float | None
    lam: float
    mu: float
    sigma: float
    fit_r2: float = float("nan")

    @property
    def params(self) -> GdcParams:
        return GdcParams(self.lam, self.mu, self.sigma)


@dataclass(frozen=True)
class OlsResult:
    """Simple linear regression ``y = a0 + a1 x`` with t-test summaries."""

    a0: float
    a1: float
    se0: float
    se1: float
    t0: float
    t1: float
    p0: float
    p1: float
    r_squared: float
    dof: int
    n: int
    degenerate: bool = False

    def table(self) -> list[dict]:
        """Rows in Estimate / Std. Error / t value / Pr(>|t|) layout."""
        return [
            {"coef": "a0", "estimate": self.a0, "std_error": self.se0, "t_value": self.t0, "p_value": self.p0},
            {"coef": "a1", "estimate": self.a1, "std_error": self.se1, "t_value": self.t1, "p_value": self.p1},
        ]

    def predict(self, x) -> np.ndarray:
        return self.a0 + self.a1 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class FingerprintReport:
    regime: Regime
    ols: OlsResult
    alpha: float
    knudsen_ratios: tuple[float, ...]
    pulse_ids: tuple[str, ...] = ()
    above_boundary: tuple[bool, ...] = field(default=())


def _degenerate_p(estimate: float) -> float:
    return 1.0 if estimate == 0.0 else 0.0


def ols_fit(x, y) -> OlsResult:
    """Closed-form ordinary least squares of ``y`` on ``x`` with an intercept.

    With zero residual variance the standard errors are 0 and the p-values
    are reported as 0 for nonzero estimates and 1 for zero estimates, with
    ``degenerate=True``.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape:
        raise InvalidArgumentError(f"x and y differ in length: {x.size} vs {y.size}")
    n = x.size
    if n < 3:
        raise InsufficientDataError(f"OLS with intercept and slope needs >= 3 points, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("x and y must be finite")
    xm = x.mean()
    ym = y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if not sxx > 1e-300 or sxx <= 1e-24 * max(float(x @ x), 1e-300):
        raise RankDeficiencyError("regressor is constant; slope is not identifiable")
    a1 = float(dx @ (y - ym)) / sxx
    a0 = float(ym - a1 * xm)
    resid = y - a0 - a1 * x
    ss_res = float(resid @ resid)
    dy = y - ym
    ss_tot = float(dy @ dy)
    dof = n - 2
    s2 = ss_res / dof
    se1 = math.sqrt(s2 / sxx)
    se0 = math.sqrt(s2 * (1.0 / n + xm * xm / sxx))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    # Exact-line data leaves only rounding noise in the residuals.
    scale = max(float(np.max(np.abs(y))), 1e-300)
    if math.sqrt(ss_res / n) <= 1e-13 * scale:
        return OlsResult(a0, a1, 0.0, 0.0, math.copysign(math.inf, a0) if a0 else 0.0,
                         math.copysign(math.inf, a1) if a1 else 0.0,
                         _degenerate_p(a0), _degenerate_p(a1), r2, dof, n, degenerate=True)
    t0 = a0 / se0
    t1 = a1 / se1
    return OlsResult(a0, a1, se0, se1, t0, t1,
                     student_t_two_sided_p(t0, dof), student_t_two_sided_p(t1, dof), r2, dof, n)


def decide_regime(ols: OlsResult, alpha: float = DEFAULT_ALPHA) -> Regime:
    if ols.p0 <= alpha and ols.p1 > alpha:
        return Regime.KNUDSEN
    if ols.p0 <= alpha and ols.p1 <= alpha:
        return Regime.NON_KNUDSEN
    return Regime.INDETERMINATE


def _as_points(series: Iterable[SeriesPoint]) -> list[SeriesPoint]:
    pts = list(series)
    for p in pts:
        if not isinstance(p, SeriesPoint):
            raise InvalidArgumentError(f"expected SeriesPoint, got {type(p).__name__}")
    return pts


def ratio_diagnostic(series: Sequence[SeriesPoint], boundary: float = KNUDSEN_RATIO):
    """Per-pulse ``lam * exp(mu)`` and whether each exceeds the Knudsen boundary."""
    pts = _as_points(series)
    if not pts:
        raise InsufficientDataError("ratio_diagnostic needs a non-empty series")
    ratios = np.array([p.lam * math.exp(p.mu) for p in pts])
    return ratios, ratios > boundary


def eta_series(series: Sequence[SeriesPoint]) -> np.ndarray:
    """Per-pulse ``1/lam + exp(mu + sigma^2/2)``."""
    pts = _as_points(series)
    if not pts:
        raise InsufficientDataError("eta_series needs a non-empty series")
    return eta_from_gdc([p.params for p in pts])


def classify(series: Sequence[SeriesPoint], alpha: float = DEFAULT_ALPHA) -> FingerprintReport:
    """Regress ``lam`` on ``exp(-mu)`` over the series and label the regime.

    Raises
    ------
    InsufficientDataError
        With fewer than three points.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha!r}")
    pts = _as_points(series)
    if len(pts) < 3:
        raise InsufficientDataError(f"classify needs >= 3 converged pulses, got {len(pts)}")
    x = np.array([math.exp(-p.mu) for p in pts])
    y = np.array([p.lam for p in pts])
    ols = ols_fit(x, y)
    ratios, above = ratio_diagnostic(pts)
    return FingerprintReport(
        regime=decide_regime(ols, alpha),
        ols=ols,
        alpha=alpha,
        knudsen_ratios=tuple(float(r) for r in ratios),
        pulse_ids=tuple(p.pulse_id for p in pts),
        above_boundary=tuple(bool(a) for a in above),
    )


def intercept_corrected_ratio(series: Sequence[SeriesPoint], a0: float) -> np.ndarray:
    """``(lam - a0) / exp(-mu)`` per pulse, isolating the concentration effect."""
    pts = _as_points(series)
    return np.array([(p.lam - a0) * math.exp(p.mu) for p in pts])


@dataclass(frozen=True)
class InjectionSlopeCheck:
    """Slopes of injection size regressed on ``lam`` and on ``exp(-mu)``."""

    on_lambda: OlsResult
    on_exp_neg_mu: OlsResult
    t_difference: float
    p_difference: float


def injection_slope_check(series: Sequence[SeriesPoint]) -> InjectionSlopeCheck:
    """Compare the two single-regressor slopes for injection size.

    The slope difference is tested with ``t = (b1 - c1) / sqrt(se_b^2 + se_c^2)``
    on ``2n - 4`` degrees of freedom.
    """
    pts = _as_points(series)
    if any(p.injection_nmol is None for p in pts):
        raise InvalidArgumentError("every point needs injection_nmol")
    nmol = np.array([p.injection_nmol for p in pts], dtype=float)
    on_lam = ols_fit(np.array([p.lam for p in pts]), nmol)
    on_mu = ols_fit(np.array([math.exp(-p.mu) for p in pts]), nmol)
    se = math.hypot(on_lam.se1, on_mu.se1)
    diff = on_lam.a1 - on_mu.a1
    if se == 0:
        t = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    else:
        t = diff / se
    return InjectionSlopeCheck(on_lam, on_mu, t, student_t_two_sided_p(t, 2 * len(pts) - 4))
