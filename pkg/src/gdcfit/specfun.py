"""Special functions used by the curve models and the significance tests.

``erf`` wraps the vectorised C implementation from :mod:`scipy.special`;
the regularized incomplete beta function is evaluated here with the
modified Lentz continued fraction, and feeds the Student-t tail probability.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special as _sp

from .errors import InvalidArgumentError

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-14
_TINY = 1e-300


def erf(x):
    """Error function, elementwise.

    Accepts scalars or arrays. Non-finite input raises
    :class:`InvalidArgumentError`. Values with ``|x| > 6`` are returned as
    exactly ``+-1``.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("erf requires finite input")
    out = _erf_unchecked(arr)
    if out.ndim == 0:
        return float(out)
    return out


def _erf_unchecked(arr: np.ndarray) -> np.ndarray:
    # Hot path for the curve models; caller guarantees finiteness.
    return np.where(np.abs(arr) > 6.0, np.sign(arr), _sp.erf(arr))


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            break
    return h


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``.

    Parameters
    ----------
    a, b : float
        Shape parameters, both strictly positive.
    x : float
        Upper integration limit in ``[0, 1]``.

    Returns
    -------
    float
        Value in ``[0, 1]``.
    """
    for name, val in (("a", a), ("b", b), ("x", x)):
        if not math.isfinite(val):
            raise InvalidArgumentError(f"reg_inc_beta: {name} must be finite, got {val!r}")
    if a <= 0 or b <= 0:
        raise InvalidArgumentError(f"reg_inc_beta: a and b must be > 0, got a={a!r}, b={b!r}")
    if not 0.0 <= x <= 1.0:
        raise InvalidArgumentError(f"reg_inc_beta: x must lie in [0, 1], got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        value = front * _betacf(a, b, x) / a
    else:
        value = 1.0 - front * _betacf(b, a, 1.0 - x) / b
    return min(1.0, max(0.0, value))


def student_t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability ``P(|T| >= |t|)`` for Student's t."""
    if isinstance(dof, bool) or int(dof) != dof or dof < 1:
        raise InvalidArgumentError(f"dof must be a positive integer, got {dof!r}")
    dof = int(dof)
    if math.isnan(t):
        raise InvalidArgumentError("t statistic is NaN")
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = dof / (dof + t * t)
    return reg_inc_beta(0.5 * dof, 0.5, x)
