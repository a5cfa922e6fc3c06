"""A small Levenberg-Marquardt least-squares solver.

Minimizes ``sum(fun(x)**2)`` for a residual function ``fun``. The damped
normal equations are solved in column-scaled form, i.e. Marquardt's
``J'J + lambda * diag(J'J)`` with the damping factor multiplied by 10 on a
rejected step and divided by 10 on an accepted one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DAMPING_INIT = 1e-3
DAMPING_MIN = 1e-15
DAMPING_MAX = 1e16


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    cost: float  # sum of squared residuals
    jac: np.ndarray
    iterations: int
    n_fev: int
    converged: bool
    reason: str


def numeric_jacobian(fun, x: np.ndarray, f0: np.ndarray | None = None, rel_step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with step ``rel_step * max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.column_stack(cols)


def levenberg_marquardt(
    fun,
    x0,
    jac=None,
    *,
    max_iter: int = 500,
    ftol: float = 1e-12,
    xtol: float = 1e-10,
    damping: float = DAMPING_INIT,
) -> LMResult:
    """Minimize the sum of squares of ``fun(x)``.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> residual vector``.
    x0 : array_like
        Starting point.
    jac : callable, optional
        ``jac(x) -> d fun / d x`` of shape ``(m, n)``. Central differences
        when omitted.
    max_iter : int
        Maximum number of Jacobian evaluations (outer iterations).
    ftol : float
        Stop when an accepted step improves the cost by a relative amount
        below this.
    xtol : float
        Stop when an accepted step is relatively smaller than this.
    damping : float
        Initial damping factor.

    Returns
    -------
    LMResult
        ``converged`` is False only when ``max_iter`` was exhausted or the
        starting point could not be evaluated.
    """
    x = np.array(x0, dtype=float)
    n_fev = 0

    def evaluate(p):
        nonlocal n_fev
        n_fev += 1
        with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
            return np.asarray(fun(p), dtype=float)

    if jac is None:
        def jacobian(p, r):
            return numeric_jacobian(evaluate, p, r)
    else:
        def jacobian(p, r):
            with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
                return np.asarray(jac(p), dtype=float)

    r = evaluate(x)
    if not np.all(np.isfinite(r)):
        return LMResult(x, r, float("nan"), np.full((r.size, x.size), np.nan), 0, n_fev, False,
                        "residuals not finite at starting point")
    cost = float(r @ r)
    J = jacobian(x, r)
    lam = damping
    eye = np.eye(x.size)

    for iteration in range(1, max_iter + 1):
        if cost == 0.0:
            return LMResult(x, r, cost, J, iteration - 1, n_fev, True, "zero residual")
        g = J.T @ r
        A = J.T @ J
        d = np.sqrt(np.diag(A))
        d[~(d > 0)] = 1.0
        As = A / np.outer(d, d)
        gs = g / d
        while True:
            try:
                step = -np.linalg.solve(As + lam * eye, gs) / d
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_new = x + step
                r_new = evaluate(x_new)
                cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
                if cost_new < cost:
                    break
            lam *= 10.0
            if lam > DAMPING_MAX:
                return LMResult(x, r, cost, J, iteration, n_fev, True, "no decrease possible")

        rel_improvement = (cost - cost_new) / cost
        rel_step = np.linalg.norm(step) / (np.linalg.norm(x) + xtol)
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10.0, DAMPING_MIN)
        J = jacobian(x, r)
        if rel_improvement < ftol:
            return LMResult(x, r, cost, J, iteration, n_fev, True, "relative cost improvement below ftol")
        if rel_step < xtol:
            return LMResult(x, r, cost, J, iteration, n_fev, True, "relative step below xtol")

    return LMResult(x, r, cost, J, max_iter, n_fev, False, "maximum iterations reached")
