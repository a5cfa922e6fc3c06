import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gdcfit import (
    KNUDSEN_IDEAL,
    InsufficientDataError,
    InvalidArgumentError,
    RankDeficiencyError,
    Regime,
    SeriesPoint,
    classify,
    eta_series,
    ols_fit,
    ratio_diagnostic,
    residence_time,
)
from gdcfit.fingerprint import decide_regime, injection_slope_check, intercept_corrected_ratio


def _ols_by_normal_equations(x, y):
    """Matrix route: beta = (X'X)^-1 X'y, cov = s^2 (X'X)^-1."""
    X = np.column_stack([np.ones_like(x), x])
    xtx_inv = np.linalg.inv(X.T @ X)
    beta = xtx_inv @ X.T @ y
    resid = y - X @ beta
    s2 = resid @ resid / (len(x) - 2)
    se = np.sqrt(np.diag(s2 * xtx_inv))
    t = beta / se
    p = 2 * stats.t.sf(np.abs(t), len(x) - 2)
    return beta, se, t, p


def _series(lam_fn, mu, sigma=0.5):
    return [SeriesPoint(f"p{i:02d}", float(i + 1), lam_fn(m), m, sigma) for i, m in enumerate(mu)]


def _line_seed(seed, n=30):
    rng = np.random.default_rng(seed)
    x = np.linspace(2.0, 14.0, n)
    return x, 1.095 + 0.063 * x + rng.normal(0, 0.05, n)


class TestOls:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_normal_equations(self, seed):
        x, y = _line_seed(seed)
        ours = ols_fit(x, y)
        beta, se, t, p = _ols_by_normal_equations(x, y)
        assert abs(ours.a0 - beta[0]) < 1e-12 and abs(ours.a1 - beta[1]) < 1e-12
        assert abs(ours.se0 - se[0]) < 1e-12 and abs(ours.se1 - se[1]) < 1e-12
        assert abs(ours.t0 - t[0]) < 1e-9 and abs(ours.t1 - t[1]) < 1e-9
        assert abs(ours.p1 - p[1]) < 1e-10 and ours.dof == 28

    def test_recovers_truth_within_three_se(self):
        x, y = _line_seed(42)
        r = ols_fit(x, y)
        assert abs(r.a0 - 1.095) < 3 * r.se0
        assert abs(r.a1 - 0.063) < 3 * r.se1

    def test_exact_line(self):
        r = ols_fit([0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
        assert r.a0 == pytest.approx(0.0, abs=1e-15) and r.a1 == pytest.approx(1.0)
        assert r.r_squared == 1.0 and r.degenerate

    def test_constant_response(self):
        r = ols_fit([1.0, 2.0, 3.0, 4.0], [2.0, 2.0, 2.0, 2.0])
        assert r.degenerate
        assert (r.a0, r.a1) == (2.0, 0.0)
        assert (r.se0, r.se1) == (0.0, 0.0)
        assert (r.p0, r.p1) == (0.0, 1.0)
        assert decide_regime(r) is Regime.KNUDSEN

    def test_r_squared(self):
        x, y = _line_seed(1)
        r = ols_fit(x, y)
        assert r.r_squared == pytest.approx(np.corrcoef(x, y)[0, 1] ** 2, rel=1e-12)

    def test_table_layout(self):
        rows = ols_fit(*_line_seed(0)).table()
        assert [r["coef"] for r in rows] == ["a0", "a1"]
        assert list(rows[0]) == ["coef", "estimate", "std_error", "t_value", "p_value"]

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            ols_fit([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(RankDeficiencyError):
            ols_fit([3.0, 3.0, 3.0], [1.0, 2.0, 3.0])
        with pytest.raises(InvalidArgumentError):
            ols_fit([1.0, 2.0, 3.0], [1.0, 2.0])


class TestClassify:
    mu = -np.log(np.linspace(2.25, 7.0, 20))

    def test_knudsen(self):
        rng = np.random.default_rng(0)
        rep = classify(_series(lambda m: 1.546 + rng.normal(0, 0.01), self.mu))
        assert rep.regime is Regime.KNUDSEN
        assert rep.ols.p1 > 0.05 and rep.ols.p0 <= 0.05

    def test_non_knudsen(self):
        rng = np.random.default_rng(0)
        rep = classify(_series(lambda m: 1.095 + 0.063 * math.exp(-m) + rng.normal(0, 0.01), self.mu))
        assert rep.regime is Regime.NON_KNUDSEN

    def test_pure_noise_is_indeterminate(self):
        rng = np.random.default_rng(3)
        rep = classify(_series(lambda m: rng.normal(0, 1.0), self.mu))
        assert rep.ols.p0 > 0.05
        assert rep.regime is Regime.INDETERMINATE

    def test_two_points(self):
        with pytest.raises(InsufficientDataError):
            classify(_series(lambda m: 1.5, self.mu[:2]))

    def test_alpha_validated(self):
        with pytest.raises(InvalidArgumentError):
            classify(_series(lambda m: 1.5, self.mu), alpha=0.0)

    @settings(max_examples=40)
    @given(st.permutations(list(range(20))))
    def test_order_invariant(self, perm):
        rng = np.random.default_rng(5)
        pts = _series(lambda m: 1.095 + 0.063 * math.exp(-m) + rng.normal(0, 0.05), self.mu)
        a = classify(pts)
        b = classify([pts[i] for i in perm])
        assert b.regime is a.regime
        assert b.ols.a1 == pytest.approx(a.ols.a1, rel=1e-12)
        assert b.ols.p1 == pytest.approx(a.ols.p1, rel=1e-9)

    @pytest.mark.parametrize("c", [0.1, 2.0, 50.0])
    def test_label_invariant_under_rate_scaling(self, c):
        for fn, want in ((lambda m: 1.546, Regime.KNUDSEN),
                         (lambda m: 1.095 + 0.063 * math.exp(-m), Regime.NON_KNUDSEN)):
            pts = _series(lambda m: c * fn(m), self.mu)
            assert classify(pts).regime is want

    def test_report_carries_ratios(self):
        pts = _series(lambda m: 1.546, self.mu)
        rep = classify(pts)
        assert rep.pulse_ids == tuple(p.pulse_id for p in pts)
        assert len(rep.knudsen_ratios) == 20 and len(rep.above_boundary) == 20


class TestRatio:
    def test_ideal(self):
        pts = [SeriesPoint(str(i), None, *KNUDSEN_IDEAL.as_tuple()) for i in range(4)]
        ratios, above = ratio_diagnostic(pts)
        assert np.all(np.abs(ratios - 0.209) < 1e-3)

    def test_simulated_sdc_fit_above_boundary(self, sdc_gdc_fit):
        s = sdc_gdc_fit.model.shape
        ratios, above = ratio_diagnostic([SeriesPoint("sdc", None, s.lam, s.mu, s.sigma)])
        assert ratios[0] == pytest.approx(0.217, abs=5e-3)
        assert above[0]

    def test_linear_in_rate(self):
        a = ratio_diagnostic([SeriesPoint("a", None, 1.2, -1.0, 0.5)])[0][0]
        b = ratio_diagnostic([SeriesPoint("a", None, 2.4, -1.0, 0.5)])[0][0]
        assert b == pytest.approx(2 * a, rel=1e-15)

    def test_empty(self):
        with pytest.raises(InsufficientDataError):
            ratio_diagnostic([])


def test_eta_series():
    pts = _series(lambda m: 2.0, [-1.0, -2.0])
    out = eta_series(pts)
    assert out.tolist() == [residence_time(p.params) for p in pts]


def test_intercept_corrected_ratio_recovers_slope():
    mu = -np.log(np.linspace(3, 9, 8))
    pts = _series(lambda m: 1.095 + 0.063 * math.exp(-m), mu)
    assert np.allclose(intercept_corrected_ratio(pts, 1.095), 0.063, atol=1e-14)


def test_injection_slope_check_consistent_series():
    nmol = np.linspace(1, 20, 20)
    conc = 2.0 + 0.5 * nmol
    rng = np.random.default_rng(2)
    pts = [SeriesPoint(str(i), float(n), 1.095 + 0.063 * c + rng.normal(0, 0.005), -math.log(c) + rng.normal(0, 0.005), 0.5)
           for i, (n, c) in enumerate(zip(nmol, conc))]
    chk = injection_slope_check(pts)
    assert chk.on_exp_neg_mu.a1 == pytest.approx(2.0, rel=0.05)
    assert 0.0 <= chk.p_difference <= 1.0
