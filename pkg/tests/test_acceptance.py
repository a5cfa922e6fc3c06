"""Exit criteria. Each test prints one PASS/FAIL line, then asserts."""

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate, optimize

from gdcfit import (
    KNUDSEN_IDEAL,
    PulseTrace,
    RegimeModel,
    SynthConfig,
    fit_gdc,
    generate_pulse,
    generate_series,
    knudsen_ratio,
    lognormal_cdf,
    lognormal_pdf,
    normalize,
    ols_fit,
    residence_time,
    sdc_flux,
    student_t_two_sided_p,
)
from gdcfit.cli import EXIT_OK, main
from gdcfit.fit import GDC_PARAM_NAMES, sum_of_squares
from gdcfit.pipeline import analyze_series, fingerprint_series

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    def emit(number, checks, elapsed, budget):
        failed = [name for name, ok in checks if not ok]
        if elapsed >= budget:
            failed.append(f"runtime {elapsed:.2f}s >= {budget}s")
        tag = "PASS" if not failed else "FAIL"
        detail = "; ".join(name for name, _ in checks)
        if failed:
            detail = "failed: " + "; ".join(failed)
        with capsys.disabled():
            print(f"\n{tag} criterion {number} ({elapsed:.2f}s): {detail}")
        assert not failed, failed
    return emit


def test_criterion_1_gdc_reproduces_sdc(verdict):
    start = time.perf_counter()
    trace = generate_pulse(SynthConfig(time_grid=np.linspace(0.001, 3.0, 1000)))
    r = fit_gdc(normalize(trace))
    s = r.model.shape
    ratio = knudsen_ratio(s)
    elapsed = time.perf_counter() - start
    verdict(1, [
        (f"lam={s.lam:.4f} in [2.41, 2.51]", 2.41 <= s.lam <= 2.51),
        (f"mu={s.mu:.4f} in [-2.48, -2.38]", -2.48 <= s.mu <= -2.38),
        (f"sigma={s.sigma:.4f} in [0.48, 0.52]", 0.48 <= s.sigma <= 0.52),
        (f"rmse={r.rmse:.2e} <= 0.005", r.rmse <= 0.005),
        (f"r2={r.r_squared:.6f} >= 0.999", r.r_squared >= 0.999),
        (f"knudsen_ratio={ratio:.4f} in [0.210, 0.224]", 0.210 <= ratio <= 0.224),
        ("converged", r.converged),
    ], elapsed, 5.0)


def test_criterion_2_sdc_constants(verdict):
    start = time.perf_counter()
    quad = lambda f: integrate.quad(f, 0, 0.1, limit=200)[0] + integrate.quad(f, 0.1, np.inf, limit=200)[0]
    area = quad(sdc_flux)
    mean = quad(lambda tau: tau * sdc_flux(tau)) / area
    peak = optimize.minimize_scalar(lambda tau: -sdc_flux(tau), bounds=(0.05, 0.5),
                                    method="bounded", options={"xatol": 1e-10})
    t_peak, h_peak = peak.x, -peak.fun
    elapsed = time.perf_counter() - start
    verdict(2, [
        (f"area={area:.9f}", abs(area - 1) <= 1e-6),
        (f"mean residence={mean:.7f}", abs(mean - 0.5) <= 1e-4),
        (f"peak time={t_peak:.6f}", abs(t_peak - 1 / 6) <= 1e-3),
        (f"peak time x height={t_peak * h_peak:.4f}", abs(t_peak * h_peak - 0.31) <= 0.01),
    ], elapsed, 1.0)


def test_criterion_3_knudsen_constants(verdict):
    start = time.perf_counter()
    ratio = knudsen_ratio(KNUDSEN_IDEAL)
    rt = residence_time(KNUDSEN_IDEAL)
    elapsed = time.perf_counter() - start
    verdict(3, [
        (f"knudsen_ratio={ratio:.6f}", abs(ratio - 0.2092) <= 5e-4),
        (f"residence_time={rt:.6f}", abs(rt - 0.501) <= 1e-3),
    ], elapsed, 0.1)


def _labels(kind, lo, hi, seeds):
    labels = []
    for seed in seeds:
        traces = generate_series(SynthConfig(noise_sigma=0.01, rng_seed=seed),
                                 np.linspace(lo, hi, 20), RegimeModel(kind=kind))
        rep = fingerprint_series(analyze_series(traces, "gdc"), 0.05)
        labels.append((rep.regime.value, rep.ols.p0, rep.ols.p1))
    return labels


def test_criterion_4_fingerprint_discrimination(verdict):
    start = time.perf_counter()
    seeds = range(100)
    kn = _labels("knudsen", 0.5, 10.0, seeds)
    nk = _labels("non_knudsen", 10.0, 24.0, seeds)
    kn_ok = sum(1 for label, _, p1 in kn if label == "Knudsen" and p1 > 0.05)
    nk_ok = sum(1 for label, p0, p1 in nk if label == "NonKnudsen" and p0 <= 0.05 and p1 <= 0.05)
    elapsed = time.perf_counter() - start
    verdict(4, [
        (f"Knudsen {kn_ok}/100 >= 95", kn_ok >= 95),
        (f"NonKnudsen {nk_ok}/100 >= 95", nk_ok >= 95),
    ], elapsed, 60.0)


def test_criterion_5_gdc_sdc_ordering(verdict):
    start = time.perf_counter()
    traces = generate_series(SynthConfig(noise_sigma=0.01, rng_seed=0),
                             np.linspace(10.0, 24.0, 20), RegimeModel.non_knudsen())
    analyses = analyze_series(traces, "both")
    gaps = [a.gdc.r_squared - a.sdc.r_squared for a in analyses]
    sdc = analyze_series([generate_pulse(SynthConfig())], "sdc")[0].sdc
    elapsed = time.perf_counter() - start
    verdict(5, [
        (f"GDC R2 > SDC R2 on {sum(g > 0 for g in gaps)}/{len(gaps)} non-Knudsen pulses", all(g > 0 for g in gaps)),
        (f"noiseless SDC R2={sdc.r_squared:.8f} >= 0.9999", sdc.r_squared >= 0.9999),
    ], elapsed, 60.0)


def _ols_closed_form(x, y):
    n = len(x)
    xm, ym = np.mean(x), np.mean(y)
    sxx = np.sum((x - xm) ** 2)
    a1 = np.sum((x - xm) * (y - ym)) / sxx
    a0 = ym - a1 * xm
    s2 = np.sum((y - a0 - a1 * x) ** 2) / (n - 2)
    return a0, a1, math.sqrt(s2 * (1 / n + xm ** 2 / sxx)), math.sqrt(s2 / sxx)


def _t_tail_by_quadrature(t, dof):
    c = math.exp(math.lgamma((dof + 1) / 2) - math.lgamma(dof / 2)) / math.sqrt(dof * math.pi)
    dens = lambda u: c * (1 + u * u / dof) ** (-(dof + 1) / 2)
    return 2 * integrate.quad(dens, abs(t), np.inf, epsabs=1e-14, epsrel=1e-12)[0]


def test_criterion_6_oracle_equivalence(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    x = rng.uniform(0.5, 8.0, 25)
    y = 1.1 + 0.06 * x + rng.normal(0, 0.01, 25)
    ols = ols_fit(x, y)
    want = _ols_closed_form(x, y)
    ols_err = max(abs(a - b) for a, b in zip((ols.a0, ols.a1, ols.se0, ols.se1), want))

    tau = np.linspace(0.05, 3.0, 60)
    fd_err = 0.0
    for mu, sigma in ((-2.43, 0.5), (0.3, 1.2)):
        h = 1e-6
        fd = (lognormal_cdf(tau + h, mu, sigma) - lognormal_cdf(tau - h, mu, sigma)) / (2 * h)
        fd_err = max(fd_err, float(np.max(np.abs(fd - lognormal_pdf(tau, mu, sigma)))))

    grid = [(t, dof) for t in (0.1, 0.7, 1.5, 2.5, 4.0) for dof in (1, 3, 10, 30)]
    t_err = max(abs(student_t_two_sided_p(t, dof) - _t_tail_by_quadrature(t, dof)) for t, dof in grid)
    elapsed = time.perf_counter() - start
    verdict(6, [
        (f"OLS max error {ols_err:.1e} <= 1e-12", ols_err <= 1e-12),
        (f"lognormal CDF derivative error {fd_err:.1e} <= 1e-6", fd_err <= 1e-6),
        (f"t p-value error {t_err:.1e} <= 1e-8 on {len(grid)} points", t_err <= 1e-8 and len(grid) == 20),
    ], elapsed, 30.0)


def test_criterion_7_pipeline_invariances(verdict, tmp_path):
    start = time.perf_counter()
    trace = generate_pulse(SynthConfig(baseline_offset=0.01, noise_sigma=0.01, rng_seed=7))
    ref = normalize(trace).flux_bar
    scale_err = max(float(np.max(np.abs(normalize(PulseTrace(trace.times, c * trace.flux)).flux_bar - ref)))
                    for c in (0.5, 3.0, 100.0))

    grad_max = 0.0
    for tr in (generate_pulse(SynthConfig()), trace):
        pulse = normalize(tr)
        r = fit_gdc(pulse)
        p = r.params
        for k in GDC_PARAM_NAMES:
            h = 1e-6 * max(abs(p[k]), 1.0)
            g = (sum_of_squares(pulse, r, {k: p[k] + h}) - sum_of_squares(pulse, r, {k: p[k] - h})) / (2 * h)
            grad_max = max(grad_max, abs(g))

    # same seed twice gives identical traces; the same input twice gives identical reports
    for d in ("a", "b"):
        assert main(["simulate", "--regime", "mixed", "--n-pulses", "6", "--seed", "11",
                     "-o", str(tmp_path / d)]) == EXIT_OK
    traces = sorted(f.name for f in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in traces)
    for d in ("ra", "rb"):
        assert main(["series", "-i", str(tmp_path / "a"), "-o", str(tmp_path / d)]) == EXIT_OK
    names = ("report.json", "summary.txt", "series.csv")
    same = same and all((tmp_path / "ra" / n).read_bytes() == (tmp_path / "rb" / n).read_bytes() for n in names)
    same = same and bool(json.loads((tmp_path / "ra" / "report.json").read_text()))
    elapsed = time.perf_counter() - start
    verdict(7, [
        (f"scale invariance error {scale_err:.1e} <= 1e-12", scale_err <= 1e-12),
        (f"gradient {grad_max:.1e} <= 1e-6", grad_max <= 1e-6),
        ("byte-identical reports", same),
    ], elapsed, 60.0)
