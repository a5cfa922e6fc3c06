"""End-to-end analysis of single pulses and pulse series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import curves, synth
from .errors import DegenerateTraceError, InvalidArgumentError, RankDeficiencyError
from .fingerprint import SeriesPoint, classify, intercept_corrected_ratio, ols_fit
from .fit import FitOptions, FitResult, fit_gdc, fit_sdc
from .preprocess import PulseTrace, flux_range, normalize

MODELS = ("gdc", "sdc", "both")


@dataclass
class PulseAnalysis:
    trace: PulseTrace
    flux_range: float
    gdc: FitResult | None = None
    sdc: FitResult | None = None
    error: str | None = None

    @property
    def pulse_id(self) -> str:
        return self.trace.pulse_id

    @property
    def converged(self) -> bool:
        fits = [f for f in (self.gdc, self.sdc) if f is not None]
        return self.error is None and bool(fits) and all(f.converged for f in fits)


def analyze_pulse(trace: PulseTrace, model: str = "both", opts: FitOptions | None = None) -> PulseAnalysis:
    """Normalize one trace and fit the selected model(s).

    Fitting failures (rank deficiency, degenerate traces) are recorded in
    ``error`` rather than raised.
    """
    if model not in MODELS:
        raise InvalidArgumentError(f"model must be one of {MODELS}, got {model!r}")
    out = PulseAnalysis(trace=trace, flux_range=flux_range(trace))
    try:
        pulse = normalize(trace)
        if model in ("gdc", "both"):
            out.gdc = fit_gdc(pulse, opts=opts)
        if model in ("sdc", "both"):
            out.sdc = fit_sdc(pulse, opts=opts)
    except (RankDeficiencyError, DegenerateTraceError, InvalidArgumentError) as exc:
        out.error = f"{type(exc).__name__}: {exc}"
    return out


def analyze_series(traces: Iterable[PulseTrace], model: str = "both", opts: FitOptions | None = None) -> list[PulseAnalysis]:
    """Analyze every trace; the result is ordered by pulse id."""
    results = [analyze_pulse(tr, model, opts) for tr in traces]
    return sorted(results, key=lambda a: a.pulse_id)


SERIES_COLUMNS = (
    "pulse_id", "injection_nmol", "gain", "flux_range",
    "gdc_converged", "gdc_lam", "gdc_mu", "gdc_sigma", "gdc_beta", "gdc_x_bar",
    "gdc_rmse", "gdc_r2", "gdc_area_fraction", "knudsen_ratio", "gdc_eta",
    "sdc_converged", "sdc_eta", "sdc_scale", "sdc_x_bar", "sdc_rmse", "sdc_r2",
    "error",
)


def series_row(a: PulseAnalysis) -> dict:
    row = {c: None for c in SERIES_COLUMNS}
    row.update(pulse_id=a.pulse_id, injection_nmol=a.trace.injection_nmol, gain=a.trace.gain,
               flux_range=a.flux_range, error=a.error)
    if a.gdc is not None:
        p = a.gdc.params
        s = a.gdc.model.shape
        row.update(
            gdc_converged=a.gdc.converged, gdc_lam=p["lam"], gdc_mu=p["mu"], gdc_sigma=p["sigma"],
            gdc_beta=p["beta"], gdc_x_bar=p["x_bar"], gdc_rmse=a.gdc.rmse, gdc_r2=a.gdc.r_squared,
            gdc_area_fraction=a.gdc.model.area_fraction, knudsen_ratio=curves.knudsen_ratio(s),
            gdc_eta=curves.residence_time(s),
        )
    if a.sdc is not None:
        p = a.sdc.params
        row.update(
            sdc_converged=a.sdc.converged, sdc_eta=p["eta"], sdc_scale=p["scale"], sdc_x_bar=p["x_bar"],
            sdc_rmse=a.sdc.rmse, sdc_r2=a.sdc.r_squared,
        )
    return row


def series_table(analyses: Sequence[PulseAnalysis]) -> list[dict]:
    return [series_row(a) for a in analyses]


def series_points(analyses: Sequence[PulseAnalysis]) -> list[SeriesPoint]:
    """Converged GDC fits as fingerprint inputs."""
    pts = []
    for a in analyses:
        if a.error is None and a.gdc is not None and a.gdc.converged:
            s = a.gdc.model.shape
            pts.append(SeriesPoint(a.pulse_id, a.trace.injection_nmol, s.lam, s.mu, s.sigma, a.gdc.r_squared))
    return pts


def points_from_table(rows: Iterable[dict]) -> list[SeriesPoint]:
    """Rebuild fingerprint inputs from a series table (converged GDC rows only)."""
    pts = []
    for r in rows:
        if r.get("gdc_converged") not in (True, "True", 1) or r.get("error"):
            continue
        if r.get("gdc_lam") is None:
            continue
        nmol = r.get("injection_nmol")
        pts.append(SeriesPoint(
            str(r["pulse_id"]), None if nmol is None else float(nmol),
            float(r["gdc_lam"]), float(r["gdc_mu"]), float(r["gdc_sigma"]),
            float("nan") if r.get("gdc_r2") is None else float(r["gdc_r2"]),
        ))
    return pts


# -- plot data --------------------------------------------------------------

def fig_fstar_table(n_points: int = 1000, terms: int = curves.DEFAULT_TERMS) -> list[dict]:
    """F* and its lognormal stand-in on tau in [0.001, 1] at rate 1."""
    tau = np.linspace(0.001, 1.0, n_points)
    fstar = curves.sdc_fstar(tau, terms)
    ideal = curves.KNUDSEN_IDEAL
    cdf = curves.lognormal_cdf(tau, ideal.mu, ideal.sigma)
    sdc = curves.sdc_flux(tau, terms)
    return [{"tau": float(a), "fstar": float(b), "lognormal_cdf": float(c), "sdc": float(d)}
            for a, b, c, d in zip(tau, fstar, cdf, sdc)]


def fig_flux_range_table(analyses: Sequence[PulseAnalysis]) -> list[dict]:
    return [{"pulse_id": a.pulse_id, "injection_nmol": a.trace.injection_nmol, "gain": a.trace.gain,
             "flux_range": a.flux_range} for a in analyses]


def fig_r2_table(analyses: Sequence[PulseAnalysis]) -> list[dict]:
    return [{"pulse_id": a.pulse_id, "injection_nmol": a.trace.injection_nmol,
             "sdc_r2": a.sdc.r_squared if a.sdc else None,
             "gdc_r2": a.gdc.r_squared if a.gdc else None,
             "mse_ratio_sdc_over_gdc": (a.sdc.mse / a.gdc.mse) if (a.sdc and a.gdc and a.gdc.mse > 0) else None}
            for a in analyses]


def fig_params_table(analyses: Sequence[PulseAnalysis]) -> list[dict]:
    rows = []
    for a in analyses:
        row = {"pulse_id": a.pulse_id, "injection_nmol": a.trace.injection_nmol,
               "lam": None, "mu": None, "exp_neg_mu": None, "sdc_eta": None, "knudsen_ratio": None,
               "knudsen_boundary": curves.KNUDSEN_RATIO}
        if a.gdc is not None:
            s = a.gdc.model.shape
            row.update(lam=s.lam, mu=s.mu, exp_neg_mu=math.exp(-s.mu), knudsen_ratio=curves.knudsen_ratio(s))
        if a.sdc is not None:
            row["sdc_eta"] = a.sdc.model.shape.eta
        rows.append(row)
    return rows


def fig_intercept_ratio_table(analyses: Sequence[PulseAnalysis], split_nmol: float = synth.TRANSITION_NMOL) -> list[dict]:
    """``(lam - a0) / exp(-mu)`` with ``a0`` from separate OLS fits below and above ``split_nmol``."""
    pts = series_points(analyses)
    rows = []
    for below in (True, False):
        part = [p for p in pts if p.injection_nmol is not None and (p.injection_nmol <= split_nmol) == below]
        if len(part) < 3:
            continue
        x = np.array([math.exp(-p.mu) for p in part])
        ols = ols_fit(x, [p.lam for p in part])
        for p, r in zip(part, intercept_corrected_ratio(part, ols.a0)):
            rows.append({"pulse_id": p.pulse_id, "injection_nmol": p.injection_nmol,
                         "partition": "below" if below else "above", "a0": ols.a0,
                         "a1": ols.a1, "p1": ols.p1, "intercept_corrected_ratio": float(r)})
    rows.sort(key=lambda r: r["pulse_id"])
    return rows


def default_figure_series(seed: int = 0, n_pulses: int = 30, noise: float = 0.01) -> list[PulseTrace]:
    """Mixed-regime series over 0.51-24 nmol with the gain switch at 12.2 nmol."""
    base = synth.SynthConfig(noise_sigma=noise, rng_seed=seed, pulse_id="pulse",
                             baseline_offset=0.002, drift_slope=-0.0005)
    schedule = np.linspace(0.51, 24.0, n_pulses)
    return synth.generate_series(base, schedule, synth.RegimeModel.mixed())


def fingerprint_series(analyses: Sequence[PulseAnalysis], alpha: float):
    return classify(series_points(analyses), alpha)
