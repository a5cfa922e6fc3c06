"""Fit standard and generalized diffusion curves to TAP pulse responses and
fingerprint the transport regime over a pulse series."""

__version__ = "0.1.0"

from .curves import (
    KNUDSEN_IDEAL,
    KNUDSEN_RATIO,
    GdcParams,
    ReactorConfig,
    SdcParams,
    eta_from_gdc,
    exponential_pdf,
    gdc_area,
    gdc_flux,
    gdc_normalization,
    knudsen_ratio,
    lognormal_cdf,
    lognormal_pdf,
    residence_time,
    sdc_flux,
    sdc_fstar,
)
from .errors import (
    DegenerateTraceError,
    DomainError,
    GdcFitError,
    InsufficientDataError,
    InvalidArgumentError,
    RankDeficiencyError,
    TraceParseError,
)
from .estimators import GDCRegressor, PulseNormalizer, SDCRegressor, TransportFingerprint
from .fingerprint import (
    FingerprintReport,
    OlsResult,
    Regime,
    SeriesPoint,
    classify,
    eta_series,
    ols_fit,
    ratio_diagnostic,
)
from .fit import FitModel, FitOptions, FitResult, conversion, default_init, fit_gdc, fit_sdc
from .io import read_report, read_traces, write_report, write_traces
from .preprocess import NormalizedPulse, PulseTrace, area_normalize, baseline_shift, flux_range, normalize
from .specfun import erf, reg_inc_beta, student_t_two_sided_p
from .synth import RegimeModel, SynthConfig, generate_pulse, generate_series
