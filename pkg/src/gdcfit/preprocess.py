"""Raw trace containers and the shift/normalize steps applied before fitting."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ._validation import check_same_length, check_time_grid, check_1d
from .errors import DegenerateTraceError, InvalidArgumentError


def trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    """Trapezoidal integral of ``y`` over a possibly non-uniform grid ``x``."""
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


@dataclass(frozen=True, eq=False)
class PulseTrace:
    """One recorded outlet-flux response.

    ``metadata`` carries anything else read from or written to trace files,
    including the ground truth of synthetic pulses.
    """

    times: np.ndarray
    flux: np.ndarray
    pulse_id: str = "pulse"
    injection_nmol: float | None = None
    gain: int | None = None
    baseline_shift: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = check_time_grid(self.times, "times")
        flux = check_1d(self.flux, "flux", min_length=2)
        check_same_length(times, flux, "times and flux")
        times.setflags(write=False)
        flux.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "flux", flux)
        object.__setattr__(self, "pulse_id", str(self.pulse_id))
        if self.injection_nmol is not None:
            object.__setattr__(self, "injection_nmol", float(self.injection_nmol))
        if self.gain is not None:
            object.__setattr__(self, "gain", int(self.gain))

    def __len__(self):
        return self.times.size


@dataclass(frozen=True, eq=False)
class NormalizedPulse:
    """Baseline-shifted, unit-area flux on the original time grid."""

    times: np.ndarray
    flux_bar: np.ndarray
    baseline_shift: float
    area_scale: float
    pulse_id: str = "pulse"
    injection_nmol: float | None = None
    gain: int | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    def to_signal_units(self, flux_bar) -> np.ndarray:
        """Map normalized flux values back to the raw trace's units."""
        return np.asarray(flux_bar, dtype=float) * self.area_scale - self.baseline_shift


def baseline_shift(trace: PulseTrace) -> PulseTrace:
    """Subtract the flux minimum so the smallest sample is exactly 0.

    The amount added to the flux (``-min``) is accumulated in
    ``trace.baseline_shift``, so a trace offset by ``-0.2`` records ``0.2``.
    """
    if len(trace) == 0:
        raise InvalidArgumentError("cannot shift an empty trace")
    low = float(np.min(trace.flux))
    return replace(trace, flux=trace.flux - low, baseline_shift=trace.baseline_shift - low)


def area_normalize(trace: PulseTrace) -> NormalizedPulse:
    """Divide a baseline-shifted trace by its trapezoidal area."""
    if np.min(trace.flux) < 0:
        raise InvalidArgumentError("area_normalize expects a baseline-shifted (non-negative) trace")
    area = trapezoid(trace.flux, trace.times)
    if not area > 0 or not np.isfinite(area):
        raise DegenerateTraceError(f"trace {trace.pulse_id!r} has non-positive area {area!r}")
    flux_bar = trace.flux / area
    flux_bar.setflags(write=False)
    return NormalizedPulse(
        times=trace.times,
        flux_bar=flux_bar,
        baseline_shift=trace.baseline_shift,
        area_scale=area,
        pulse_id=trace.pulse_id,
        injection_nmol=trace.injection_nmol,
        gain=trace.gain,
        metadata=dict(trace.metadata),
    )


def normalize(trace: PulseTrace) -> NormalizedPulse:
    """Baseline shift followed by area normalization."""
    return area_normalize(baseline_shift(trace))


def flux_range(trace: PulseTrace) -> float:
    """Maximum minus minimum of the raw flux."""
    return float(np.max(trace.flux) - np.min(trace.flux))


def pulse_from_arrays(times, flux_bar, **kwargs) -> NormalizedPulse:
    """Wrap already-normalized arrays (e.g. a dimensionless model curve)."""
    t = check_time_grid(times)
    f = check_1d(flux_bar, "flux_bar", min_length=2)
    check_same_length(t, f, "times and flux_bar")
    kwargs.setdefault("baseline_shift", 0.0)
    kwargs.setdefault("area_scale", 1.0)
    return NormalizedPulse(times=t, flux_bar=f, **kwargs)
