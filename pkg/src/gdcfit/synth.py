"""Synthetic pulse generator standing in for recorded TAP responses.

Noise is drawn with an explicit, reproducible recipe:

1. A PCG64 bit generator is seeded from ``numpy.random.SeedSequence(entropy)``
   where ``entropy`` is the integer seed, or ``[seed, pulse_index]`` for
   series members.
2. Raw 64-bit outputs ``w`` become uniforms ``u = (w >> 11) * 2**-53``.
3. Consecutive pairs ``(u1, u2)`` go through Box-Muller,
   ``r = sqrt(-2 ln(1 - u1))``, giving ``r cos(2 pi u2)`` and ``r sin(2 pi u2)``
   in that order.

Any implementation of PCG64 + SeedSequence therefore reproduces the
traces bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import curves
from .curves import GdcParams, SdcParams
from .errors import InvalidArgumentError
from .preprocess import PulseTrace

#: Gain setting at which the reference experiment switched amplifier gain.
GAIN_SWITCH_NMOL = 12.2
TRANSITION_NMOL = 10.0

# Regression magnitudes from the reference argon series: constant rate below
# ~10 nmol, an affine rate in exp(-mu) above it.
KNUDSEN_LAMBDA = 1.546
NON_KNUDSEN_A0 = 1.095
NON_KNUDSEN_A1 = 0.063


def default_time_grid() -> np.ndarray:
    return np.linspace(0.001, 3.0, 1000)


def default_gain_scale(gain: int | None) -> float:
    """One decade of amplification per gain step, 1.0 at gain 8."""
    if gain is None:
        return 1.0
    return 10.0 ** (int(gain) - 8)


def gaussian_noise(n: int, entropy) -> np.ndarray:
    """``n`` standard normal deviates via Box-Muller over PCG64 raw outputs."""
    if n < 0:
        raise InvalidArgumentError("n must be >= 0")
    bitgen = np.random.PCG64(np.random.SeedSequence(entropy))
    pairs = (n + 1) // 2
    raw = bitgen.random_raw(2 * pairs).astype(np.uint64)
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log1p(-u1))
    z = np.empty(2 * pairs)
    z[0::2] = r * np.cos(2.0 * math.pi * u2)
    z[1::2] = r * np.sin(2.0 * math.pi * u2)
    return z[:n]


@dataclass(frozen=True)
class SynthConfig:
    """Settings for one synthetic pulse.

    ``noise_sigma`` is relative to the noiseless peak height; offsets and
    drift are in signal units. GDC ground truth is interpreted in clock time
    and normalized to unit area; SDC truth gives ``n_mol * eta * SDC(t eta)``.
    """

    ground_truth: SdcParams | GdcParams = field(default_factory=SdcParams)
    time_grid: np.ndarray = field(default_factory=default_time_grid)
    noise_sigma: float = 0.0
    baseline_offset: float = 0.0
    drift_slope: float = 0.0
    amplitude: float = 1.0
    gain: int | None = None
    gain_scale: Callable[[int | None], float] = default_gain_scale
    rng_seed: int = 0
    pulse_id: str = "synthetic"
    injection_nmol: float | None = None

    def __post_init__(self):
        if not isinstance(self.ground_truth, (SdcParams, GdcParams)):
            raise InvalidArgumentError("ground_truth must be SdcParams or GdcParams")
        t = np.asarray(self.time_grid, dtype=float)
        if t.ndim != 1 or t.size < 2 or not np.all(np.isfinite(t)) or np.any(np.diff(t) <= 0):
            raise InvalidArgumentError("time_grid must be a strictly increasing finite vector")
        if t[0] <= 0 and isinstance(self.ground_truth, SdcParams):
            raise InvalidArgumentError("SDC ground truth needs time_grid > 0")
        if not (self.noise_sigma >= 0 and math.isfinite(self.noise_sigma)):
            raise InvalidArgumentError("noise_sigma must be finite and >= 0")
        if not (self.amplitude > 0 and math.isfinite(self.amplitude)):
            raise InvalidArgumentError("amplitude must be finite and > 0")
        for name in ("baseline_offset", "drift_slope"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"{name} must be finite")
        if isinstance(self.rng_seed, bool) or int(self.rng_seed) != self.rng_seed or self.rng_seed < 0:
            raise InvalidArgumentError("rng_seed must be a non-negative integer")
        object.__setattr__(self, "time_grid", t)


def model_curve(truth: SdcParams | GdcParams, times) -> np.ndarray:
    """Noise-free unit-amplitude flux for the ground truth."""
    t = np.asarray(times, dtype=float)
    if isinstance(truth, SdcParams):
        return truth.n_mol * truth.eta * curves.sdc_flux(t * truth.eta, curves.DEFAULT_TERMS)
    return curves.gdc_flux(t, truth) / curves.gdc_area(truth)


def _truth_metadata(truth) -> dict:
    if isinstance(truth, SdcParams):
        return {"truth_model": "sdc", "truth_eta": truth.eta, "truth_n_mol": truth.n_mol}
    return {"truth_model": "gdc", "truth_lam": truth.lam, "truth_mu": truth.mu, "truth_sigma": truth.sigma}


def truth_from_metadata(metadata: dict) -> SdcParams | GdcParams:
    """Rebuild the ground truth recorded by :func:`generate_pulse`."""
    kind = metadata.get("truth_model")
    if kind == "sdc":
        return SdcParams(eta=float(metadata["truth_eta"]), n_mol=float(metadata["truth_n_mol"]))
    if kind == "gdc":
        return GdcParams(float(metadata["truth_lam"]), float(metadata["truth_mu"]), float(metadata["truth_sigma"]))
    raise InvalidArgumentError("metadata carries no ground truth")


def generate_pulse(config: SynthConfig, entropy=None) -> PulseTrace:
    """Generate one noisy, offset, gain-scaled pulse.

    ``entropy`` overrides the seed material passed to the noise generator
    (default ``config.rng_seed``).
    """
    t = config.time_grid
    scale = config.amplitude * config.gain_scale(config.gain)
    clean = scale * model_curve(config.ground_truth, t)
    flux = clean + config.baseline_offset + config.drift_slope * t
    if config.noise_sigma > 0:
        sd = config.noise_sigma * float(np.max(clean))
        flux = flux + sd * gaussian_noise(t.size, config.rng_seed if entropy is None else entropy)
    meta = _truth_metadata(config.ground_truth)
    meta.update({
        "noise_sigma": config.noise_sigma,
        "baseline_offset": config.baseline_offset,
        "drift_slope": config.drift_slope,
        "amplitude": config.amplitude,
        "gain_scale": scale / config.amplitude,
        "rng_seed": int(config.rng_seed),
    })
    if entropy is not None:
        meta["rng_entropy"] = " ".join(str(int(e)) for e in np.atleast_1d(entropy))
    return PulseTrace(
        times=t, flux=flux, pulse_id=config.pulse_id,
        injection_nmol=config.injection_nmol, gain=config.gain, metadata=meta,
    )


@dataclass(frozen=True)
class RegimeModel:
    """Per-pulse ground truth as a function of injected amount.

    ``exp(-mu) = mu_intercept + mu_slope * nmol`` in every regime. The rate is
    ``knudsen_lambda`` for ``"knudsen"``, ``a0 + a1 * exp(-mu)`` for
    ``"non_knudsen"``, and switches between the two at ``transition_nmol``
    for ``"mixed"``.
    """

    kind: str = "knudsen"
    a0: float = NON_KNUDSEN_A0
    a1: float = NON_KNUDSEN_A1
    knudsen_lambda: float = KNUDSEN_LAMBDA
    mu_intercept: float = 2.0
    mu_slope: float = 0.5
    sigma: float = 0.5
    transition_nmol: float = TRANSITION_NMOL

    def __post_init__(self):
        if self.kind not in ("knudsen", "non_knudsen", "mixed"):
            raise InvalidArgumentError(f"unknown regime model {self.kind!r}")

    @classmethod
    def knudsen(cls, **kw) -> "RegimeModel":
        return cls(kind="knudsen", **kw)

    @classmethod
    def non_knudsen(cls, slope: float = NON_KNUDSEN_A1, **kw) -> "RegimeModel":
        return cls(kind="non_knudsen", a1=slope, **kw)

    @classmethod
    def mixed(cls, **kw) -> "RegimeModel":
        return cls(kind="mixed", **kw)

    def truth(self, nmol: float) -> GdcParams:
        conc = self.mu_intercept + self.mu_slope * nmol
        if not conc > 0:
            raise InvalidArgumentError(f"exp(-mu) mapping is non-positive at {nmol} nmol")
        non_knudsen = self.kind == "non_knudsen" or (self.kind == "mixed" and nmol > self.transition_nmol)
        lam = self.a0 + self.a1 * conc if non_knudsen else self.knudsen_lambda
        return GdcParams(lam=lam, mu=-math.log(conc), sigma=self.sigma)


def generate_series(
    base: SynthConfig,
    nmol_schedule: Sequence[float],
    regime_model: RegimeModel | str = "knudsen",
    *,
    gain_low: int = 8,
    gain_high: int = 7,
    gain_switch_nmol: float | None = GAIN_SWITCH_NMOL,
) -> list[PulseTrace]:
    """One pulse per scheduled injection amount.

    Amplitude is ``base.amplitude * nmol``. Pulses above ``gain_switch_nmol``
    use ``gain_high`` (a lower amplification), the rest ``gain_low``; pass
    ``gain_switch_nmol=None`` to keep ``base.gain`` throughout. Pulse ``i``
    draws its noise from entropy ``[base.rng_seed, i]``.
    """
    schedule = np.asarray(nmol_schedule, dtype=float).reshape(-1)
    if schedule.size == 0:
        raise InvalidArgumentError("nmol_schedule is empty")
    if not np.all(np.isfinite(schedule)) or np.any(schedule <= 0):
        raise InvalidArgumentError("nmol_schedule entries must be finite and > 0")
    if isinstance(regime_model, str):
        regime_model = RegimeModel(kind=regime_model)
    width = max(3, len(str(schedule.size - 1)))
    traces = []
    for i, nmol in enumerate(schedule):
        if gain_switch_nmol is None:
            gain = base.gain
        else:
            gain = gain_high if nmol > gain_switch_nmol else gain_low
        cfg = replace(
            base,
            ground_truth=regime_model.truth(float(nmol)),
            amplitude=base.amplitude * float(nmol),
            gain=gain,
            pulse_id=f"{base.pulse_id}_{i:0{width}d}",
            injection_nmol=float(nmol),
        )
        trace = generate_pulse(cfg, entropy=[int(base.rng_seed), i])
        trace.metadata["regime_model"] = regime_model.kind
        traces.append(trace)
    return traces
