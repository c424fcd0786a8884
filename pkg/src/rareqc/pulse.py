"""Pulse synthesis and analysis.

Waveforms are complex baseband envelopes ``z(t)`` in Rabi-frequency units
(MHz) sitting on a ``carrier`` offset (MHz) from the lab reference, so the
field is ``z(t) * exp(2j*pi*carrier*t)``.  The instantaneous frequency is
``carrier + d(arg z)/dt / 2pi``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AdiabaticityViolation, AliasingError, OutOfBand, SidebandOverlap, TruncationError

DEFAULT_SAMPLE_RATE = 200.0  # MHz
QUBIT_SPLITTING = 10.2  # MHz, |0>-|1> line separation
ANTIALIAS_FACTOR = 10.0
TRUNCATION_WIDTHS = 10.0  # sech tails kept on each side, in units of 1/beta
PHASE_MASK = 0.01  # phase shown where envelope exceeds this fraction of its peak


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled complex envelope.

    ``samples[k]`` belongs to the interval ``[k, k+1] / sample_rate`` us and
    is taken at its centre.
    """

    samples: np.ndarray
    sample_rate: float = DEFAULT_SAMPLE_RATE
    carrier: float = 0.0
    max_rabi: float | None = None

    def __post_init__(self):
        z = np.array(self.samples, dtype=complex).ravel()
        if not np.all(np.isfinite(z)):
            raise ValueError("waveform samples must be finite")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.max_rabi is not None and z.size and np.abs(z).max() > self.max_rabi * (1 + 1e-12):
            raise ValueError(f"envelope exceeds max Rabi frequency {self.max_rabi:g} MHz")
        z.setflags(write=False)
        object.__setattr__(self, "samples", z)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "carrier", float(self.carrier))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return (self.sample_rate == other.sample_rate and self.carrier == other.carrier
                and np.array_equal(self.samples, other.samples))

    __hash__ = None

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self)) + 0.5) / self.sample_rate

    @property
    def envelope(self) -> np.ndarray:
        return np.abs(self.samples)

    @property
    def phase(self) -> np.ndarray:
        return np.unwrap(np.angle(self.samples))

    def instantaneous_frequency(self) -> np.ndarray:
        """MHz, from the unwrapped sample phase (central differences)."""
        if len(self) < 2:
            return np.full(len(self), self.carrier)
        return self.carrier + np.gradient(self.phase, self.dt) / (2 * np.pi)

    def replace(self, samples=None, carrier=None) -> "Waveform":
        return Waveform(self.samples if samples is None else samples, self.sample_rate,
                        self.carrier if carrier is None else carrier)

    def scaled(self, factor: float) -> "Waveform":
        return self.replace(self.samples * factor)

    def concat(self, other: "Waveform") -> "Waveform":
        """Append ``other``, re-expressed on this carrier with a continuous lab phase."""
        if other.sample_rate != self.sample_rate:
            raise ValueError("sample rates differ")
        t = (np.arange(len(other)) + len(self) + 0.5) / self.sample_rate
        shift = np.exp(2j * np.pi * (other.carrier - self.carrier) * t)
        return self.replace(np.concatenate([self.samples, other.samples * shift]))

    def field(self) -> np.ndarray:
        """Samples of the field relative to the lab reference (carrier folded in)."""
        return self.samples * np.exp(2j * np.pi * self.carrier * self.times)

    def energy(self) -> float:
        """Integral of |z|^2 dt (MHz^2 us)."""
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)

    def spectrum(self, oversample: int = 8):
        """(frequency MHz incl. carrier, power) on a zero-padded FFT grid."""
        n = max(1, len(self)) * int(oversample)
        spec = np.fft.fftshift(np.fft.fft(self.samples, n)) * self.dt
        f = np.fft.fftshift(np.fft.fftfreq(n, self.dt)) + self.carrier
        return f, np.abs(spec) ** 2

    def bandwidth(self, fraction: float = 0.999) -> float:
        """Full width (MHz) of the smallest window around the spectral centroid
        holding ``fraction`` of the energy."""
        f, p = self.spectrum(oversample=2)
        total = p.sum()
        if total == 0:
            return 0.0
        centre = np.sum(f * p) / total
        dist = np.abs(f - centre)
        order = np.argsort(dist)
        k = np.searchsorted(np.cumsum(p[order]), fraction * total)
        return float(2 * dist[order[min(k, len(order) - 1)]])

    def spectral_fwhm(self, oversample: int = 16) -> float:
        """Full width at half maximum of the power spectrum (MHz)."""
        f, p = self.spectrum(oversample)
        return _fwhm(f, p)


def _fwhm(x, y):
    k = int(np.argmax(y))
    half = 0.5 * y[k]
    above = y >= half
    lo = k
    while lo > 0 and above[lo - 1]:
        lo -= 1
    hi = k
    while hi < len(y) - 1 and above[hi + 1]:
        hi += 1

    def cross(i, j):  # linear crossing between samples i (below) and j (above)
        return x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i])

    left = cross(lo - 1, lo) if lo > 0 else x[0]
    right = cross(hi + 1, hi) if hi < len(y) - 1 else x[-1]
    return float(right - left)


# ---------------------------------------------------------------------------
# sechyp


@dataclass(frozen=True)
class SechypParams:
    """Complex hyperbolic-secant pulse.

    ``Omega(t) = peak_rabi * sech(width * (t - t0))`` with the chirp
    ``nu(t) = center_frequency + chirp_factor * width / (2 pi) * tanh(width * (t - t0))``.
    ``center_time=None`` puts ``t0`` in the middle of the pulse.
    """

    peak_rabi: float = 1.5
    width: float = 2.5
    chirp_factor: float = 2 * np.pi / 2.5
    center_time: float | None = None
    center_frequency: float = 0.0
    duration: float = 8.2

    def __post_init__(self):
        if self.peak_rabi <= 0 or self.width <= 0 or self.duration <= 0:
            raise ValueError("peak_rabi, width and duration must be positive")
        if self.chirp_factor < 0:
            raise ValueError("chirp_factor must be >= 0")

    @property
    def t0(self) -> float:
        return 0.5 * self.duration if self.center_time is None else float(self.center_time)

    @property
    def chirp_span(self) -> float:
        """Total frequency sweep mu*beta/pi (MHz)."""
        return self.chirp_factor * self.width / np.pi

    @property
    def adiabatic_threshold(self) -> float:
        """Peak Rabi frequency (MHz) above which the transfer is adiabatic:
        ``2 pi Omega0 >= beta * sqrt(mu)``."""
        return self.width * np.sqrt(self.chirp_factor) / (2 * np.pi)

    def with_(self, **kw) -> "SechypParams":
        d = self.to_dict()
        d.update(kw)
        return SechypParams(**d)

    def to_dict(self) -> dict:
        return {"peak_rabi": self.peak_rabi, "width": self.width, "chirp_factor": self.chirp_factor,
                "center_time": self.center_time, "center_frequency": self.center_frequency,
                "duration": self.duration}


def check_adiabatic(params: SechypParams, coupling: float = 1.0) -> None:
    if params.peak_rabi * coupling < params.adiabatic_threshold:
        raise AdiabaticityViolation(
            f"peak Rabi {params.peak_rabi * coupling:.3g} MHz below adiabatic threshold "
            f"{params.adiabatic_threshold:.3g} MHz")


def sechyp(params: SechypParams, sample_rate: float = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Sample a sechyp pulse.  Raises TruncationError when the window cuts the
    envelope above about 1e-4 of its peak."""
    t0, beta = params.t0, params.width
    reach = TRUNCATION_WIDTHS / beta
    if t0 - reach < -1e-12 or t0 + reach > params.duration + 1e-12:
        raise TruncationError(
            f"duration {params.duration:g} us must cover {TRUNCATION_WIDTHS:g}/beta = {reach:g} us "
            "on each side of the centre")
    max_offset = params.chirp_span / 2
    if sample_rate < ANTIALIAS_FACTOR * max_offset:
        raise AliasingError(f"sample rate {sample_rate:g} MHz too low for a {params.chirp_span:g} MHz chirp")
    n = int(round(params.duration * sample_rate))
    x = beta * ((np.arange(n) + 0.5) / sample_rate - t0)
    # ln cosh without overflow
    lncosh = np.abs(x) + np.log1p(np.exp(-2 * np.abs(x))) - np.log(2.0)
    z = params.peak_rabi / np.cosh(x) * np.exp(1j * params.chirp_factor * lncosh)
    return Waveform(z, sample_rate, params.center_frequency)


def sechyp_envelope(params: SechypParams, t):
    """Exact complex envelope at times ``t`` (us), for oracles and interpolation."""
    x = params.width * (np.asarray(t, float) - params.t0)
    lncosh = np.abs(x) + np.log1p(np.exp(-2 * np.abs(x))) - np.log(2.0)
    return params.peak_rabi / np.cosh(x) * np.exp(1j * params.chirp_factor * lncosh)


# ---------------------------------------------------------------------------
# two-colour


def two_color(base: Waveform, splitting: float = QUBIT_SPLITTING, relative_phase: float = 0.0,
              balance: float = 1.0, phase_track=None) -> Waveform:
    """Copies of ``base`` at ``carrier -/+ splitting/2``.

    The upper component carries ``-balance * exp(-1j * relative_phase)``, so
    with the coupling convention of :mod:`rareqc.dynamics` the qubit state
    ``(|0> + exp(-1j*phi)|1>)/sqrt(2)`` is dark when the lower component
    drives |0> and the upper one drives |1>.  ``phase_track`` (radians, one
    value per sample) is an extra time-dependent phase on the upper
    component.
    """
    if base.sample_rate < ANTIALIAS_FACTOR * splitting:
        raise AliasingError(
            f"sample rate {base.sample_rate:g} MHz below {ANTIALIAS_FACTOR:g} x splitting {splitting:g} MHz")
    t = (np.arange(len(base)) + 0.5) / base.sample_rate
    upper = balance * np.exp(-1j * relative_phase) * np.exp(1j * np.pi * splitting * t)
    if phase_track is not None:
        upper = upper * np.exp(1j * np.asarray(phase_track, float))
    beat = np.exp(-1j * np.pi * splitting * t) - upper
    return base.replace(base.samples * beat)


# ---------------------------------------------------------------------------
# AOM


@dataclass(frozen=True, eq=False)
class AomModel:
    """Acousto-optic modulator limits.

    ``calibration`` is a ``(drive, amplitude)`` pair of increasing tables:
    drive is normalised to the requested peak, amplitude is the delivered
    fraction of it.  ``None`` is the identity.  Amplitudes more than ``dynamic_range`` decades below
    the peak are lost.
    """

    center: float = 0.0
    range: float = 200.0
    calibration: tuple | None = None
    dynamic_range: float = 6.0

    def __post_init__(self):
        if self.range <= 0:
            raise ValueError("AOM range must be positive")
        if self.dynamic_range <= 0:
            raise ValueError("dynamic_range must be positive")
        if self.calibration is not None:
            drive, amp = (np.asarray(a, float) for a in self.calibration)
            if drive.shape != amp.shape or drive.ndim != 1 or drive.size < 2:
                raise ValueError("calibration needs two equal-length 1-D tables")
            if np.any(np.diff(drive) <= 0) or np.any(np.diff(amp) <= 0):
                raise ValueError("calibration must be monotone increasing")
            object.__setattr__(self, "calibration", (drive, amp))

    @property
    def band(self):
        return self.center - 0.5 * self.range, self.center + 0.5 * self.range

    @classmethod
    def compressive(cls, saturation: float = 0.5, **kw) -> "AomModel":
        """Saturating response ``amp = saturation * tanh(drive / saturation)``."""
        drive = np.linspace(0.0, 1.0, 201)
        return cls(calibration=(drive, saturation * np.tanh(drive / saturation)), **kw)


def aom_apply(wave: Waveform, model: AomModel, threshold: float = 1e-6) -> Waveform:
    """Pass ``wave`` through the AOM: band check, amplitude map, dynamic-range floor.

    Spectral bins above ``threshold`` of the peak power must lie inside the
    deflection band, otherwise :class:`OutOfBand` is raised.  Phases are
    untouched.
    """
    z = wave.samples
    if len(wave) == 0:
        return wave
    f, p = wave.spectrum(oversample=2)
    lo, hi = model.band
    live = p > threshold * p.max() if p.max() > 0 else np.zeros_like(p, bool)
    if np.any(live) and (f[live].min() < lo or f[live].max() > hi):
        raise OutOfBand(f"spectral content spans {f[live].min():.3g}..{f[live].max():.3g} MHz, "
                        f"outside the AOM band {lo:g}..{hi:g} MHz")
    mag = np.abs(z)
    peak = mag.max()
    if peak == 0:
        return wave
    rel = mag / peak
    if model.calibration is not None:
        drive, amp = model.calibration
        out = np.interp(rel, drive / drive[-1], amp)
    else:
        out = rel
    out = np.where(rel < 10.0 ** (-model.dynamic_range), 0.0, out)
    if model.calibration is None and np.all(out == rel):
        return wave
    scale = np.divide(out * peak, mag, out=np.zeros_like(mag), where=mag > 0)
    return wave.replace(z * scale)


# ---------------------------------------------------------------------------
# beat analysis


class BeatTrace(NamedTuple):
    envelope: np.ndarray
    phase: np.ndarray  # NaN where the envelope is below the mask level


def beat_signal(wave: Waveform, reference_frequency: float, reference_amplitude: float | None = None):
    """Detected intensity ``|A_r exp(2j pi r t) + z(t) exp(2j pi c t)|^2``."""
    a = float(np.abs(wave.samples).max()) if reference_amplitude is None else float(reference_amplitude)
    t = wave.times
    return np.abs(a * np.exp(2j * np.pi * reference_frequency * t) + wave.field()) ** 2


def beat_characterize(wave: Waveform, reference_frequency: float,
                      reference_amplitude: float | None = None, mask: float = PHASE_MASK,
                      intensity=None) -> BeatTrace:
    """Recover envelope and phase of ``wave`` from its beat with a reference.

    The cross term sits at ``carrier - reference_frequency``; it is isolated
    with an FFT band-pass of half-width ``|offset|/2``, shifted to baseband
    and divided by the reference amplitude.  ``intensity`` may supply a
    measured trace; otherwise it is simulated.
    """
    if len(wave) == 0:
        return BeatTrace(np.zeros(0), np.zeros(0))
    a = float(np.abs(wave.samples).max()) if reference_amplitude is None else float(reference_amplitude)
    if a <= 0:
        raise ValueError("reference amplitude must be positive")
    offset = wave.carrier - reference_frequency
    bw = wave.bandwidth()
    if abs(offset) < 3 * bw:
        raise SidebandOverlap(f"reference offset {abs(offset):g} MHz below 3 x bandwidth {bw:.3g} MHz")
    if abs(offset) + bw > 0.5 * wave.sample_rate:
        raise SidebandOverlap(f"beat at {abs(offset):g} MHz does not fit below Nyquist")
    i_t = beat_signal(wave, reference_frequency, a) if intensity is None else np.asarray(intensity, float)
    n = len(i_t)
    spec = np.fft.fft(i_t)
    f = np.fft.fftfreq(n, wave.dt)
    keep = np.abs(f - offset) < 0.5 * abs(offset)
    side = np.fft.ifft(np.where(keep, spec, 0.0))
    t = wave.times
    z = side * np.exp(-2j * np.pi * offset * t) / a
    env = np.abs(z)
    live = env > mask * env.max()
    phase = np.full(n, np.nan)
    if np.any(live):
        phase[live] = np.unwrap(np.angle(z[live]))
    return BeatTrace(env, phase)


def beat_errors(wave: Waveform, trace: BeatTrace, mask: float = PHASE_MASK):
    """RMS envelope error (fraction of peak) and RMS phase error (rad) inside the mask."""
    env = wave.envelope
    peak = env.max() if env.size else 0.0
    if peak == 0:
        return 0.0, 0.0
    env_err = float(np.sqrt(np.mean((trace.envelope - env) ** 2)) / peak)
    live = (env > mask * peak) & np.isfinite(trace.phase)
    d = np.angle(np.exp(1j * (trace.phase[live] - wave.phase[live])))
    return env_err, float(np.sqrt(np.mean(d ** 2))) if d.size else 0.0
