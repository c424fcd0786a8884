"""Rate-equation optical pumping: spectral pits and burnback.

A scanned burn pulse is reduced to a time-averaged stimulated rate for each
line.  For a line at frequency ``f`` and a scan uniformly covering
``[a, b]`` the rate is::

    R = pi**2 * Omega**2 * c**2 * <L(f - nu)>_scan

with ``Omega`` the Rabi frequency (MHz), ``c`` the line's coupling factor and
``L`` the area-normalised homogeneous Lorentzian (1/MHz), so ``R`` is in
1/us.  Populations then follow exact matrix exponentials of the per-class
rate matrix; excited states decay with the optical lifetime and branch back
to the ground states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .crystal import (
    EXCITED, GROUND, LORENTZ_CUTOFF, N_LEVELS, Ensemble, absorption_spectrum,
)
from .errors import NoPit, PitTooWide

OPTICAL_T1 = 164.0  # us
DEFAULT_RELAXATION = 1000.0  # us between repetitions
SPECTRUM_RESOLUTION = 0.05  # MHz, instrument width used for pit diagnostics
PUMP_CUTOFF = 100.0  # linewidths; pumping tails are cut here
BURNBACK_GUARD = 0.3  # MHz kept clear around each qubit line during re-cleaning
BURNBACK_OFFSET = 5.8  # MHz, default qubit band position above the lower pit edge


@dataclass(frozen=True)
class BurnPulse:
    """A laser scan over ``scan_interval`` (MHz) lasting ``duration`` us.

    ``target`` optionally restricts the ground states the scan acts on
    (indices into (|0>, |1>, |aux>)); ``None`` means every line that falls
    inside the scan is driven, which is what a real laser does.  ``holes``
    are sub-intervals the scan jumps over; the dwell time per MHz stays
    uniform over what is left.
    """

    scan_interval: tuple
    rabi_frequency: float
    duration: float
    target: tuple | None = None
    holes: tuple = ()

    def __post_init__(self):
        a, b = (float(x) for x in self.scan_interval)
        if b < a:
            raise ValueError("scan interval must be ordered")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.rabi_frequency < 0:
            raise ValueError("rabi_frequency must be >= 0")
        object.__setattr__(self, "scan_interval", (a, b))
        if self.target is not None:
            object.__setattr__(self, "target", tuple(int(g) for g in self.target))
        holes = tuple(sorted((float(lo), float(hi)) for lo, hi in self.holes))
        if any(hi < lo for lo, hi in holes):
            raise ValueError("holes must be ordered intervals")
        object.__setattr__(self, "holes", holes)
        if not self.pieces:
            raise ValueError("holes cover the whole scan")

    @property
    def pieces(self) -> list:
        """Scanned sub-intervals once the holes are removed."""
        a, b = self.scan_interval
        if not self.holes:
            return [(a, b)]
        return _guard_gaps((a, b), self.holes)

    def shifted(self, offset: float) -> "BurnPulse":
        a, b = self.scan_interval
        return BurnPulse((a + offset, b + offset), self.rabi_frequency, self.duration,
                         self.target, tuple((lo + offset, hi + offset) for lo, hi in self.holes))

    def to_dict(self) -> dict:
        return {"scan_interval": list(self.scan_interval), "rabi_frequency": self.rabi_frequency,
                "duration": self.duration,
                "target": None if self.target is None else list(self.target),
                "holes": [list(h) for h in self.holes]}

    @classmethod
    def from_dict(cls, d: dict) -> "BurnPulse":
        return cls(tuple(d["scan_interval"]), float(d["rabi_frequency"]), float(d["duration"]),
                   None if d.get("target") is None else tuple(d["target"]),
                   tuple(tuple(h) for h in d.get("holes", ())))


@dataclass(frozen=True)
class PumpSchedule:
    """Ordered ``(pulse, repetitions)`` steps with a relaxation wait after
    every repetition.  ``cycles`` repeats the whole list."""

    steps: tuple = ()
    relaxation: float = DEFAULT_RELAXATION
    cycles: int = 1

    def __post_init__(self):
        steps = tuple((p, int(n)) for p, n in self.steps)
        if any(n < 1 for _, n in steps):
            raise ValueError("repetitions must be >= 1")
        if self.relaxation < 0:
            raise ValueError("relaxation must be >= 0")
        if self.cycles < 0:
            raise ValueError("cycles must be >= 0")
        object.__setattr__(self, "steps", steps)

    def __iter__(self):
        for _ in range(self.cycles):
            for pulse, reps in self.steps:
                for _ in range(reps):
                    yield pulse

    def shifted(self, offset: float) -> "PumpSchedule":
        return PumpSchedule(tuple((p.shifted(offset), n) for p, n in self.steps),
                            self.relaxation, self.cycles)

    def to_dict(self) -> dict:
        return {"relaxation": self.relaxation, "cycles": self.cycles,
                "steps": [{"pulse": p.to_dict(), "repetitions": n} for p, n in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "PumpSchedule":
        steps = tuple((BurnPulse.from_dict(s["pulse"]), int(s["repetitions"]))
                      for s in d.get("steps", ()))
        return cls(steps, float(d.get("relaxation", DEFAULT_RELAXATION)), int(d.get("cycles", 1)))


# ---------------------------------------------------------------------------
# rate engine


def scan_overlap(freqs, interval, width, cutoff=LORENTZ_CUTOFF):
    """Scan-averaged Lorentzian (1/MHz) seen by lines at ``freqs``.

    The Lorentzian is truncated at ``cutoff`` linewidths.  A zero-width
    interval is a fixed-frequency burn.
    """
    a, b = interval
    f = np.asarray(freqs, dtype=float)
    hw = 0.5 * width
    reach = cutoff * width
    if b - a <= 1e-3 * width:
        x = f - a
        out = (hw / np.pi) / (x * x + hw * hw)
        return np.where(np.abs(x) <= reach, out, 0.0)
    lo = np.maximum(a, f - reach) - f
    hi = np.minimum(b, f + reach) - f
    out = (np.arctan(hi / hw) - np.arctan(lo / hw)) / (np.pi * (b - a))
    return np.where(hi > lo, out, 0.0)


def decay_matrix(scheme, optical_t1=OPTICAL_T1, hyperfine_t1=np.inf) -> np.ndarray:
    """Generator ``M`` with ``dp/dt = M p`` for spontaneous processes only."""
    m = np.zeros((N_LEVELS, N_LEVELS))
    gamma = 1.0 / optical_t1
    br = scheme.branching
    for j, e in enumerate(EXCITED):
        for i, g in enumerate(GROUND):
            m[g, e] += gamma * br[i, j]
        m[e, e] -= gamma
    if np.isfinite(hyperfine_t1):
        # relaxation towards equal ground populations
        k = 1.0 / (3.0 * hyperfine_t1)
        for g in GROUND:
            for h in GROUND:
                if g != h:
                    m[g, h] += k
                    m[h, h] -= k
    return m


def stimulated_rates(ensemble: Ensemble, pulse: BurnPulse) -> np.ndarray:
    """(N, 3, 3) stimulated rates per class and line (1/us)."""
    scheme = ensemble.scheme
    freqs = ensemble.detunings[:, None, None] + scheme.offsets[None]
    pieces = pulse.pieces
    if len(pieces) == 1:
        ov = scan_overlap(freqs, pieces[0], scheme.linewidth_mhz, PUMP_CUTOFF)
    else:
        total = sum(hi - lo for lo, hi in pieces)
        ov = sum(scan_overlap(freqs, q, scheme.linewidth_mhz, PUMP_CUTOFF) * ((q[1] - q[0]) / total)
                 for q in pieces)
    rates = np.pi ** 2 * pulse.rabi_frequency ** 2 * (scheme.coupling ** 2)[None] * ov
    if pulse.target is not None:
        mask = np.zeros(3, dtype=bool)
        mask[list(pulse.target)] = True
        rates = rates * mask[None, :, None]
    return rates


def _generators(rates, decay):
    """Per-class rate-equation generators for drive ``rates`` on top of ``decay``."""
    gen = np.broadcast_to(decay, (len(rates), N_LEVELS, N_LEVELS)).copy()
    for i, g in enumerate(GROUND):
        for j, e in enumerate(EXCITED):
            r = rates[:, i, j]
            gen[:, e, g] += r
            gen[:, g, g] -= r
            gen[:, g, e] += r
            gen[:, e, e] -= r
    return gen


@numba.njit(cache=True)
def _expm_batch(gen, t):
    """exp(gen[k] * t) for a stack of small matrices: scaling and squaring
    around a degree-16 Taylor sum (norm brought below 1/2 first)."""
    n, m, _ = gen.shape
    out = np.empty_like(gen)
    eye = np.eye(m)
    for k in range(n):
        a = gen[k] * t
        norm = np.max(np.sum(np.abs(a), axis=1))
        s = 0
        while norm > 0.5:
            norm *= 0.5
            s += 1
        a = a / 2.0 ** s
        term = eye.copy()
        res = eye.copy()
        for j in range(1, 17):
            term = term @ a / j
            res += term
        for _ in range(s):
            res = res @ res
        out[k] = res
    return out


def _to_simplex(p):
    p = np.clip(p, 0.0, None)
    return p / p.sum(axis=1, keepdims=True)


def _pulse_propagators(ensemble: Ensemble, pulse: BurnPulse, optical_t1: float = OPTICAL_T1,
                       hyperfine_t1: float = np.inf):
    """Per-class propagators of one burn pulse and the mask of driven classes.

    Rates depend only on class detuning and pulse, so repeated pulses can
    reuse the result.
    """
    rates = stimulated_rates(ensemble, pulse)
    driven = rates.reshape(len(ensemble), -1).max(axis=1) > 0
    decay = decay_matrix(ensemble.scheme, optical_t1, hyperfine_t1)
    props = np.empty((len(ensemble), N_LEVELS, N_LEVELS))
    props[:] = _expm_batch(decay[None], float(pulse.duration))[0]
    if np.any(driven):
        props[driven] = _expm_batch(_generators(rates[driven], decay), float(pulse.duration))
    return props, driven


def _apply(ensemble: Ensemble, props, driven) -> Ensemble:
    pops = ensemble.populations
    active = driven | (pops[:, 3:].max(axis=1) > 0)
    if not np.any(active):
        return ensemble
    new = pops.copy()
    new[active] = _to_simplex(np.einsum("nij,nj->ni", props[active], pops[active]))
    return ensemble.with_populations(new)


def pump_step(ensemble: Ensemble, pulse: BurnPulse, optical_t1: float = OPTICAL_T1,
              hyperfine_t1: float = np.inf) -> Ensemble:
    """Evolve every class under one burn pulse (drive on, decay on)."""
    if len(ensemble) == 0:
        return ensemble
    return _apply(ensemble, *_pulse_propagators(ensemble, pulse, optical_t1, hyperfine_t1))


def relax(ensemble: Ensemble, duration: float, optical_t1: float = OPTICAL_T1,
          hyperfine_t1: float = np.inf) -> Ensemble:
    """Free decay for ``duration`` us."""
    if len(ensemble) == 0 or duration <= 0:
        return ensemble
    prop = _expm_batch(decay_matrix(ensemble.scheme, optical_t1, hyperfine_t1)[None], float(duration))[0]
    pops = ensemble.populations
    moving = pops[:, 3:].max(axis=1) > 0
    if np.isfinite(hyperfine_t1):
        moving[:] = True
    if not np.any(moving):
        return ensemble
    new = pops.copy()
    new[moving] = _to_simplex(pops[moving] @ prop.T)
    return ensemble.with_populations(new)


def run_schedule(ensemble: Ensemble, schedule: PumpSchedule, **kw) -> Ensemble:
    if len(ensemble) == 0:
        return ensemble
    cache: dict = {}
    for pulse in schedule:
        if pulse not in cache:
            cache[pulse] = _pulse_propagators(ensemble, pulse, **kw)
        ensemble = _apply(ensemble, *cache[pulse])
        ensemble = relax(ensemble, schedule.relaxation, **kw)
    return ensemble


# ---------------------------------------------------------------------------
# pits


def _check_pit(ensemble, pit_interval):
    a, b = (float(x) for x in pit_interval)
    if b <= a:
        raise ValueError("pit interval must be ordered")
    limit = ensemble.scheme.max_pit_width
    if b - a > limit:
        raise PitTooWide(f"pit width {b - a:g} MHz exceeds the {limit:g} MHz hyperfine limit")
    return a, b


def default_pit_schedule(pit_interval, rabi=0.5, scan_time=20.0, repetitions=240,
                         relaxation=DEFAULT_RELAXATION) -> PumpSchedule:
    """Repeated scans over the whole pit: the simple pit."""
    return PumpSchedule(((BurnPulse(tuple(pit_interval), rabi, scan_time), repetitions),),
                        relaxation)


def create_pit(ensemble: Ensemble, pit_interval, schedule: PumpSchedule | None = None,
               **kw) -> Ensemble:
    """Empty ``pit_interval`` of absorbing ions.

    Raises :class:`PitTooWide` when the interval is wider than the ground
    hyperfine span minus the excited-state span (18.1 MHz by default), since
    some ions would then have no ground state to hide in.
    """
    a, b = _check_pit(ensemble, pit_interval)
    if len(ensemble) == 0:
        return ensemble
    schedule = schedule or default_pit_schedule((a, b))
    return run_schedule(ensemble, schedule, **kw)


def optimal_pit_schedule(ensemble: Ensemble, pit_interval, margin=1.0, rabi=0.5,
                         scan_time=20.0, repetitions=10,
                         relaxation=DEFAULT_RELAXATION) -> PumpSchedule:
    """One cleaning round.

    Scans over the ``margin``-wide bands just outside each edge pump the ions
    absorbing there into their remaining dark state, which for most of them
    is |aux>; the pit is then re-burned to catch anything pushed back in.
    """
    a, b = pit_interval
    steps = (
        (BurnPulse((b, b + margin), rabi, scan_time), repetitions),
        (BurnPulse((a - margin, a), rabi, scan_time), repetitions),
        (BurnPulse((a, b), rabi, scan_time), 2 * repetitions),
    )
    return PumpSchedule(steps, relaxation)


def optimal_pit(ensemble: Ensemble, pit_interval, n_iterations: int = 2,
                schedule: PumpSchedule | None = None, margin: float = 1.0,
                **kw) -> Ensemble:
    """Simple pit followed by ``n_iterations`` rounds of edge cleaning."""
    a, b = _check_pit(ensemble, pit_interval)
    out = create_pit(ensemble, (a, b), schedule, **kw)
    if len(out) == 0:
        return out
    rounds = optimal_pit_schedule(out, (a, b), margin=margin)
    for _ in range(int(n_iterations)):
        out = run_schedule(out, rounds, **kw)
    return out


# ---------------------------------------------------------------------------
# diagnostics


def pit_residual(ensemble: Ensemble, pit_interval, margin=1.0,
                 resolution=SPECTRUM_RESOLUTION, step=0.01) -> float:
    """Largest alphaL inside the pit (``margin`` trimmed off each edge),
    as a fraction of the configured plateau ``alpha_max``."""
    a, b = pit_interval
    lo, hi = a + margin, b - margin
    if hi <= lo:
        lo = hi = 0.5 * (a + b)
    grid = np.arange(lo, hi + 0.5 * step, step)
    spec = absorption_spectrum(ensemble, grid, resolution=resolution)
    return float(spec.max() / ensemble.alpha_max)


def edge_rise_width(grid, spectrum, pit_interval, edge_width=1.0, shoulder=2.0):
    """Mean 10-90 % rise distance of the two pit walls (MHz).

    Each wall is referenced to its own shoulder level: the median alphaL
    between ``edge_width/2`` and ``shoulder`` MHz outside the edge.  Walking
    outward from ``edge_width`` inside the pit, the rise is the distance
    between the first samples above 10 % and 90 % of that level.
    """
    grid = np.asarray(grid, float)
    spectrum = np.asarray(spectrum, float)
    a, b = pit_interval
    widths = []
    for edge, sign in ((b, 1.0), (a, -1.0)):
        out = sign * (grid - edge)
        band = (out >= 0.5 * edge_width) & (out <= shoulder)
        if not np.any(band):
            raise ValueError("grid does not cover the pit shoulders")
        level = np.median(spectrum[band])
        order = np.argsort(out)
        x, y = out[order], spectrum[order]
        keep = x >= -edge_width
        x, y = x[keep], y[keep]
        above10, above90 = y >= 0.1 * level, y >= 0.9 * level
        if not above10.any() or not above90.any():
            widths.append(np.inf)
            continue
        widths.append(float(x[np.argmax(above90)] - x[np.argmax(above10)]))
    return float(np.mean(widths))


# ---------------------------------------------------------------------------
# burnback


def _guard_gaps(interval, holes):
    """Split ``interval`` into the pieces left after removing ``holes``."""
    a, b = interval
    pieces, cur = [], a
    for lo, hi in sorted(holes):
        if hi <= cur or lo >= b:
            continue
        if lo > cur:
            pieces.append((cur, lo))
        cur = max(cur, hi)
    if cur < b:
        pieces.append((cur, b))
    return [p for p in pieces if p[1] - p[0] > 1e-9]


def burnback_schedule(ensemble: Ensemble, peak_frequency, peak_width, pit_interval,
                      rabi=0.1, clean_rabi=0.5, scan_time=20.0, repetitions=10,
                      clean_repetitions=40, rounds=1, guard=BURNBACK_GUARD,
                      relaxation=DEFAULT_RELAXATION) -> PumpSchedule:
    """Pulses that return the class band at ``peak_frequency`` to |0>.

    Narrow scans on the band's |1>->e1 and |aux>->e1 lines pump it into the
    undriven |0>.  Only the e1 lines are used: they drag in the fewest
    neighbouring classes, and those they do drag keep a |0> line inside the
    pit when the band sits about 5 MHz above the lower pit edge.  The pit is then re-cleaned, leaving
    holes (widened by ``guard``) around the band's three |0> lines, so other
    classes dragged in by the narrow scans are pushed out again.
    """
    half = 0.5 * peak_width
    offs = ensemble.scheme.offsets
    back = [BurnPulse((peak_frequency + o - half, peak_frequency + o + half), rabi, scan_time)
            for o in offs[1:, 0]]
    holes = tuple((peak_frequency + o - half - guard, peak_frequency + o + half + guard)
                  for o in offs[0])
    clean = BurnPulse(tuple(pit_interval), clean_rabi, scan_time, holes=holes)
    steps = []
    for _ in range(int(rounds)):
        steps += [(p, 1) for _ in range(repetitions) for p in back]
        steps.append((clean, clean_repetitions))
    return PumpSchedule(tuple(steps), relaxation)


def burnback(ensemble: Ensemble, peak_frequency: float, peak_width: float,
             pit_interval=None, schedule: PumpSchedule | None = None, **kw) -> Ensemble:
    """Create the |0>-initialised qubit peak inside an existing pit.

    ``pit_interval`` defaults to the empty region found around
    ``peak_frequency``.  Raises :class:`NoPit` when that region still
    absorbs.
    """
    scheme = ensemble.scheme
    if peak_width < scheme.linewidth_mhz:
        raise ValueError("peak_width must be at least the homogeneous linewidth")
    if pit_interval is None:
        pit_interval = find_pit(ensemble, peak_frequency)
    a, b = (float(x) for x in pit_interval)
    if not (a <= peak_frequency <= b):
        raise NoPit(f"peak frequency {peak_frequency:g} MHz lies outside the pit")
    if pit_residual(ensemble, (a, b), margin=min(1.0, 0.25 * (b - a))) > 0.05:
        raise NoPit(f"no spectral pit at {peak_frequency:g} MHz")
    schedule = schedule or burnback_schedule(ensemble, peak_frequency, peak_width, (a, b))
    return run_schedule(ensemble, schedule, **kw)


def default_peak_frequency(pit_interval) -> float:
    """Qubit band position used when none is requested.

    Neighbouring classes dragged in by the burnback scans then still have a
    |0> line inside the pit, so the re-cleaning removes them.
    """
    return float(pit_interval[0]) + BURNBACK_OFFSET


def find_pit(ensemble: Ensemble, frequency: float, threshold=0.05, step=0.02,
             resolution=SPECTRUM_RESOLUTION):
    """Bounds of the contiguous region around ``frequency`` where alphaL
    stays below ``threshold`` of the plateau."""
    lo, hi = ensemble.window
    grid = np.arange(lo, hi + 0.5 * step, step)
    spec = absorption_spectrum(ensemble, grid, resolution=resolution) / ensemble.alpha_max
    k = int(np.clip(np.searchsorted(grid, frequency), 0, len(grid) - 1))
    if spec[k] > threshold:
        raise NoPit(f"no spectral pit at {frequency:g} MHz")
    empty = spec <= threshold
    left = k
    while left > 0 and empty[left - 1]:
        left -= 1
    right = k
    while right < len(grid) - 1 and empty[right + 1]:
        right += 1
    return float(grid[left]), float(grid[right])


def spectral_peaks(grid, spectrum, min_height=0.1, min_prominence=0.05):
    """Peaks of a spectrum as ``(centre, height, fwhm)`` rows.

    Centres are half-maximum midpoints, which are steadier than the argmax
    on the flat top of a burned-back band.  Thresholds are fractions of the
    spectrum maximum.
    """
    from scipy.signal import find_peaks, peak_widths

    grid = np.asarray(grid, float)
    y = np.asarray(spectrum, float)
    top = y.max() if y.size else 0.0
    if top <= 0:
        return np.zeros((0, 3))
    idx, _ = find_peaks(y, height=min_height * top, prominence=min_prominence * top)
    if idx.size == 0:
        return np.zeros((0, 3))
    w, _, left, right = peak_widths(y, idx, rel_height=0.5)
    step = grid[1] - grid[0]
    centre = grid[0] + 0.5 * (left + right) * step
    return np.column_stack([centre, y[idx], w * step])
