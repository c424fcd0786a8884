"""Single-ion readout: dipole shifts, fluorescence counting, chain mapping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .errors import DegenerateMeans, NoChain

REFERENCE_SHIFT = 30.0  # MHz at the reference distance
REFERENCE_DISTANCE = 7.0  # nm


def dipole_shift(distance, reference_shift: float = REFERENCE_SHIFT,
                 reference_distance: float = REFERENCE_DISTANCE):
    """Static dipole-dipole line shift in MHz, falling as 1/r^3."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = reference_shift * (reference_distance / d) ** 3
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ReadoutIon:
    zpl_wavelength: float = 371.0  # nm
    excited_lifetime: float = 50.0  # ns
    homogeneous_linewidth: float = 3.0  # MHz
    inhomogeneous_linewidth: float = 80.0  # GHz
    frequency: float = 0.0  # MHz offset

    def __post_init__(self):
        if self.excited_lifetime <= 0 or self.homogeneous_linewidth <= 0:
            raise ValueError("lifetime and linewidth must be positive")
        if self.homogeneous_linewidth < 0.9 * self.lifetime_limit:
            raise ValueError(f"linewidth {self.homogeneous_linewidth} MHz is below the lifetime limit "
                             f"{self.lifetime_limit:.3f} MHz")

    @property
    def lifetime_limit(self) -> float:
        """1/(2 pi T1) in MHz."""
        return 1e3 / (2 * np.pi * self.excited_lifetime)


@dataclass(frozen=True)
class IonGeometry:
    qubit_positions: np.ndarray  # (n, 3) nm
    qubit_frequencies: np.ndarray  # MHz
    readout_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    reference_shift: float = REFERENCE_SHIFT
    reference_distance: float = REFERENCE_DISTANCE

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.qubit_positions, float))
        freqs = np.atleast_1d(np.asarray(self.qubit_frequencies, float))
        ro = np.asarray(self.readout_position, float).reshape(3)
        if pos.shape[1] != 3 or pos.shape[0] != freqs.size:
            raise ValueError("need one 3-vector position per qubit frequency")
        allpos = np.vstack([ro, pos])
        d = np.linalg.norm(allpos[:, None] - allpos[None], axis=-1)
        if np.any(d[np.triu_indices(len(allpos), 1)] <= 0):
            raise ValueError("ions must not coincide")
        for name, v in (("qubit_positions", pos), ("qubit_frequencies", freqs), ("readout_position", ro)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n_qubits(self) -> int:
        return self.qubit_frequencies.size

    def shift(self, i: int, j: int | None) -> float:
        """Shift on ion ``j`` (``None`` = readout ion) when qubit ``i`` is excited."""
        other = self.readout_position if j is None else self.qubit_positions[j]
        return dipole_shift(np.linalg.norm(self.qubit_positions[i] - other),
                            self.reference_shift, self.reference_distance)


@dataclass(frozen=True)
class DetectionParams:
    quantum_efficiency: float = 0.1
    collection_efficiency: float = 0.3
    window: float = 150.0  # us
    signal_mean: float = 100.0  # counts over the reference window, qubit in |1>
    background_mean: float = 50.0  # counts over the reference window, qubit in |0>
    reference_window: float = 150.0  # us
    prior_one: float = 0.5

    def __post_init__(self):
        for name in ("quantum_efficiency", "collection_efficiency"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.signal_mean < 0 or self.background_mean < 0 or self.window < 0:
            raise ValueError("means and window must be non-negative")
        if self.reference_window <= 0:
            raise ValueError("reference_window must be positive")
        if not 0 < self.prior_one < 1:
            raise ValueError("prior_one must lie in (0, 1)")

    @property
    def scale(self) -> float:
        return self.window / self.reference_window

    def mean(self, qubit_in_one: bool) -> float:
        return (self.signal_mean if qubit_in_one else self.background_mean) * self.scale


def photon_budget(qubit_in_one: bool, params: DetectionParams | None = None, seed: int = 0,
                  size: int | None = None):
    """Poisson photon count(s) detected in the window."""
    params = params or DetectionParams()
    rng = np.random.default_rng(seed)
    return rng.poisson(params.mean(qubit_in_one), size=size)


@dataclass(frozen=True)
class Discrimination:
    estimate: int  # 0 or 1
    error_probability: float
    threshold: int  # counts >= threshold are read as the brighter hypothesis


def decision_threshold(params: DetectionParams) -> int:
    """Smallest k where the weighted brighter-hypothesis likelihood wins."""
    s, b = params.mean(True), params.mean(False)
    if s == b:
        raise DegenerateMeans("signal and background means are equal")
    hi, lo = max(s, b), min(s, b)
    p_hi = params.prior_one if s > b else 1 - params.prior_one
    if lo == 0:
        return 1
    # log-likelihood ratio is linear in k
    k = (math.log((1 - p_hi) / p_hi) + hi - lo) / math.log(hi / lo)
    t = max(math.floor(k) + 1, 0)
    return t


def discriminate(count: int, params: DetectionParams | None = None) -> Discrimination:
    params = params or DetectionParams()
    t = decision_threshold(params)
    s, b = params.mean(True), params.mean(False)
    bright_is_one = s > b
    p1 = params.prior_one
    if bright_is_one:
        err = (1 - p1) * stats.poisson.sf(t - 1, b) + p1 * stats.poisson.cdf(t - 1, s)
    else:
        err = p1 * stats.poisson.sf(t - 1, s) + (1 - p1) * stats.poisson.cdf(t - 1, b)
    bright = count >= t
    return Discrimination(int(bright == bright_is_one), float(err), t)


def count_histogram(counts, max_count: int | None = None) -> list[int]:
    counts = np.asarray(counts, int)
    top = int(counts.max()) if max_count is None else max_count
    return np.bincount(counts, minlength=top + 1)[: top + 1].tolist()


def find_chain(geometry: IonGeometry, readout: ReadoutIon | None = None,
               shift_resolution: float | None = None) -> list[float]:
    """Find-and-search chain mapping.

    The first qubit is the one whose excitation moves the readout line by
    more than ``shift_resolution``; each next qubit is the one that blocks
    the current head.  Several candidates: the largest shift wins, ties go
    to the lower frequency, so labels never matter.
    """
    readout = readout or ReadoutIon()
    res = readout.homogeneous_linewidth if shift_resolution is None else shift_resolution
    if res < readout.homogeneous_linewidth:
        raise ValueError("shift_resolution must be at least the readout homogeneous linewidth")
    chain: list[int] = []
    head = None
    remaining = set(range(geometry.n_qubits))
    while remaining:
        cands = [(geometry.shift(i, head), -geometry.qubit_frequencies[i], i) for i in remaining]
        cands = [c for c in cands if c[0] > res]
        if not cands:
            break
        _, _, nxt = max(cands)
        chain.append(nxt)
        remaining.discard(nxt)
        head = nxt
    if not chain:
        raise NoChain(f"no qubit shifts the readout ion by more than {res} MHz")
    return [float(geometry.qubit_frequencies[i]) for i in chain]


def ensemble_scaling(p: float, n: int) -> float:
    """Fraction of ions that carry a full n-qubit chain, p^(n-1)."""
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if n < 1:
        raise ValueError("n must be at least 1")
    # decimal-exact power so 0.01**4 lands on 1e-8
    return float(Fraction(repr(float(p))) ** (n - 1))


def stark_shift(field_v_per_cm, coefficient_khz: float = 35.0):
    """Linear Stark shift in MHz."""
    if coefficient_khz < 0:
        raise ValueError("coefficient must be non-negative")
    out = np.asarray(field_v_per_cm, float) * coefficient_khz / 1000.0
    return float(out) if out.ndim == 0 else out
