"""Level structure, inhomogeneous ensembles and absorption spectra.

Frequencies are in MHz throughout.  An ion class is labelled by the frequency
of its |0> -> |e1> transition (its *detuning* from the lab reference); the
other eight transitions sit at fixed offsets given by the hyperfine
splittings.

State indices used across the package::

    0: |0>   1: |1>   2: |aux>   3: |e1>   4: |e2>   5: |e3>
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numba
import numpy as np

G0, G1, GAUX, E1, E2, E3 = range(6)
GROUND = (G0, G1, GAUX)
EXCITED = (E1, E2, E3)
LEVEL_LABELS = ("0", "1", "aux", "e1", "e2", "e3")
N_LEVELS = 6

# splittings are decimal MHz values; sums are rounded to 1 mHz resolution
# so that e.g. 4.6 + 4.8 compares equal to 9.4
_DIGITS = 9

#: Lorentzians are cut off beyond this many linewidths.
LORENTZ_CUTOFF = 1000.0


def _uniform_strengths():
    return np.full((3, 3), 1.0 / 3.0)


@dataclass(frozen=True, eq=False)
class LevelScheme:
    """Three ground and three excited hyperfine levels.

    Parameters
    ----------
    ground_splittings : (float, float)
        |0>-|1> and |1>-|aux> splittings in MHz.
    excited_splittings : (float, float)
        |e1>-|e2> and |e2>-|e3> splittings in MHz.
    relative_strengths : (3, 3) array
        Relative line strengths, rows are ground states (0, 1, aux) and
        columns excited states (e1, e2, e3).  Each row sums to one.
    homogeneous_linewidth : float
        Optical homogeneous linewidth (FWHM) in kHz.
    ground_order : tuple of str
        Ground levels in ascending energy.  ``("aux", "1", "0")`` puts the
        |0> transitions lowest in frequency; ``("0", "1", "aux")`` mirrors it.
    """

    ground_splittings: tuple = (10.2, 17.3)
    excited_splittings: tuple = (4.6, 4.8)
    relative_strengths: np.ndarray = field(default_factory=_uniform_strengths)
    homogeneous_linewidth: float = 3.0
    ground_order: tuple = ("aux", "1", "0")

    def __post_init__(self):
        gs = tuple(float(x) for x in self.ground_splittings)
        es = tuple(float(x) for x in self.excited_splittings)
        if len(gs) != 2 or len(es) != 2:
            raise ValueError("need exactly two ground and two excited splittings")
        if min(gs + es) <= 0:
            raise ValueError("splittings must be positive")
        s = np.array(self.relative_strengths, dtype=float)
        if s.shape != (3, 3):
            raise ValueError("relative_strengths must be 3x3")
        if np.any(s < 0) or not np.allclose(s.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("relative_strengths must be non-negative with unit row sums")
        if np.any(s.sum(axis=0) <= 0):
            raise ValueError("every excited state needs a decay channel")
        if self.homogeneous_linewidth <= 0:
            raise ValueError("homogeneous_linewidth must be positive")
        order = tuple(str(x) for x in self.ground_order)
        if order not in (("aux", "1", "0"), ("0", "1", "aux")):
            raise ValueError(f"unsupported ground_order {order!r}")
        s.setflags(write=False)
        object.__setattr__(self, "ground_splittings", gs)
        object.__setattr__(self, "excited_splittings", es)
        object.__setattr__(self, "relative_strengths", s)
        object.__setattr__(self, "ground_order", order)

    def __eq__(self, other):
        if not isinstance(other, LevelScheme):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    @property
    def ground_offsets(self) -> np.ndarray:
        """Shift of each ground state's transitions relative to those of |0>."""
        a, b = self.ground_splittings
        offs = np.array([0.0, a, round(a + b, _DIGITS)])
        return offs if self.ground_order[0] == "aux" else -offs

    @property
    def excited_offsets(self) -> np.ndarray:
        a, b = self.excited_splittings
        return np.array([0.0, a, round(a + b, _DIGITS)])

    @property
    def offsets(self) -> np.ndarray:
        """(3, 3) transition frequencies of a class at detuning 0."""
        return np.round(self.ground_offsets[:, None] + self.excited_offsets[None, :], _DIGITS)

    @property
    def total_span(self) -> float:
        return round(sum(self.ground_splittings) + sum(self.excited_splittings), _DIGITS)

    @property
    def ground_span(self) -> float:
        return round(sum(self.ground_splittings), _DIGITS)

    @property
    def max_pit_width(self) -> float:
        """Widest interval that every ion can be emptied from."""
        return round(self.ground_span - sum(self.excited_splittings), _DIGITS)

    @property
    def linewidth_mhz(self) -> float:
        return self.homogeneous_linewidth * 1e-3

    @property
    def coupling(self) -> np.ndarray:
        """Rabi-frequency scale of each line; unity for uniform strengths."""
        return np.sqrt(3.0 * self.relative_strengths)

    @property
    def branching(self) -> np.ndarray:
        """Decay branching ratios, ``branching[g, e]`` sums to one over ``g``."""
        s = self.relative_strengths
        return s / s.sum(axis=0, keepdims=True)

    def to_dict(self) -> dict:
        return {
            "ground_splittings": list(self.ground_splittings),
            "excited_splittings": list(self.excited_splittings),
            "relative_strengths": self.relative_strengths.tolist(),
            "homogeneous_linewidth": self.homogeneous_linewidth,
            "ground_order": list(self.ground_order),
        }


class Transition(NamedTuple):
    ground: int
    excited: int
    frequency: float


def transition_frequencies(scheme: LevelScheme, detuning: float = 0.0) -> list[Transition]:
    """All nine optical transitions of a class, sorted by frequency.

    ``ground`` is 0, 1, 2 for |0>, |1>, |aux> and ``excited`` 0, 1, 2 for
    |e1>, |e2>, |e3>.
    """
    offs = scheme.offsets + detuning
    lines = [Transition(g, e, float(offs[g, e])) for g in range(3) for e in range(3)]
    return sorted(lines, key=lambda t: t.frequency)


@dataclass(frozen=True)
class IonClass:
    """One frequency class of the inhomogeneous line."""

    detuning: float
    weight: float
    state: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        s = np.asarray(self.state)
        return np.real(np.diag(s)) if s.ndim == 2 else s


@dataclass(frozen=True, eq=False)
class Ensemble:
    """Discretised slice of the inhomogeneous line.

    Stored column-wise for speed; :attr:`classes` gives the per-class view.
    ``density_norm`` is the weight per MHz of the unburned profile at its
    peak, used to scale spectra so the unburned line reaches ``alpha_max``.
    """

    scheme: LevelScheme
    window: tuple
    detunings: np.ndarray
    weights: np.ndarray
    populations: np.ndarray
    alpha_max: float = 2.0
    density_norm: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float).reshape(-1)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        p = np.asarray(self.populations, dtype=float).reshape(-1, N_LEVELS)
        if not (len(d) == len(w) == len(p)):
            raise ValueError("detunings, weights and populations disagree in length")
        lo, hi = (float(x) for x in self.window)
        if not lo < hi:
            raise ValueError("window must satisfy min < max")
        if len(d) and (d.min() < lo or d.max() > hi):
            raise ValueError("class detunings must lie inside the window")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        for name, arr in (("detunings", d), ("weights", w), ("populations", p)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "window", (lo, hi))

    def __len__(self):
        return len(self.detunings)

    @property
    def classes(self) -> list[IonClass]:
        return [IonClass(float(d), float(w), p.copy())
                for d, w, p in zip(self.detunings, self.weights, self.populations)]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def with_populations(self, populations) -> "Ensemble":
        return replace(self, populations=np.asarray(populations, dtype=float))

    def scaled(self, factor: float) -> "Ensemble":
        """Same ensemble with every weight multiplied by ``factor``."""
        return replace(self, weights=self.weights * factor)

    def select(self, mask) -> "Ensemble":
        mask = np.asarray(mask)
        return replace(self, detunings=self.detunings[mask], weights=self.weights[mask],
                       populations=self.populations[mask])


def thermal_populations(n: int) -> np.ndarray:
    p = np.zeros((n, N_LEVELS))
    p[:, :3] = 1.0 / 3.0
    return p


def sample_ensemble(profile: str = "flat", window=(-50.0, 50.0), n_classes: int = 10000,
                    seed: int = 0, scheme: LevelScheme | None = None, alpha_max: float = 2.0,
                    center: float = 0.0, fwhm: float = 5000.0) -> Ensemble:
    """Discretise the inhomogeneous profile over ``window``.

    Classes are stratified: one class per equal-width cell, jittered
    uniformly inside the cell, which keeps the class density flat while
    avoiding an artificial lattice.  A Gaussian profile (``fwhm`` in MHz
    about ``center``) is represented through the class weights.
    """
    scheme = scheme or LevelScheme()
    lo, hi = (float(x) for x in window)
    if not lo < hi:
        raise ValueError("window must satisfy min < max")
    if n_classes < 0:
        raise ValueError("n_classes must be >= 0")
    rng = np.random.default_rng(seed)
    cell = (hi - lo) / max(n_classes, 1)
    det = lo + (np.arange(n_classes) + rng.uniform(size=n_classes)) * cell
    det = np.clip(det, lo, hi)
    if profile == "flat":
        weights = np.ones(n_classes)
    elif profile == "gaussian":
        weights = np.exp(-4.0 * np.log(2.0) * ((det - center) / fwhm) ** 2)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    return Ensemble(scheme=scheme, window=(lo, hi), detunings=det, weights=weights,
                    populations=thermal_populations(n_classes), alpha_max=alpha_max,
                    density_norm=1.0 / cell)


def line_list(ensemble: Ensemble):
    """Centres and strengths of every populated line in the ensemble."""
    s = ensemble.scheme.relative_strengths
    centres = ensemble.detunings[:, None, None] + ensemble.scheme.offsets[None]
    amps = (ensemble.weights[:, None, None] * ensemble.populations[:, :3, None] * s[None])
    centres, amps = centres.reshape(-1), amps.reshape(-1)
    keep = amps > 0
    return centres[keep], amps[keep]


@numba.njit(cache=True)
def _lorentz_sum(grid, order, centres, amps, width, cutoff):
    out = np.zeros(grid.shape[0])
    sorted_grid = grid[order]
    hw = 0.5 * width
    norm = hw / np.pi
    reach = cutoff * width
    for j in range(centres.shape[0]):
        c = centres[j]
        a = amps[j] * norm
        lo = np.searchsorted(sorted_grid, c - reach)
        hi = np.searchsorted(sorted_grid, c + reach, side="right")
        for i in range(lo, hi):
            x = sorted_grid[i] - c
            out[order[i]] += a / (x * x + hw * hw)
    return out


def absorption_spectrum(ensemble: Ensemble, grid: Sequence[float],
                        resolution: float = 0.0) -> np.ndarray:
    """Optical depth alpha*L on ``grid``.

    Each populated line contributes ``weight * population * strength`` times
    an area-normalised Lorentzian.  ``resolution`` (MHz) is the FWHM of a
    Lorentzian instrument response; it adds to the homogeneous linewidth.
    The result is scaled so that an unburned ensemble of the same class
    density reads ``ensemble.alpha_max``.
    """
    grid = np.asarray(grid, dtype=float)
    if len(ensemble) == 0:
        return np.zeros_like(grid)
    width = ensemble.scheme.linewidth_mhz + float(resolution)
    centres, amps = line_list(ensemble)
    if centres.size == 0:
        return np.zeros_like(grid)
    order = np.argsort(grid, kind="stable")
    raw = _lorentz_sum(grid, order, centres, amps, width, LORENTZ_CUTOFF)
    return ensemble.alpha_max * raw / ensemble.density_norm
