"""Six-level master-equation dynamics.

Frame and units: energies in rad/us.  In the frame co-rotating with the lab
reference the bare Hamiltonian is diagonal, ground level ``g`` at
``-2 pi o_g`` and excited level ``e`` at ``2 pi (d + o_e)``, so line ``g->e``
sits at ``d + o_g + o_e`` MHz.  A waveform field ``E(t)`` couples line
``g->e`` through ``pi * c_ge * conj(E(t)) |e><g| + h.c.`` (rotating-wave
form, ``c_ge`` the relative coupling factor).

Integration runs in the interaction picture of that diagonal part, so the
fixed-step RK4 only has to follow the slow drive-induced motion; results are
rotated back to the reference frame unless asked otherwise.  The dissipator
is written element-wise,

    d rho_jk / dt  +=  -Lambda_jk rho_jk + delta_jk sum_m W_jm rho_mm,

which is exactly the Lindblad form for decay jumps ``|g><e|`` plus
projector dephasing, and keeps the trace to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy.interpolate import CubicSpline

from .crystal import EXCITED, GROUND, N_LEVELS, Ensemble, LevelScheme
from .errors import StepSizeTooLarge
from .pulse import Waveform

STEPS_PER_PERIOD = 50  # RK4 step <= 1 / (50 * fastest generalised Rabi frequency)
MAX_STEP = 1.0  # us, used when nothing drives the system


@dataclass(frozen=True)
class DecoherenceParams:
    """Lifetimes and coherence times.  ``hyperfine_T1`` is in seconds, the
    rest in microseconds; ``inf`` switches a process off."""

    optical_T1: float = 164.0
    optical_T2: float = 100.0
    hyperfine_T2: float = 500.0
    hyperfine_T1: float = 90.0

    def __post_init__(self):
        for name in ("optical_T1", "optical_T2", "hyperfine_T2", "hyperfine_T1"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.optical_T2 > 2 * self.optical_T1:
            raise ValueError("optical_T2 must not exceed 2 * optical_T1")
        if self.hyperfine_T2 > 2 * self.hyperfine_T1 * 1e6:
            raise ValueError("hyperfine_T2 must not exceed 2 * hyperfine_T1")

    @classmethod
    def none(cls) -> "DecoherenceParams":
        return cls(np.inf, np.inf, np.inf, np.inf)

    @property
    def is_free(self) -> bool:
        return all(np.isinf(v) for v in (self.optical_T1, self.optical_T2,
                                         self.hyperfine_T2, self.hyperfine_T1))

    def to_dict(self) -> dict:
        return {"optical_T1": self.optical_T1, "optical_T2": self.optical_T2,
                "hyperfine_T2": self.hyperfine_T2, "hyperfine_T1": self.hyperfine_T1}

    def rates(self, scheme: LevelScheme):
        """``(Lambda, W)``: coherence damping matrix and population feeding matrix (1/us)."""
        gamma = 1.0 / self.optical_T1
        k = 1.0 / (3.0 * self.hyperfine_T1 * 1e6)
        w = np.zeros((N_LEVELS, N_LEVELS))
        br = scheme.branching
        for j, e in enumerate(EXCITED):
            for i, g in enumerate(GROUND):
                w[g, e] += gamma * br[i, j]
        for g in GROUND:
            for h in GROUND:
                if g != h:
                    w[h, g] += k
        out = w.sum(axis=0)
        # projector dephasing: c on each ground level, a on the excited manifold
        c = 1.0 / self.hyperfine_T2 - 2 * k
        a = 2 * (1.0 / self.optical_T2 - 0.5 * gamma) - c
        if c < -1e-15 or a < -1e-15:
            raise ValueError("coherence times too long for the lifetimes given")
        c, a = max(c, 0.0), max(a, 0.0)
        lam = 0.5 * (out[:, None] + out[None, :])
        is_g = np.isin(np.arange(N_LEVELS), GROUND)
        for j in range(N_LEVELS):
            for m in range(N_LEVELS):
                if j == m:
                    continue
                if is_g[j] and is_g[m]:
                    lam[j, m] += c
                elif is_g[j] != is_g[m]:
                    lam[j, m] += 0.5 * (a + c)
        np.fill_diagonal(lam, out)
        return lam, w


# ---------------------------------------------------------------------------
# drive


@dataclass(frozen=True, eq=False)
class DriveHamiltonian:
    """Waveforms acting on one ion class.

    ``interpolation`` is ``"cubic"`` (spline through sample centres) or
    ``"hold"`` (piecewise constant, for optimal-control sequences).
    ``rabi_scale`` multiplies every field.  Waveforms start at ``t = 0``;
    the field is zero after a waveform ends.  ``lines`` optionally limits
    the coupling to the listed ``(ground, excited)`` index pairs (0..2 each),
    which turns the model into an isolated two- or few-level system.
    """

    scheme: LevelScheme
    detuning: float = 0.0
    waveforms: tuple = ()
    interpolation: str = "cubic"
    rabi_scale: float = 1.0
    lines: tuple | None = None

    def __post_init__(self):
        waves = (self.waveforms,) if isinstance(self.waveforms, Waveform) else tuple(self.waveforms)
        if self.interpolation not in ("cubic", "hold"):
            raise ValueError("interpolation must be 'cubic' or 'hold'")
        rates = {w.sample_rate for w in waves}
        if len(rates) > 1:
            raise ValueError("all waveforms of a drive must share one sample rate")
        object.__setattr__(self, "waveforms", waves)
        if self.lines is not None:
            object.__setattr__(self, "lines", tuple((int(g), int(e)) for g, e in self.lines))

    def with_detuning(self, detuning: float, rabi_scale: float | None = None) -> "DriveHamiltonian":
        return DriveHamiltonian(self.scheme, detuning, self.waveforms, self.interpolation,
                                self.rabi_scale if rabi_scale is None else rabi_scale, self.lines)

    def with_waveforms(self, waveforms) -> "DriveHamiltonian":
        return DriveHamiltonian(self.scheme, self.detuning, waveforms, self.interpolation,
                                self.rabi_scale, self.lines)

    @property
    def coupling(self) -> np.ndarray:
        """3x3 coupling factors with the ``lines`` mask applied."""
        cp = np.array(self.scheme.coupling, float)
        if self.lines is not None:
            mask = np.zeros((3, 3), bool)
            for g, e in self.lines:
                mask[g, e] = True
            cp = np.where(mask, cp, 0.0)
        return cp

    @property
    def line_frequencies(self) -> np.ndarray:
        return self.detuning + self.scheme.offsets

    @property
    def energies(self) -> np.ndarray:
        """Diagonal of the bare Hamiltonian (rad/us)."""
        e = np.zeros(N_LEVELS)
        for i, g in enumerate(GROUND):
            e[g] = -2 * np.pi * self.scheme.ground_offsets[i]
        for j, x in enumerate(EXCITED):
            e[x] = 2 * np.pi * (self.detuning + self.scheme.excited_offsets[j])
        return e

    @property
    def sample_interval(self) -> float | None:
        return self.waveforms[0].dt if self.waveforms else None

    def field(self, t) -> np.ndarray:
        """Total field ``E(t)`` (MHz) relative to the lab reference."""
        t = np.asarray(t, float)
        total = np.zeros(t.shape, complex)
        for w in self.waveforms:
            if len(w) == 0:
                continue
            tol = 1e-9 * w.dt  # nodes at the very end may round past it
            inside = (t >= -tol) & (t <= w.duration + tol)
            if self.interpolation == "hold":
                k = np.clip(np.floor(t * w.sample_rate).astype(int), 0, len(w) - 1)
                z = w.samples[k]
            elif len(w) == 1:
                z = np.full(t.shape, w.samples[0])
            else:
                z = _spline(w)(np.clip(t, 0.0, w.duration))
            total += np.where(inside, z * np.exp(2j * np.pi * w.carrier * t), 0.0)
        return total * self.rabi_scale

    def hamiltonian(self, t: float) -> np.ndarray:
        """6x6 Hamiltonian (rad/us) in the reference frame at time ``t``."""
        h = np.diag(self.energies).astype(complex)
        e_t = complex(self.field(np.array([t]))[0])
        cp = self.coupling
        for i, g in enumerate(GROUND):
            for j, x in enumerate(EXCITED):
                v = np.pi * cp[i, j] * np.conj(e_t)
                h[x, g] += v
                h[g, x] += np.conj(v)
        return h

    def max_frequency(self) -> float:
        """Fastest generalised Rabi frequency (MHz) the integrator must resolve."""
        if not self.waveforms:
            return 0.0
        omega = sum(float(np.abs(w.samples).max()) if len(w) else 0.0 for w in self.waveforms)
        cp = self.coupling
        omega *= abs(self.rabi_scale) * float(cp.max())
        lo = min(w.carrier - 0.5 * w.bandwidth() for w in self.waveforms)
        hi = max(w.carrier + 0.5 * w.bandwidth() for w in self.waveforms)
        lines = self.line_frequencies[cp > 0]
        if lines.size == 0:
            return 0.0
        delta = float(max(np.abs(lines - lo).max(), np.abs(lines - hi).max()))
        return math.hypot(omega, delta)


_SPLINES: dict = {}


def _spline(w: Waveform):
    key = id(w)
    hit = _SPLINES.get(key)
    if hit is not None and hit[0] is w:
        return hit[1]
    sp = CubicSpline(w.times, w.samples, bc_type="natural", extrapolate=True)
    if len(_SPLINES) > 64:
        _SPLINES.clear()
    _SPLINES[key] = (w, sp)
    return sp


def step_limit(drive: DriveHamiltonian) -> float:
    f = drive.max_frequency()
    return MAX_STEP if f == 0 else 1.0 / (STEPS_PER_PERIOD * f)


def _time_grid(drive: DriveHamiltonian, duration: float, step: float | None):
    """Step start times and lengths; steps never straddle a sample boundary."""
    limit = step_limit(drive)
    if step is None:
        step = limit
    elif step > limit * (1 + 1e-9):
        raise StepSizeTooLarge(f"step {step:g} us exceeds the stability limit {limit:g} us")
    dt = drive.sample_interval
    if dt is not None:
        step = dt / math.ceil(dt / step - 1e-9)
    n = int(math.floor(duration / step + 1e-9))
    starts = np.arange(n) * step
    sizes = np.full(n, step)
    rest = duration - n * step
    if rest > 1e-12:
        starts = np.append(starts, n * step)
        sizes = np.append(sizes, rest)
    return starts, sizes


def _couplings(drive: DriveHamiltonian, starts, sizes):
    """Interaction-picture line couplings at each step's start, midpoint and end.

    Shape (N, 3, 3, 3): step, RK4 node, ground index, excited index.
    """
    n = len(starts)
    out = np.zeros((n, 3, 3, 3), complex)
    if not drive.waveforms or n == 0:
        return out
    nodes = starts[:, None] + sizes[:, None] * np.array([0.0, 0.5, 1.0])[None]
    if drive.interpolation == "hold":
        # evaluate the held sample of the step's own interval, carrier phase exact
        field = np.zeros(nodes.shape, complex)
        mids = starts + 0.5 * sizes
        for w in drive.waveforms:
            if len(w) == 0:
                continue
            k = np.clip(np.floor(mids * w.sample_rate).astype(int), 0, len(w) - 1)
            inside = (mids >= -1e-9 * w.dt) & (mids <= w.duration + 1e-9 * w.dt)
            z = np.where(inside, w.samples[k], 0.0)
            field += z[:, None] * np.exp(2j * np.pi * w.carrier * nodes)
        field *= drive.rabi_scale
    else:
        field = drive.field(nodes)
    lines = drive.line_frequencies
    cp = drive.coupling
    rot = np.exp(2j * np.pi * lines[None, None] * nodes[:, :, None, None])
    out[:] = np.pi * cp[None, None] * np.conj(field)[:, :, None, None] * rot
    return out


@numba.njit(cache=True)
def _hmat(a, h):
    for i in range(6):
        for j in range(6):
            h[i, j] = 0.0
    for g in range(3):
        for e in range(3):
            v = a[g, e]
            h[3 + e, g] = v
            h[g, 3 + e] = np.conj(v)


@numba.njit(cache=True)
def _lindblad_rhs(rho, h, lam, w, out):
    hr = h @ rho
    rh = rho @ h
    for i in range(6):
        for j in range(6):
            out[i, j] = -1j * (hr[i, j] - rh[i, j]) - lam[i, j] * rho[i, j]
    for i in range(6):
        s = 0.0
        for m in range(6):
            s += w[i, m] * rho[m, m].real
        out[i, i] += s


@numba.njit(cache=True)
def _rk4_density(rho, coup, sizes, lam, w):
    h = np.zeros((6, 6), np.complex128)
    k1 = np.zeros((6, 6), np.complex128)
    k2 = np.zeros((6, 6), np.complex128)
    k3 = np.zeros((6, 6), np.complex128)
    k4 = np.zeros((6, 6), np.complex128)
    for n in range(sizes.shape[0]):
        dt = sizes[n]
        _hmat(coup[n, 0], h)
        _lindblad_rhs(rho, h, lam, w, k1)
        _hmat(coup[n, 1], h)
        _lindblad_rhs(rho + 0.5 * dt * k1, h, lam, w, k2)
        _lindblad_rhs(rho + 0.5 * dt * k2, h, lam, w, k3)
        _hmat(coup[n, 2], h)
        _lindblad_rhs(rho + dt * k3, h, lam, w, k4)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


@numba.njit(cache=True)
def _rk4_unitary(u, coup, sizes):
    h = np.zeros((6, 6), np.complex128)
    for n in range(sizes.shape[0]):
        dt = sizes[n]
        _hmat(coup[n, 0], h)
        k1 = -1j * (h @ u)
        _hmat(coup[n, 1], h)
        k2 = -1j * (h @ (u + 0.5 * dt * k1))
        k3 = -1j * (h @ (u + 0.5 * dt * k2))
        _hmat(coup[n, 2], h)
        k4 = -1j * (h @ (u + dt * k3))
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def _frame(drive: DriveHamiltonian, t: float) -> np.ndarray:
    """Diagonal of exp(-i H0 t)."""
    return np.exp(-1j * drive.energies * t)


def to_interaction_frame(rho, drive: DriveHamiltonian, t: float):
    f = _frame(drive, t)
    return np.conj(f)[:, None] * rho * f[None, :]


def to_reference_frame(rho, drive: DriveHamiltonian, t: float):
    f = _frame(drive, t)
    return f[:, None] * rho * np.conj(f)[None, :]


def _check_state(rho):
    rho = np.asarray(rho, complex)
    if rho.shape != (N_LEVELS, N_LEVELS):
        raise ValueError("state must be a 6x6 density matrix")
    if not np.allclose(rho, rho.conj().T, atol=1e-9):
        raise ValueError("state must be Hermitian")
    if abs(np.trace(rho).real - 1) > 1e-8:
        raise ValueError("state must have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-8:
        raise ValueError("state must be positive semidefinite")
    return rho


def propagate(state, drive: DriveHamiltonian, deco: DecoherenceParams, duration: float,
              step: float | None = None, frame: str = "reference", t0: float = 0.0):
    """Evolve a 6x6 density matrix for ``duration`` us.

    ``frame="interaction"`` takes and returns states in the interaction
    picture of the bare Hamiltonian (the qubit frame).  ``t0`` offsets the
    drive clock.
    """
    rho = _check_state(state)
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if frame not in ("reference", "interaction"):
        raise ValueError("frame must be 'reference' or 'interaction'")
    if frame == "reference":
        rho = to_interaction_frame(rho, drive, t0)
    starts, sizes = _time_grid(drive, duration, step)
    coup = _couplings(drive, starts + t0, sizes)
    lam, w = deco.rates(drive.scheme)
    lam = np.where(np.isfinite(lam), lam, 0.0)
    out = _rk4_density(np.ascontiguousarray(rho), coup, np.ascontiguousarray(sizes), lam, w)
    out = 0.5 * (out + out.conj().T)
    if frame == "reference":
        out = to_reference_frame(out, drive, t0 + duration)
    return out


def propagate_unitary(drive: DriveHamiltonian, duration: float, step: float | None = None,
                      frame: str = "interaction", t0: float = 0.0) -> np.ndarray:
    """Decoherence-free 6x6 propagator; interaction-picture by default."""
    starts, sizes = _time_grid(drive, duration, step)
    coup = _couplings(drive, starts + t0, sizes)
    u = _rk4_unitary(np.eye(N_LEVELS, dtype=complex), coup, np.ascontiguousarray(sizes))
    if frame == "reference":
        u = _frame(drive, t0 + duration)[:, None] * u * np.conj(_frame(drive, t0))[None, :]
    return u


def populations_trace(state, drive: DriveHamiltonian, deco: DecoherenceParams, duration: float,
                      n_points: int = 101, step: float | None = None):
    """Populations at ``n_points`` evenly spaced times: ``(t, P)`` with P shape (n, 6)."""
    times = np.linspace(0.0, duration, n_points)
    rho = to_interaction_frame(_check_state(state), drive, 0.0)
    pops = [np.real(np.diag(rho))]
    for a, b in zip(times[:-1], times[1:]):
        rho = propagate(rho, drive, deco, b - a, step=step, frame="interaction", t0=a)
        pops.append(np.real(np.diag(rho)))
    return times, np.array(pops)


# ---------------------------------------------------------------------------
# ensembles


def rabi_factors(detunings, rabi_scatter: float, seed: int) -> np.ndarray:
    """Per-class laser-power factors ``1 + rabi_scatter * N(0, 1)``.

    Each factor is seeded from ``(seed, detuning bits)``, so it belongs to the
    class and not to its position in the list.
    """
    d = np.asarray(detunings, float)
    if rabi_scatter == 0:
        return np.ones(d.shape)
    bits = d.view(np.uint64)
    out = np.empty(d.shape)
    for i, b in enumerate(bits):
        rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, int(b) & 0xFFFFFFFF, int(b) >> 32])
        out[i] = 1.0 + rabi_scatter * rng.standard_normal()
    return np.clip(out, 0.0, None)


def propagate_classes(drive: DriveHamiltonian, detunings, states, deco: DecoherenceParams,
                      duration: float, rabi_scatter: float = 0.0, seed: int = 0,
                      step: float | None = None, frame: str = "reference"):
    """Propagate one state per class detuning; returns an (N, 6, 6) array."""
    d = np.asarray(detunings, float)
    states = np.asarray(states, complex)
    if states.ndim == 2:
        states = np.broadcast_to(states, (len(d), N_LEVELS, N_LEVELS))
    factors = rabi_factors(d, rabi_scatter, seed) * drive.rabi_scale
    out = np.empty((len(d), N_LEVELS, N_LEVELS), complex)
    for i in range(len(d)):
        out[i] = propagate(states[i], drive.with_detuning(float(d[i]), float(factors[i])), deco,
                           duration, step=step, frame=frame)
    return out


def ensemble_propagate(ensemble: Ensemble, drive: DriveHamiltonian, deco: DecoherenceParams,
                       duration: float, rabi_scatter: float = 0.0, seed: int = 0,
                       step: float | None = None) -> Ensemble:
    """Propagate every class of ``ensemble`` from its (incoherent) populations."""
    if len(ensemble) == 0:
        return ensemble
    states = np.zeros((len(ensemble), N_LEVELS, N_LEVELS), complex)
    idx = np.arange(N_LEVELS)
    states[:, idx, idx] = ensemble.populations
    drive = DriveHamiltonian(ensemble.scheme, 0.0, drive.waveforms, drive.interpolation,
                             drive.rabi_scale, drive.lines)
    out = propagate_classes(drive, ensemble.detunings, states, deco, duration, rabi_scatter, seed, step)
    pops = np.clip(np.real(np.einsum("nii->ni", out)), 0.0, None)
    return ensemble.with_populations(pops / pops.sum(axis=1, keepdims=True))


def weighted_mean(values, weights, keys) -> float:
    """Weighted mean summed in ``keys`` order with exact float summation, so the
    result does not depend on the input order."""
    values = np.asarray(values, float)
    weights = np.asarray(weights, float)
    order = np.lexsort((values, np.asarray(keys, float)))
    num = math.fsum((values * weights)[order])
    den = math.fsum(weights[order])
    return num / den if den else float("nan")


def transfer_efficiency(ensemble_before: Ensemble, ensemble_after: Ensemble, level: int) -> float:
    """Weighted mean population of ``level`` after the drive."""
    return weighted_mean(ensemble_after.populations[:, level], ensemble_after.weights,
                         ensemble_after.detunings)
