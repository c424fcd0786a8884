"""Piecewise-constant optimal control (GRAPE) for state-to-state transfer.

Controls are complex Rabi amplitudes (MHz) in the frame rotating at the
carrier, which sits on the |0> -> target line.  Every update is projected
back onto the bandwidth constraint by hard truncation of the pulse's sine
spectrum and onto the amplitude cap by a uniform rescale, so the deliverable pulse always obeys
both exactly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dst, idst
from scipy.signal import resample

from .crystal import EXCITED, GROUND, LevelScheme, N_LEVELS
from .errors import Infeasible, Stalled
from .pulse import Waveform

STALL_WINDOW = 50
STALL_TOLERANCE = 1e-8
DEFAULT_STARTS = 5
STUDY_STEP_RATE = 200.0  # steps per us in the bandwidth study


@dataclass(frozen=True)
class ControlSequence:
    dt: float
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=complex).ravel()
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n_steps(self) -> int:
        return self.amplitudes.size

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_steps) + 0.5) * self.dt

    def waveform(self, carrier: float = 0.0, oversample: int = 1) -> Waveform:
        """Sampled waveform; ``oversample > 1`` gives the band-limited (Fourier) interpolation."""
        z = self.amplitudes
        if oversample > 1:
            z = resample(z, z.size * oversample)
        return Waveform(z, oversample / self.dt, carrier)

    def to_dict(self) -> dict:
        return {"dt": self.dt, "re": self.amplitudes.real.tolist(), "im": self.amplitudes.imag.tolist()}


@dataclass(frozen=True)
class ControlProblem:
    """State transfer |initial> -> |target> on the levels in ``levels``.

    ``levels=None`` keeps the full six-level scheme.  ``target`` and
    ``initial`` are full-scheme level indices.
    """

    scheme: LevelScheme = field(default_factory=LevelScheme)
    detunings: tuple = (0.0,)
    initial: int = GROUND[0]
    target: int = EXCITED[0]
    bandwidth: float = 2.0
    amplitude_cap: float = 2.0
    duration: float = 2.0
    n_steps: int = 100
    target_fidelity: float = 0.999
    levels: tuple | None = None

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError("bandwidth_limit must be positive")
        if self.duration <= 0 or self.n_steps < 1:
            raise ValueError("duration and n_steps must be positive")
        if self.amplitude_cap <= 0:
            raise ValueError("amplitude_cap must be positive")
        object.__setattr__(self, "detunings", tuple(float(d) for d in np.atleast_1d(self.detunings)))
        if self.levels is not None:
            lv = tuple(int(i) for i in self.levels)
            if self.initial not in lv or self.target not in lv:
                raise ValueError("initial and target must be among the kept levels")
            object.__setattr__(self, "levels", lv)

    @property
    def dt(self) -> float:
        return self.duration / self.n_steps

    @property
    def kept(self) -> tuple:
        return self.levels if self.levels is not None else tuple(range(N_LEVELS))

    def two_level(self) -> "ControlProblem":
        return _replace(self, levels=(self.initial, self.target))

    def full(self) -> "ControlProblem":
        return _replace(self, levels=None)

    @property
    def carrier(self) -> float:
        """Carrier offset from the class detuning: the initial -> target line."""
        return float(self.scheme.offsets[self.initial, self.target - N_LEVELS // 2])


def _replace(p: ControlProblem, **kw) -> ControlProblem:
    d = {k: getattr(p, k) for k in p.__dataclass_fields__}
    d.update(kw)
    return ControlProblem(**d)


def _operators(problem: ControlProblem, detuning: float):
    """Static part H0 and the generators for Re/Im of the control, rad/us."""
    s = problem.scheme
    kept = problem.kept
    n = len(kept)
    e0 = np.zeros(N_LEVELS)
    e0[:3] = -2 * np.pi * s.ground_offsets
    e0[3:] = 2 * np.pi * (detuning + s.excited_offsets - problem.carrier)
    c = np.zeros((N_LEVELS, N_LEVELS), complex)
    c[3:, :3] = np.pi * s.coupling.T  # element [e, g]
    idx = np.array(kept)
    h0 = np.diag(e0[idx]).astype(complex)
    lower = c[np.ix_(idx, idx)]  # |e><g| block
    # coupling term pi*c*conj(a) on |e><g|:  a = x + iy
    hx = lower + lower.conj().T
    hy = -1j * lower + 1j * lower.conj().T
    return h0, hx, hy, n


class _Model:
    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.ops = [_operators(problem, d) for d in problem.detunings]
        kept = problem.kept
        self.i0 = kept.index(problem.initial)
        self.it = kept.index(problem.target)

    def _steps(self, h0, hx, hy, a, dt, with_grad):
        hs = h0[None] + a.real[:, None, None] * hx[None] + a.imag[:, None, None] * hy[None]
        lam, v = np.linalg.eigh(hs)
        ph = np.exp(-1j * lam * dt)
        u = np.einsum("kij,kj,klj->kil", v, ph, v.conj())
        if not with_grad:
            return u, None
        diff = lam[:, :, None] - lam[:, None, :]
        near = np.abs(diff) < 1e-10
        safe = np.where(near, 1.0, diff)
        phi = np.where(near, -1j * dt * ph[:, :, None], (ph[:, :, None] - ph[:, None, :]) / safe)
        du = []
        for g in (hx, hy):
            gv = np.einsum("kji,jl,klm->kim", v.conj(), g, v)
            du.append(np.einsum("kij,kjl,kml->kim", v, gv * phi, v.conj()))
        return u, du

    def evaluate(self, a: np.ndarray, with_grad: bool = False):
        dt = self.problem.dt
        n_det = len(self.ops)
        fid = 0.0
        grad = np.zeros(a.size, complex) if with_grad else None
        for h0, hx, hy, n in self.ops:
            u, du = self._steps(h0, hx, hy, a, dt, with_grad)
            psi = np.zeros((a.size + 1, n), complex)
            psi[0, self.i0] = 1.0
            for k in range(a.size):
                psi[k + 1] = u[k] @ psi[k]
            amp = psi[-1, self.it]
            fid += abs(amp) ** 2 / n_det
            if with_grad:
                chi = np.zeros((a.size, n), complex)  # <target| U_N ... U_{k+1}
                row = np.zeros(n, complex)
                row[self.it] = 1.0
                for k in range(a.size - 1, -1, -1):
                    chi[k] = row
                    row = row @ u[k]
                gx = np.einsum("ki,kij,kj->k", chi, du[0], psi[:-1])
                gy = np.einsum("ki,kij,kj->k", chi, du[1], psi[:-1])
                grad += (2 * np.real(np.conj(amp) * gx) + 2j * np.real(np.conj(amp) * gy)) / n_det
        return (fid, grad) if with_grad else fid


def fidelity(problem: ControlProblem, controls) -> float:
    """Mean transfer probability over the problem's detunings."""
    a = controls.amplitudes if isinstance(controls, ControlSequence) else np.asarray(controls, complex)
    return float(_Model(problem).evaluate(a))


def fidelity_gradient(problem: ControlProblem, controls):
    """Fidelity and its exact gradient, packed as dF/dRe + 1j*dF/dIm per step."""
    a = controls.amplitudes if isinstance(controls, ControlSequence) else np.asarray(controls, complex)
    f, g = _Model(problem).evaluate(a, with_grad=True)
    return float(f), g


def band_project(a, dt: float, bandwidth: float) -> np.ndarray:
    """Keep only the sine modes ``sin(pi m t / T)`` of the pulse window with
    ``m / 2T <= bandwidth / 2``.

    A sine series vanishes at both ends, so the projected pulse switches on
    and off smoothly instead of carrying the step a periodic FFT cut leaves.
    The map is an orthogonal projection, hence idempotent.
    """
    a = np.asarray(a, complex)
    if a.size == 0:
        return a.copy()
    n_keep = int(np.floor(bandwidth * a.size * dt + 1e-9))
    c = dst(a, type=2, norm="ortho")
    c[n_keep:] = 0.0
    return idst(c, type=2, norm="ortho")


def project(a, dt: float, bandwidth: float, cap: float) -> np.ndarray:
    """Band projection followed by a uniform rescale under the amplitude cap."""
    b = band_project(a, dt, bandwidth)
    peak = np.max(np.abs(b)) if b.size else 0.0
    if peak > cap:
        b = b * (cap / peak)
    return b


def check_feasible(problem: ControlProblem) -> None:
    # a pi pulse needs Rabi area 1/2 (MHz * us)
    if problem.duration * problem.amplitude_cap < 0.5:
        raise Infeasible(f"duration x amplitude cap = {problem.duration * problem.amplitude_cap:.3g} "
                         "is below the pi-pulse area 0.5")


def initial_guess(problem: ControlProblem, seed: int) -> np.ndarray:
    """Smooth random control at about a pi-pulse area, inside both constraints."""
    rng = np.random.default_rng(seed)
    n = problem.n_steps
    a = rng.normal(size=n) + 1j * rng.normal(size=n)
    a = band_project(a, problem.dt, min(problem.bandwidth, 2.0 / problem.duration + 1e-9)) + 1e-3
    area = np.abs(a).sum() * problem.dt
    a *= 0.5 / area
    return project(a, problem.dt, problem.bandwidth, problem.amplitude_cap)


def _optimize_one(problem: ControlProblem, a0: np.ndarray, max_iterations: int):
    model = _Model(problem)
    dt, bw, cap = problem.dt, problem.bandwidth, problem.amplitude_cap
    a = a0.copy()
    f, g = model.evaluate(a, with_grad=True)
    trace = [float(f)]
    step = 0.1 * cap / max(np.max(np.abs(g)), 1e-12)
    for _ in range(max_iterations):
        if f >= problem.target_fidelity:
            break
        direction = band_project(g, dt, bw)
        accepted = False
        for _ls in range(40):
            cand = project(a + step * direction, dt, bw, cap)
            fc = model.evaluate(cand)
            if fc > f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            trace.append(float(f))
        else:
            a = cand
            f, g = model.evaluate(a, with_grad=True)
            trace.append(float(f))
            step *= 1.6
        if (len(trace) > STALL_WINDOW and trace[-1] - trace[-1 - STALL_WINDOW] < STALL_TOLERANCE
                and f < problem.target_fidelity):
            return a, trace, True
    return a, trace, False


def grape_optimize(problem: ControlProblem, max_iterations: int = 500, seed: int = 0,
                   n_starts: int = DEFAULT_STARTS, workers: int | None = None):
    """Multi-start projected-gradient ascent.

    Returns ``(ControlSequence, fidelity_trace)`` of the best start (lowest
    start index on ties).  Raises :class:`Stalled` if every start stalls
    below target; the best partial result rides on the exception.
    """
    check_feasible(problem)
    seeds = np.random.SeedSequence(seed).spawn(n_starts)
    guesses = [initial_guess(problem, int(s.generate_state(1)[0])) for s in seeds]
    if max_iterations <= 0:
        a0 = guesses[0]
        return ControlSequence(problem.dt, a0), [fidelity(problem, a0)]
    run = lambda a0: _optimize_one(problem, a0, max_iterations)  # noqa: E731
    if workers == 1 or n_starts == 1:
        results = [run(a0) for a0 in guesses]
    else:
        with ThreadPoolExecutor(max_workers=workers or n_starts) as ex:
            results = list(ex.map(run, guesses))
    best = max(range(n_starts), key=lambda i: (results[i][1][-1], -i))
    a, trace, stalled = results[best]
    seq = ControlSequence(problem.dt, a)
    if all(r[2] for r in results):
        raise Stalled(f"no start improved by {STALL_TOLERANCE:g} over {STALL_WINDOW} iterations "
                      f"(best fidelity {trace[-1]:.6f})", (seq, trace))
    return seq, trace


@dataclass(frozen=True)
class StudyRow:
    bandwidth: float
    eff_two_level: float
    eff_multi_level: float


def study_problem(bandwidth: float, scheme: LevelScheme | None = None, periods: float = 16.0,
                  cap_fraction: float = 0.05, step_rate: float = STUDY_STEP_RATE) -> ControlProblem:
    """Fastest-transfer settings for one bandwidth: the pulse lasts ``periods/B``
    and the Rabi cap grows with the bandwidth, so wider bands give shorter,
    stronger pulses.  Steps are short enough (``step_rate`` per us) that the
    staircase replicas sit far above every line of the scheme."""
    scheme = scheme or LevelScheme()
    duration = periods / bandwidth
    n = max(int(np.ceil(duration * step_rate)), 1)
    return ControlProblem(scheme=scheme, bandwidth=bandwidth, amplitude_cap=cap_fraction * bandwidth,
                          duration=duration, n_steps=n, target_fidelity=0.999)


def efficiency_vs_bandwidth(scheme: LevelScheme | None, bandwidths, max_iterations: int = 300,
                            seed: int = 0, n_starts: int = DEFAULT_STARTS, **settings) -> list[StudyRow]:
    """Optimise on the two-level model, then re-score the pulse on all six levels."""
    rows = []
    for b in bandwidths:
        full = study_problem(float(b), scheme, **settings)
        two = full.two_level()
        try:
            seq, _ = grape_optimize(two, max_iterations, seed, n_starts)
        except Stalled as exc:
            seq = exc.result[0]
        rows.append(StudyRow(float(b), fidelity(two, seq), fidelity(full, seq)))
    return rows


def finite_difference_gradient(problem: ControlProblem, a, eps: float = 1e-6) -> np.ndarray:
    """Central-difference oracle for :func:`fidelity_gradient`."""
    a = np.asarray(a, complex)
    model = _Model(problem)
    out = np.zeros(a.size, complex)
    for k in range(a.size):
        for unit, slot in ((1.0, "re"), (1j, "im")):
            p = a.copy()
            m = a.copy()
            p[k] += eps * unit
            m[k] -= eps * unit
            d = (model.evaluate(p) - model.evaluate(m)) / (2 * eps)
            out[k] += d if slot == "re" else 1j * d
    return out


__all__ = ["ControlSequence", "ControlProblem", "StudyRow", "fidelity", "fidelity_gradient",
           "band_project", "project", "check_feasible", "initial_guess", "grape_optimize",
           "study_problem", "efficiency_vs_bandwidth", "finite_difference_gradient"]
