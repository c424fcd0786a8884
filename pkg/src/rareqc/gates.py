"""Dark-state gates and single-qubit tomography.

Qubit basis is (|0>, |1>).  A two-colour field with phase relation ``phi``
couples only the bright state ``|B> = (|0> - e^{-i phi}|1>)/sqrt(2)``; two
sechyp transfers B -> e -> B leave ``|D>`` alone and give ``|B>`` a phase set
by the phase offset of the second transfer.  Up to a global phase the
result is ``|B><B| + e^{i theta}|D><D|``, the matrix returned by
:func:`u_dark_matrix`.

All gate comparisons happen in the qubit frame (interaction picture of the
bare Hamiltonian) and up to a global phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .crystal import GROUND, N_LEVELS, LevelScheme
from .dynamics import DecoherenceParams, DriveHamiltonian, propagate, propagate_unitary
from .pulse import DEFAULT_SAMPLE_RATE, SechypParams, Waveform, check_adiabatic, sechyp, two_color

TWO_PI = 2 * np.pi
PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
_S = 1 / np.sqrt(2)
AXIS_STATES = {
    "+z": np.array([1, 0], complex),
    "-z": np.array([0, 1], complex),
    "+x": np.array([_S, _S], complex),
    "-x": np.array([_S, -_S], complex),
    "+y": np.array([_S, 1j * _S], complex),
    "-y": np.array([_S, -1j * _S], complex),
}


@dataclass(frozen=True)
class GateSpec:
    """Rotation angle ``theta`` and two-colour phase ``phi`` (radians, wrapped into [0, 2pi))."""

    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        for name in ("theta", "phi"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v % TWO_PI)


def bright_dark_states(phi: float):
    """``(|B>, |D>)`` for phase relation ``phi``."""
    ph = np.exp(-1j * phi)
    return np.array([_S, -_S * ph]), np.array([_S, _S * ph])


def u_dark(theta: float, phi: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.exp(0.5j * theta) * np.array(
        [[c, 1j * np.exp(1j * phi) * s], [1j * np.exp(-1j * phi) * s, c]])


def u_dark_matrix(spec: GateSpec) -> np.ndarray:
    """Target unitary of the dark-state gate."""
    return u_dark(spec.theta, spec.phi)


# ---------------------------------------------------------------------------
# gate synthesis


@dataclass(frozen=True)
class GatePulseParams:
    """Pulse settings shared by both transfers of a dark-state gate.

    ``excited`` picks the Lambda level (0..2 for e1..e3); e2 keeps the
    largest clearance from the other lines.
    """

    sechyp: SechypParams = field(default_factory=SechypParams)
    excited: int = 1
    sample_rate: float = DEFAULT_SAMPLE_RATE

    def to_dict(self) -> dict:
        return {"sechyp": self.sechyp.to_dict(), "excited": self.excited,
                "sample_rate": self.sample_rate}


@dataclass(frozen=True, eq=False)
class GateSequence:
    """Synthesised gate: the two-colour waveform and its bookkeeping."""

    spec: GateSpec
    waveform: Waveform
    second_pulse_phase: float
    detuning: float
    params: GatePulseParams
    frame_phase: float = 0.0

    @property
    def duration(self) -> float:
        return self.waveform.duration

    def frame_update(self) -> np.ndarray:
        """Diagonal 6x6 virtual-Z correction: the |1> reference phase is
        advanced by the light-shift phase the gate leaves on the qubit."""
        f = np.ones(N_LEVELS, complex)
        f[GROUND[1]] = np.exp(-1j * self.frame_phase)
        return f

    def drive(self, scheme: LevelScheme, detuning: float | None = None,
              rabi_scale: float = 1.0) -> DriveHamiltonian:
        d = self.detuning if detuning is None else detuning
        return DriveHamiltonian(scheme, d, (self.waveform,), rabi_scale=rabi_scale)


def light_shift_rate(scheme: LevelScheme, excited: int = 1) -> float:
    """Differential shift ``(S_0 - S_1) / |z|^2`` (1/MHz) of the qubit levels.

    Each colour also reaches the other qubit level's lines off resonance;
    a level shifts by ``c^2 |z|^2 / (4 Delta)`` per line with ``Delta`` the
    colour minus the line frequency.  The intended Lambda pairs shift the
    dark state equally on both levels and are left out.
    """
    off = scheme.offsets
    cp = scheme.coupling
    lower = off[0, excited]
    upper = off[1, excited]
    s0 = sum(cp[0, e] ** 2 / (4 * (upper - off[0, e])) for e in range(3))
    s1 = sum(cp[1, e] ** 2 / (4 * (lower - off[1, e])) for e in range(3))
    return float(s0 - s1)


def _raw_sequence(scheme: LevelScheme, phi: float, offset: float, params: GatePulseParams,
                  detuning: float):
    """Gate waveform and the qubit-frame phase it leaves behind."""
    g = scheme.ground_offsets
    splitting = float(g[1] - g[0])
    carrier = detuning + float(g[0]) + float(scheme.excited_offsets[params.excited]) + 0.5 * splitting
    p = params.sechyp.with_(center_frequency=0.0)
    first = sechyp(p, params.sample_rate)
    second = first.scaled(np.exp(1j * offset))
    base = first.concat(second).replace(carrier=carrier)
    # follow the light-shifted qubit frame so the dark state stays dark
    rate = 2 * np.pi * light_shift_rate(scheme, params.excited) * np.abs(base.samples) ** 2
    alpha = (np.cumsum(rate) - 0.5 * rate) * base.dt
    total = float(np.sum(rate) * base.dt)
    return two_color(base, splitting, phi, phase_track=alpha), total


def _qubit_block(u: np.ndarray) -> np.ndarray:
    return u[np.ix_(GROUND[:2], GROUND[:2])]


@lru_cache(maxsize=256)
def _intrinsic_phase(scheme: LevelScheme, phi: float, params: GatePulseParams, detuning: float) -> float:
    """Bright-minus-dark phase of the uncalibrated (zero offset) sequence."""
    wave, alpha = _raw_sequence(scheme, phi, 0.0, params, detuning)
    u = propagate_unitary(DriveHamiltonian(scheme, detuning, (wave,)), wave.duration)
    q = _qubit_block(GateSequence(GateSpec(), wave, 0.0, detuning, params, alpha).frame_update()[:, None] * u)
    b, d = bright_dark_states(phi)
    return float(np.angle(np.vdot(b, q @ b)) - np.angle(np.vdot(d, q @ d)))


def dark_state_gate(spec: GateSpec, params: GatePulseParams | None = None,
                    scheme: LevelScheme | None = None, detuning: float = 0.0) -> GateSequence:
    """Two two-colour sechyp transfers implementing ``u_dark_matrix(spec)``.

    The phase offset of the second transfer is calibrated from one
    simulation of the zero-offset pair (cached).  The upper colour's phase
    follows the differential light shift of the qubit levels so the dark
    state stays dark; the leftover qubit phase is a frame update.
    """
    params = params or GatePulseParams()
    scheme = scheme or LevelScheme()
    check_adiabatic(params.sechyp, coupling=math.sqrt(2) * float(scheme.coupling[0, params.excited]))
    chi0 = _intrinsic_phase(scheme, spec.phi, params, float(detuning))
    # the second transfer adds +offset to the bright state; want bright - dark = -theta
    offset = (-spec.theta - chi0) % TWO_PI
    wave, alpha = _raw_sequence(scheme, spec.phi, offset, params, detuning)
    return GateSequence(spec, wave, offset, float(detuning), params, alpha)


def simulate_gate(seq: GateSequence, scheme: LevelScheme | None = None,
                  detuning: float | None = None) -> np.ndarray:
    """Decoherence-free 6x6 propagator of the sequence (qubit frame, frame update applied)."""
    scheme = scheme or LevelScheme()
    return seq.frame_update()[:, None] * propagate_unitary(seq.drive(scheme, detuning), seq.duration)


def process_fidelity(q: np.ndarray, target: np.ndarray) -> float:
    """Average state fidelity over the six axis states (qubit block ``q`` may be non-unitary)."""
    vals = []
    for psi in AXIS_STATES.values():
        vals.append(abs(np.vdot(target @ psi, q @ psi)) ** 2)
    return float(np.mean(vals))


def gate_process_fidelity(spec: GateSpec, params: GatePulseParams | None = None,
                          scheme: LevelScheme | None = None, detuning: float = 0.0) -> float:
    seq = dark_state_gate(spec, params, scheme, detuning)
    u = simulate_gate(seq, scheme, detuning)
    return process_fidelity(_qubit_block(u), u_dark_matrix(spec))


def dark_state_return(spec: GateSpec, params: GatePulseParams | None = None,
                      scheme: LevelScheme | None = None, detuning: float = 0.0) -> float:
    """Probability that the dark state of ``spec.phi`` comes back to itself."""
    seq = dark_state_gate(spec, params, scheme, detuning)
    q = _qubit_block(simulate_gate(seq, scheme, detuning))
    _, d = bright_dark_states(spec.phi)
    return float(abs(np.vdot(d, q @ d)) ** 2)


def embed(rho_q: np.ndarray) -> np.ndarray:
    """Qubit density matrix as a 6x6 state."""
    rho = np.zeros((N_LEVELS, N_LEVELS), complex)
    idx = np.ix_(GROUND[:2], GROUND[:2])
    rho[idx] = rho_q
    return rho


def apply_gate(rho6: np.ndarray, seq: GateSequence, scheme: LevelScheme | None = None,
               deco: DecoherenceParams | None = None, detuning: float | None = None) -> np.ndarray:
    """Run the sequence on a 6x6 state in the qubit frame."""
    scheme = scheme or LevelScheme()
    drive = seq.drive(scheme, detuning)
    if deco is None or deco.is_free:
        u = propagate_unitary(drive, seq.duration)
        out = u @ rho6 @ u.conj().T
    else:
        out = propagate(rho6, drive, deco, seq.duration, frame="interaction")
    f = seq.frame_update()
    return f[:, None] * out * np.conj(f)[None, :]


# ---------------------------------------------------------------------------
# tomography


@dataclass(frozen=True)
class TomographyRecord:
    tr_x: float
    tr_y: float
    tr_z: float

    def __post_init__(self):
        for name in ("tr_x", "tr_y", "tr_z"):
            v = float(getattr(self, name))
            if not -1 - 1e-9 <= v <= 1 + 1e-9:
                raise ValueError(f"{name} must lie in [-1, 1]")
            object.__setattr__(self, name, v)

    @property
    def bloch(self) -> np.ndarray:
        return np.array([self.tr_x, self.tr_y, self.tr_z])

    @classmethod
    def of(cls, rho: np.ndarray) -> "TomographyRecord":
        return cls(*(float(np.real(np.trace(PAULI[a] @ rho))) for a in "XYZ"))


def density_matrix(psi) -> np.ndarray:
    psi = np.asarray(psi, complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def reconstruct_rho(record: TomographyRecord) -> np.ndarray:
    """Linear inversion; Bloch vectors longer than 1 are scaled back onto the sphere."""
    r = record.bloch
    n = np.linalg.norm(r)
    if n > 1:
        r = r / n
    return 0.5 * (PAULI["I"] + r[0] * PAULI["X"] + r[1] * PAULI["Y"] + r[2] * PAULI["Z"])


def fidelity(rho: np.ndarray, psi) -> float:
    psi = np.asarray(psi, complex)
    psi = psi / np.linalg.norm(psi)
    return float(np.clip(np.real(np.vdot(psi, rho @ psi)), 0.0, 1.0))


def gate_fidelity(f_tot: float) -> float:
    if not 0 <= f_tot <= 1:
        raise ValueError("F_tot must lie in [0, 1]")
    return math.sqrt(f_tot)


_CANDIDATES = [(t, p) for t in (0.5 * np.pi, np.pi, 1.5 * np.pi) for p in (0, 0.5 * np.pi, np.pi, 1.5 * np.pi)]


def rotation_to(target, source=AXIS_STATES["+z"]) -> GateSpec:
    """Dark-state gate (from a small fixed menu) taking ``source`` closest to ``target``."""
    best = max(_CANDIDATES, key=lambda c: (round(abs(np.vdot(target, u_dark(*c) @ source)) ** 2, 12), -c[0], -c[1]))
    return GateSpec(*best)


READOUT_ROTATIONS = {"X": rotation_to(AXIS_STATES["+z"], AXIS_STATES["+x"]),
                     "Y": rotation_to(AXIS_STATES["+z"], AXIS_STATES["+y"]),
                     "Z": None}


@dataclass
class PeakReadout:
    """Absorption-peak readout of the qubit band.

    The band is represented by ``n_classes`` classes spread over
    ``band_width``; ``peak_width`` only sets the absorption windows.  After
    the basis-rotation gate, the |0> lines to e1 and e2 (the two left peaks)
    count as +1 and the |1> lines to e2 and e3 (the two right peaks) as -1.

    The bright state waits in the excited state between the two transfers,
    so its phase drifts by pi times the gate length (about 52 rad) per MHz
    of class detuning; the coherent band has to be much narrower than the
    absorption peak for the gate phase to stay sharp.
    """

    scheme: LevelScheme = field(default_factory=LevelScheme)
    deco: DecoherenceParams = field(default_factory=DecoherenceParams)
    params: GatePulseParams = field(default_factory=GatePulseParams)
    peak_width: float = 0.5
    n_classes: int = 3
    resolution: float = 0.05
    band_width: float = 0.004

    @property
    def detunings(self) -> np.ndarray:
        if self.n_classes == 1:
            return np.zeros(1)
        return np.linspace(-0.5, 0.5, self.n_classes) * self.band_width * (self.n_classes - 1) / self.n_classes

    def _windows(self):
        off = self.scheme.offsets
        left = [off[0, 0], off[0, 1]]
        right = [off[1, 1], off[1, 2]]
        return left, right

    def value(self, ground_pops: np.ndarray) -> float:
        """Readout from per-class ground populations (rows: classes; columns |0>, |1>, |aux>)."""
        from .crystal import Ensemble, absorption_spectrum

        d = self.detunings
        pops = np.zeros((len(d), N_LEVELS))
        pops[:, list(GROUND)] = ground_pops
        lo, hi = float(np.min(d)) - 1.0, float(np.max(d)) + float(self.scheme.offsets.max()) + 1.0
        ens = Ensemble(self.scheme, (lo, hi), d, np.ones(len(d)), pops)
        half = 0.5 * self.peak_width + 2 * self.resolution
        areas = []
        for group in self._windows():
            tot = 0.0
            for f in group:
                grid = np.linspace(f - half, f + half, 201)
                tot += np.trapezoid(absorption_spectrum(ens, grid, resolution=self.resolution), grid)
            areas.append(tot)
        left, right = areas
        return float((left - right) / (left + right)) if left + right > 0 else 0.0

    def measure(self, states6: list, axis: str) -> float:
        """Measure the band (one 6x6 state per class) along ``axis``."""
        spec = READOUT_ROTATIONS[axis]
        d = self.detunings
        pops = np.zeros((len(d), 3))
        for i, rho in enumerate(states6):
            if spec is not None:
                seq = dark_state_gate(spec, self.params, self.scheme, 0.0)
                rho = apply_gate(rho, seq, self.scheme, self.deco, float(d[i]))
            pops[i] = np.real(np.diag(rho))[list(GROUND)]
        return self.value(pops)


def measure_projection(state: np.ndarray, axis: str, simulate_readout: bool = False,
                       readout: PeakReadout | None = None) -> float:
    """``Tr(sigma_axis rho)``, ideally or through gate plus absorption readout."""
    axis = axis.upper()
    if axis not in ("X", "Y", "Z"):
        raise ValueError("axis must be X, Y or Z")
    rho = np.asarray(state, complex)
    if not simulate_readout:
        return float(np.real(np.trace(PAULI[axis] @ rho)))
    readout = readout or PeakReadout()
    return readout.measure([embed(rho)] * readout.n_classes, axis)


@dataclass
class TomographyResult:
    label: str
    bloch: np.ndarray
    f_tot: float

    @property
    def f_gate(self) -> float:
        return gate_fidelity(self.f_tot)

    def to_dict(self) -> dict:
        return {"state_label": self.label, "bloch": [float(x) for x in self.bloch],
                "F_tot": self.f_tot, "F_gate": self.f_gate}


def six_state_tomography(readout: PeakReadout | None = None, labels=tuple(AXIS_STATES)) -> list:
    """Prepare each axis state from |0> with a dark-state gate, then measure
    X, Y and Z through the readout pipeline."""
    readout = readout or PeakReadout()
    d = readout.detunings
    out = []
    for label in labels:
        target = AXIS_STATES[label]
        prepared = []
        spec = None if label == "+z" else rotation_to(target)
        for x in d:
            rho = embed(density_matrix(AXIS_STATES["+z"]))
            if spec is not None:
                seq = dark_state_gate(spec, readout.params, readout.scheme, 0.0)
                rho = apply_gate(rho, seq, readout.scheme, readout.deco, float(x))
            prepared.append(rho)
        vals = [readout.measure(prepared, a) for a in "XYZ"]
        rec = TomographyRecord(*np.clip(vals, -1, 1))
        rho_q = reconstruct_rho(rec)
        out.append(TomographyResult(label, rec.bloch, fidelity(rho_q, target)))
    return out
