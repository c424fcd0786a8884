import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rareqc.crystal import LevelScheme
from rareqc.dynamics import DecoherenceParams
from rareqc.errors import AdiabaticityViolation
from rareqc.gates import (AXIS_STATES, PAULI, GatePulseParams, GateSpec, PeakReadout, TomographyRecord,
                          apply_gate, bright_dark_states, dark_state_gate, dark_state_return, density_matrix,
                          embed, fidelity, gate_fidelity, gate_process_fidelity, measure_projection,
                          process_fidelity, reconstruct_rho, rotation_to, u_dark, u_dark_matrix)
from rareqc.pulse import SechypParams

angle = st.floats(-20, 20, allow_nan=False)


def same_up_to_phase(a, b, atol=1e-10):
    k = np.unravel_index(np.argmax(np.abs(b)), b.shape)
    ph = a[k] / b[k]
    return abs(abs(ph) - 1) < atol and np.allclose(a, ph * b, atol=atol)


@given(angle, angle)
def test_u_dark_unitary(theta, phi):
    u = u_dark(theta, phi)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
    assert np.linalg.det(u) == pytest.approx(np.exp(1j * theta), abs=1e-12)


@given(angle, angle, angle)
def test_u_dark_composes(t1, t2, phi):
    assert same_up_to_phase(u_dark(t1, phi) @ u_dark(t2, phi), u_dark(t1 + t2, phi))


@given(angle, angle)
def test_u_dark_is_bright_dark_projector_form(theta, phi):
    b, d = bright_dark_states(phi)
    target = np.outer(b, b.conj()) + np.exp(1j * theta) * np.outer(d, d.conj())
    assert same_up_to_phase(u_dark(theta, phi), target)
    assert abs(np.vdot(b, d)) < 1e-12


def test_gate_spec_wraps():
    s = GateSpec(3 * np.pi, -0.5 * np.pi)
    assert s.theta == pytest.approx(np.pi) and s.phi == pytest.approx(1.5 * np.pi)
    with pytest.raises(ValueError):
        GateSpec(np.inf, 0)


@st.composite
def qubit_states(draw):
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


@given(qubit_states())
def test_tomography_round_trip(rho):
    rec = TomographyRecord(*(measure_projection(rho, a) for a in "XYZ"))
    assert 0.5 * np.abs(np.linalg.eigvalsh(reconstruct_rho(rec) - rho)).sum() < 1e-10


def test_reconstruct_projects_long_vectors():
    rho = reconstruct_rho(TomographyRecord(1.0, 1.0, 0.0))
    w = np.linalg.eigvalsh(rho)
    assert w.min() >= -1e-12 and w.max() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        TomographyRecord(1.5, 0, 0)


def test_gate_fidelity_mapping():
    assert gate_fidelity(0.84) == pytest.approx(0.9165, abs=1e-3)
    assert gate_fidelity(0.92) == pytest.approx(0.9592, abs=1e-3)
    assert gate_fidelity(1.0) == 1.0
    with pytest.raises(ValueError):
        gate_fidelity(1.2)


def test_state_fidelity():
    assert fidelity(density_matrix(AXIS_STATES["+x"]), AXIS_STATES["+x"]) == pytest.approx(1.0)
    assert fidelity(density_matrix(AXIS_STATES["+x"]), AXIS_STATES["-x"]) == pytest.approx(0.0, abs=1e-15)
    assert fidelity(0.5 * np.eye(2), AXIS_STATES["+y"]) == pytest.approx(0.5)


def test_process_fidelity_is_one_for_target():
    u = u_dark(0.7, 1.1)
    assert process_fidelity(u * np.exp(0.3j), u) == pytest.approx(1.0)
    assert process_fidelity(np.zeros((2, 2)), u) == 0.0


@pytest.mark.parametrize("label", [k for k in AXIS_STATES if k != "+z"])
def test_rotation_menu_reaches_axis_states(label):
    spec = rotation_to(AXIS_STATES[label])
    out = u_dark_matrix(spec) @ AXIS_STATES["+z"]
    assert abs(np.vdot(AXIS_STATES[label], out)) ** 2 == pytest.approx(1.0)


@pytest.mark.parametrize("theta,phi", [(np.pi / 2, 0.0), (np.pi, np.pi / 2), (1.0, 2.0)])
def test_simulated_gate_matches_target(theta, phi):
    assert gate_process_fidelity(GateSpec(theta, phi)) > 0.99


@pytest.mark.parametrize("theta", [0.5, 2.0, 4.0])
def test_dark_state_returns(theta):
    assert dark_state_return(GateSpec(theta, 0.3)) > 0.99


def test_gate_sequence_layout():
    seq = dark_state_gate(GateSpec(np.pi / 2, 0.0))
    assert seq.duration == pytest.approx(16.4)
    f = seq.frame_update()
    assert abs(f[1]) == pytest.approx(1.0) and f[0] == 1.0
    assert 0 <= seq.second_pulse_phase < 2 * np.pi


def test_gate_rejects_weak_pulse():
    with pytest.raises(AdiabaticityViolation):
        dark_state_gate(GateSpec(1.0, 0.0), GatePulseParams(SechypParams(peak_rabi=0.2)))


def test_apply_gate_keeps_trace():
    seq = dark_state_gate(GateSpec(np.pi / 2, 0.0))
    rho = apply_gate(embed(density_matrix(AXIS_STATES["+z"])), seq, deco=DecoherenceParams())
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)
    q = rho[:2, :2] / np.trace(rho[:2, :2])
    r = [np.real(np.trace(PAULI[a] @ q)) for a in "XYZ"]
    assert np.linalg.norm(r) > 0.8


def test_peak_readout_signs():
    ro = PeakReadout(deco=DecoherenceParams.none(), n_classes=1)
    assert ro.value(np.array([[1.0, 0.0, 0.0]])) == pytest.approx(1.0, abs=1e-3)
    assert ro.value(np.array([[0.0, 1.0, 0.0]])) == pytest.approx(-1.0, abs=1e-3)
    assert ro.value(np.array([[0.5, 0.5, 0.0]])) == pytest.approx(0.0, abs=1e-3)


def test_simulated_z_readout():
    rho = density_matrix(AXIS_STATES["-z"])
    ro = PeakReadout(deco=DecoherenceParams.none(), n_classes=1)
    assert measure_projection(rho, "Z", simulate_readout=True, readout=ro) == pytest.approx(-1.0, abs=1e-3)
    with pytest.raises(ValueError):
        measure_projection(rho, "W")


def test_band_detunings():
    ro = PeakReadout(n_classes=3, band_width=0.004)
    assert ro.detunings.max() - ro.detunings.min() <= 0.004
    assert PeakReadout(n_classes=1).detunings.tolist() == [0.0]


def test_mirrored_scheme_gate():
    s = LevelScheme(ground_order=("0", "1", "aux"))
    assert gate_process_fidelity(GateSpec(np.pi / 2, 0.0), scheme=s) > 0.99
