import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.fft import dst

from rareqc.errors import Infeasible, Stalled
from rareqc.optctrl import (ControlProblem, ControlSequence, band_project, finite_difference_gradient,
                            fidelity, fidelity_gradient, grape_optimize, initial_guess, project,
                            study_problem)


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    prob = ControlProblem(detunings=(0.0, 0.3), duration=2.0, n_steps=16, bandwidth=8.0)
    prob = prob if seed % 2 else prob.two_level()
    a = rng.uniform(0.2, 1.0, 16) * np.exp(2j * np.pi * rng.uniform(size=16))
    f, g = fidelity_gradient(prob, a)
    assert f == pytest.approx(fidelity(prob, a))
    assert rel_err(g, finite_difference_gradient(prob, a)) < 1e-4


vec = st.integers(0, 2**31 - 1).map(
    lambda s: np.random.default_rng(s).normal(size=64) + 1j * np.random.default_rng(s + 1).normal(size=64))


@given(vec, st.floats(0.1, 20.0))
def test_band_projection_idempotent(a, bw):
    p = band_project(a, 0.05, bw)
    np.testing.assert_allclose(band_project(p, 0.05, bw), p, atol=1e-12)
    keep = int(np.floor(bw * 64 * 0.05 + 1e-9))
    assert np.max(np.abs(dst(p, type=2, norm="ortho")[keep:]), initial=0.0) < 1e-12


@given(vec, st.floats(0.1, 20.0), st.floats(0.05, 3.0))
def test_projection_meets_both_constraints(a, bw, cap):
    p = project(a, 0.05, bw, cap)
    assert np.abs(p).max() <= cap * (1 + 1e-12)
    np.testing.assert_allclose(band_project(p, 0.05, bw), p, atol=1e-12)


@settings(max_examples=10)
@given(st.integers(0, 1000), st.floats(1.0, 4.0), st.floats(0.5, 2.0))
def test_grape_output_feasible_and_monotone(seed, bw, cap):
    prob = ControlProblem(bandwidth=bw, amplitude_cap=cap, duration=2.0, n_steps=40).two_level()
    try:
        seq, trace = grape_optimize(prob, 60, seed, n_starts=2)
    except Stalled as exc:
        seq, trace = exc.result
    a = np.asarray(seq.amplitudes)
    assert np.abs(a).max() <= cap * (1 + 1e-12)
    np.testing.assert_allclose(band_project(a, prob.dt, bw), a, atol=1e-12)
    assert np.all(np.diff(trace) >= 0)
    assert trace[-1] == pytest.approx(fidelity(prob, seq))


def test_two_mhz_transfer():
    prob = ControlProblem(bandwidth=2.0, amplitude_cap=2.0, duration=3.0, n_steps=60).two_level()
    seq, trace = grape_optimize(prob, 300, seed=0)
    assert trace[-1] >= 0.99
    assert fidelity(prob.full(), seq) >= 0.99


def test_grape_deterministic():
    prob = ControlProblem(duration=3.0, n_steps=60).two_level()
    a = grape_optimize(prob, 50, seed=7)[0].amplitudes
    b = grape_optimize(prob, 50, seed=7, workers=1)[0].amplitudes
    np.testing.assert_array_equal(a, b)


def test_zero_iterations_returns_guess():
    prob = ControlProblem(duration=3.0, n_steps=60).two_level()
    seq, trace = grape_optimize(prob, 0, seed=3)
    assert len(trace) == 1 and seq.n_steps == 60


def test_infeasible():
    with pytest.raises(Infeasible):
        grape_optimize(ControlProblem(duration=0.5, amplitude_cap=0.5), 10)


def test_stalled_carries_result():
    prob = ControlProblem(detunings=(40.0,), bandwidth=0.5, amplitude_cap=0.5, duration=2.0, n_steps=20,
                          target_fidelity=0.999).two_level()
    with pytest.raises(Stalled) as exc:
        grape_optimize(prob, 400, seed=0, n_starts=2)
    seq, trace = exc.value.result
    assert isinstance(seq, ControlSequence) and trace[-1] < 0.999


def test_initial_guess_inside_constraints():
    prob = ControlProblem(bandwidth=1.0, amplitude_cap=0.3, duration=4.0, n_steps=80)
    a = initial_guess(prob, 5)
    assert np.abs(a).max() <= 0.3 + 1e-12
    np.testing.assert_allclose(band_project(a, prob.dt, 1.0), a, atol=1e-12)


def test_problem_validation():
    with pytest.raises(ValueError):
        ControlProblem(bandwidth=0)
    with pytest.raises(ValueError):
        ControlProblem(levels=(1, 2))
    p = ControlProblem().two_level()
    assert p.kept == (0, 3) and p.full().kept == tuple(range(6))


def test_control_sequence():
    seq = ControlSequence(0.05, np.ones(20) * (1 + 1j))
    assert seq.duration == pytest.approx(1.0) and seq.n_steps == 20
    w = seq.waveform(carrier=5.0, oversample=4)
    assert len(w) == 80 and w.sample_rate == pytest.approx(80.0) and w.carrier == 5.0
    d = seq.to_dict()
    assert d["dt"] == 0.05 and len(d["re"]) == 20
    with pytest.raises(ValueError):
        ControlSequence(0.0, [1.0])


def test_study_problem_settings():
    p = study_problem(4.0)
    assert p.duration == pytest.approx(4.0) and p.amplitude_cap == pytest.approx(0.2)
    assert p.n_steps == 800
