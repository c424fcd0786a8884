import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rareqc.errors import (AdiabaticityViolation, AliasingError, OutOfBand, SidebandOverlap,
                           TruncationError)
from rareqc.optctrl import ControlProblem, grape_optimize
from rareqc.pulse import (AomModel, SechypParams, Waveform, aom_apply, beat_characterize, beat_errors,
                          check_adiabatic, sechyp, sechyp_envelope, two_color)


@settings(max_examples=30)
@given(st.floats(0.2, 3.0), st.floats(1.0, 5.0))
def test_sechyp_energy(omega, beta):
    w = sechyp(SechypParams(peak_rabi=omega, width=beta, duration=24.0 / beta))
    assert w.energy() == pytest.approx(2 * omega ** 2 / beta, rel=1e-3)


def test_sechyp_matches_closed_form():
    p = SechypParams()
    w = sechyp(p)
    np.testing.assert_allclose(w.samples, sechyp_envelope(p, w.times), atol=1e-12)
    assert w.envelope.max() == pytest.approx(1.5, rel=1e-4)
    assert w.duration == pytest.approx(8.2)


def test_sechyp_chirp_span():
    p = SechypParams(center_frequency=3.0)
    f = sechyp(p).instantaneous_frequency()
    assert f[len(f) // 2] == pytest.approx(3.0, abs=1e-2)
    half = p.chirp_span / 2
    assert f[0] == pytest.approx(3.0 - half, abs=1e-3)
    assert f[-1] == pytest.approx(3.0 + half, abs=1e-3)
    assert p.chirp_span == pytest.approx(2.0)


def test_sechyp_errors():
    with pytest.raises(TruncationError):
        sechyp(SechypParams(duration=4.0))
    with pytest.raises(AliasingError):
        sechyp(SechypParams(), sample_rate=5.0)
    with pytest.raises(ValueError):
        SechypParams(peak_rabi=0)
    with pytest.raises(AdiabaticityViolation):
        check_adiabatic(SechypParams(peak_rabi=0.3))
    check_adiabatic(SechypParams())


def test_adiabatic_threshold():
    p = SechypParams()
    assert p.adiabatic_threshold == pytest.approx(2.5 * np.sqrt(2 * np.pi / 2.5) / (2 * np.pi))


@st.composite
def waves(draw, n=400):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    return Waveform(rng.normal(size=n) + 1j * rng.normal(size=n), 200.0, draw(st.floats(-5, 5)))


@given(waves(), waves(), st.floats(-3, 3), st.floats(0, 6.28))
def test_two_color_linear(a, b, k, phi):
    b = b.replace(carrier=a.carrier)
    lhs = two_color(a.replace(a.samples + k * b.samples), relative_phase=phi)
    rhs = two_color(a, relative_phase=phi).samples + k * two_color(b, relative_phase=phi).samples
    np.testing.assert_allclose(lhs.samples, rhs, atol=1e-9)


def test_two_color_components():
    base = Waveform(np.ones(2000), 200.0)
    w = two_color(base, relative_phase=0.7, balance=0.5)
    f, p = w.spectrum()
    lo = p[np.argmin(np.abs(f + 5.1))]
    hi = p[np.argmin(np.abs(f - 5.1))]
    assert hi / lo == pytest.approx(0.25, rel=1e-2)
    with pytest.raises(AliasingError):
        two_color(Waveform(np.ones(10), 50.0))


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform([np.nan])
    with pytest.raises(ValueError):
        Waveform([1.0], sample_rate=0)
    with pytest.raises(ValueError):
        Waveform([2.0], max_rabi=1.0)


def test_concat_keeps_lab_phase():
    a = Waveform(np.ones(100), 100.0, 1.0)
    b = Waveform(np.ones(100), 100.0, 3.0)
    c = a.concat(b)
    np.testing.assert_allclose(c.field()[100:], b.field() * np.exp(2j * np.pi * 3.0 * a.duration), atol=1e-9)


def test_aom_band_and_calibration():
    w = sechyp(SechypParams())
    assert aom_apply(w, AomModel()) == w
    with pytest.raises(OutOfBand):
        aom_apply(w.replace(carrier=150.0), AomModel())
    sat = aom_apply(w, AomModel.compressive(0.5))
    assert sat.envelope.max() < w.envelope.max()
    np.testing.assert_allclose(np.angle(sat.samples[w.envelope > 1e-3]),
                               np.angle(w.samples[w.envelope > 1e-3]), atol=1e-12)


def test_aom_dynamic_range_floor():
    z = np.array([1.0, 1e-8, 0.5])
    out = aom_apply(Waveform(z, 200.0), AomModel(dynamic_range=6.0))
    assert out.samples[1] == 0 and out.samples[0] == 1.0


def _grape_wave(seed):
    prob = ControlProblem(duration=3.0, n_steps=60).two_level()
    seq, _ = grape_optimize(prob, 100, seed, n_starts=1)
    return seq.waveform(carrier=40.0, oversample=10)


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["sechyp", "grape"]))
def test_beat_round_trip(seed, family):
    if family == "sechyp":
        rng = np.random.default_rng(seed)
        beta = rng.uniform(2.0, 3.0)
        w = sechyp(SechypParams(peak_rabi=rng.uniform(0.5, 3.0), width=beta, duration=22.0 / beta))
        w = w.replace(carrier=40.0)
    else:
        w = _grape_wave(seed)
    env, ph = beat_errors(w, beat_characterize(w, 20.0))
    assert env < 0.01 and ph < 0.05


def test_beat_needs_separated_sideband():
    w = sechyp(SechypParams()).replace(carrier=1.0)
    with pytest.raises(SidebandOverlap):
        beat_characterize(w, 0.0)
    with pytest.raises(SidebandOverlap):
        beat_characterize(w.replace(carrier=99.0), 0.0)
