import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rareqc.crystal import absorption_spectrum, sample_ensemble
from rareqc.errors import NoPit, PitTooWide
from rareqc.pumping import (BurnPulse, PumpSchedule, burnback, create_pit, default_peak_frequency,
                            default_pit_schedule, edge_rise_width, find_pit, pit_residual, pump_step,
                            relax, run_schedule, scan_overlap, spectral_peaks)

PIT = (-9.0, 9.0)


@pytest.fixture(scope="module")
def small():
    return sample_ensemble(window=(-50, 50), n_classes=10000, seed=1)


@pytest.fixture(scope="module")
def pit(small):
    return create_pit(small, PIT)


def test_scan_overlap_integrates_to_dwell():
    # a line far inside a wide scan sees 1/(scan width)
    v = scan_overlap([0.0], (-5.0, 5.0), 0.003)
    assert v[0] == pytest.approx(0.1, rel=1e-3)
    assert scan_overlap([20.0], (-5.0, 5.0), 0.003, cutoff=100)[0] == 0.0


def test_pulse_validation():
    with pytest.raises(ValueError):
        BurnPulse((1.0, 0.0), 0.5, 10)
    with pytest.raises(ValueError):
        BurnPulse((0.0, 1.0), 0.5, 0)
    with pytest.raises(ValueError):
        BurnPulse((0.0, 1.0), 0.5, 10, holes=((-1.0, 2.0),))


def test_schedule_round_trip():
    s = PumpSchedule(((BurnPulse((0, 1), 0.5, 10, holes=((0.2, 0.3),)), 3),), 500.0, 2)
    assert PumpSchedule.from_dict(s.to_dict()) == s
    assert len(list(s)) == 6
    assert s.shifted(1.0).steps[0][0].scan_interval == (1.0, 2.0)


@settings(max_examples=25)
@given(st.floats(0.05, 2.0), st.floats(-30, 30), st.floats(0.1, 10), st.floats(1, 50),
       st.sampled_from([None, (0,), (1, 2)]))
def test_pump_step_stays_in_simplex(rabi, start, width, duration, target):
    ens = sample_ensemble(window=(-40, 40), n_classes=300, seed=0)
    out = relax(pump_step(ens, BurnPulse((start, start + width), rabi, duration, target)), 300.0)
    p = out.populations
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=25)
@given(st.floats(0.05, 2.0), st.floats(-30, 30), st.floats(0.1, 10), st.integers(0, 2))
def test_targeted_scan_never_raises_target(rabi, start, width, g):
    ens = sample_ensemble(window=(-40, 40), n_classes=300, seed=0)
    out = ens
    for _ in range(3):
        before = out.populations[:, g].copy()
        out = relax(pump_step(out, BurnPulse((start, start + width), rabi, 20.0, (g,))), 5000.0)
        assert np.all(out.populations[:, g] <= before + 1e-12)


def test_pit_is_empty(small, pit):
    assert pit_residual(pit, PIT) < 0.01
    assert pit_residual(small, PIT) > 0.9


def test_pit_is_stable(pit):
    grid = np.arange(-8.0, 8.0, 0.01)
    again = run_schedule(pit, default_pit_schedule(PIT))
    d = absorption_spectrum(again, grid, 0.05) - absorption_spectrum(pit, grid, 0.05)
    assert np.max(np.abs(d)) < 1e-3


def test_pit_too_wide(small):
    with pytest.raises(PitTooWide):
        create_pit(small, (-10.0, 10.0))
    with pytest.raises(ValueError):
        create_pit(small, (1.0, -1.0))


def test_find_pit(small, pit):
    lo, hi = find_pit(pit, 0.0)
    assert lo == pytest.approx(-9.0, abs=0.3) and hi == pytest.approx(9.0, abs=0.3)
    with pytest.raises(NoPit):
        find_pit(small, 0.0)


def test_burnback_three_peaks(pit):
    f0 = default_peak_frequency(PIT)
    assert f0 == pytest.approx(-3.2)
    ens = burnback(pit, f0, 0.5, PIT)
    grid = np.arange(-9.0, 9.0 + 1e-9, 0.01)
    rows = spectral_peaks(grid, absorption_spectrum(ens, grid, 0.05))
    assert len(rows) == 3
    np.testing.assert_allclose(np.diff(rows[:, 0]), [4.6, 4.8], atol=0.1)
    np.testing.assert_allclose(rows[:, 0], f0 + np.array([0.0, 4.6, 9.4]), atol=0.1)


def test_burnback_needs_pit(small, pit):
    with pytest.raises(NoPit):
        burnback(small, 0.0, 0.5, PIT)
    with pytest.raises(NoPit):
        burnback(pit, 12.0, 0.5, PIT)


def test_edge_rise_of_ideal_step():
    grid = np.arange(-12, 12, 0.01)
    spec = np.where(np.abs(grid) < 9, 0.0, 2.0)
    assert edge_rise_width(grid, spec, PIT) == pytest.approx(0.0, abs=0.011)
    ramp = np.clip((np.abs(grid) - 9) / 1.0, 0, 1) * 2.0
    assert edge_rise_width(grid, np.where(np.abs(grid) < 9, 0, ramp) + 0 * grid, PIT, shoulder=3.0) \
        == pytest.approx(0.8, abs=0.05)


def test_spectral_peaks_flat():
    grid = np.linspace(0, 1, 11)
    assert spectral_peaks(grid, np.zeros(11)).shape == (0, 3)
