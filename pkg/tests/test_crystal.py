import numpy as np
import pytest
from hypothesis import given, strategies as st

from rareqc.crystal import (Ensemble, LevelScheme, absorption_spectrum, sample_ensemble,
                            thermal_populations, transition_frequencies)

finite = st.floats(-100, 100, allow_nan=False)


@st.composite
def row_stochastic(draw):
    rows = []
    for _ in range(3):
        w = np.array([draw(st.floats(0.05, 1.0)) for _ in range(3)])
        rows.append(w / w.sum())
    return np.array(rows)


def test_default_spans():
    s = LevelScheme()
    assert s.total_span == 36.9
    assert s.ground_span == 27.5
    assert s.max_pit_width == pytest.approx(18.1)
    assert s.linewidth_mhz == pytest.approx(0.003)


def test_offsets_layout():
    off = LevelScheme().offsets
    np.testing.assert_allclose(off[0], [0.0, 4.6, 9.4])
    np.testing.assert_allclose(off[:, 0], [0.0, 10.2, 27.5])
    assert off.max() == 36.9


def test_mirrored_order_flips_ground_offsets():
    s = LevelScheme(ground_order=("0", "1", "aux"))
    np.testing.assert_allclose(s.ground_offsets, [0.0, -10.2, -27.5])


@pytest.mark.parametrize("kw", [
    {"ground_splittings": (10.2,)},
    {"excited_splittings": (4.6, -1.0)},
    {"relative_strengths": np.ones((3, 3))},
    {"relative_strengths": np.ones((2, 3)) / 3},
    {"homogeneous_linewidth": 0.0},
    {"ground_order": ("1", "0", "aux")},
])
def test_invalid_scheme(kw):
    with pytest.raises(ValueError):
        LevelScheme(**kw)


@given(row_stochastic())
def test_spans_do_not_depend_on_strengths(m):
    s = LevelScheme(relative_strengths=m)
    assert s.total_span == 36.9 and s.ground_span == 27.5
    np.testing.assert_allclose(s.branching.sum(axis=0), 1.0)


@given(finite, finite)
def test_transitions_translation_equivariant(d1, d2):
    s = LevelScheme()
    a = transition_frequencies(s, d1)
    b = transition_frequencies(s, d1 + d2)
    assert [(t.ground, t.excited) for t in a] == [(t.ground, t.excited) for t in b]
    np.testing.assert_allclose([t.frequency + d2 for t in a], [t.frequency for t in b], atol=1e-9)


def test_nine_sorted_transitions():
    lines = transition_frequencies(LevelScheme())
    assert len(lines) == 9
    f = [t.frequency for t in lines]
    assert f == sorted(f) and f[0] == 0.0 and f[-1] == 36.9


def test_flat_plateau_reads_alpha_max():
    ens = sample_ensemble(window=(-50, 50), n_classes=20000, seed=0, alpha_max=2.0)
    spec = absorption_spectrum(ens, np.linspace(-5, 5, 41), resolution=0.05)
    np.testing.assert_allclose(spec, 2.0, rtol=0.02)


def test_sampling_is_seeded_and_sorted():
    a = sample_ensemble(n_classes=500, seed=3)
    b = sample_ensemble(n_classes=500, seed=3)
    np.testing.assert_array_equal(a.detunings, b.detunings)
    assert np.all(np.diff(a.detunings) > 0)
    assert a.detunings.min() >= -50 and a.detunings.max() <= 50


def test_gaussian_profile_weights():
    ens = sample_ensemble("gaussian", window=(-50, 50), n_classes=101, fwhm=20.0)
    k = np.argmin(np.abs(ens.detunings - 10.0))
    assert ens.weights[k] == pytest.approx(0.5, abs=0.05)
    with pytest.raises(ValueError):
        sample_ensemble("lorentzian")


def _random_ensemble(rng, n=40):
    det = np.sort(rng.uniform(-5, 5, n))
    pops = rng.dirichlet(np.ones(3), n)
    full = np.zeros((n, 6))
    full[:, :3] = pops
    return Ensemble(LevelScheme(), (-5, 5), det, rng.uniform(0.1, 1, n), full)


@given(st.integers(0, 2**31 - 1), st.floats(0.1, 5.0))
def test_alpha_linear_in_weights(seed, k):
    rng = np.random.default_rng(seed)
    ens = _random_ensemble(rng)
    grid = np.linspace(-10, 50, 301)
    np.testing.assert_allclose(absorption_spectrum(ens.scaled(k), grid),
                               k * absorption_spectrum(ens, grid), rtol=1e-10, atol=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_alpha_linear_in_populations(seed):
    rng = np.random.default_rng(seed)
    ens = _random_ensemble(rng)
    other = _random_ensemble(rng)
    other = ens.with_populations(other.populations)
    mix = ens.with_populations(0.3 * ens.populations + 0.7 * other.populations)
    grid = np.linspace(-10, 50, 301)
    np.testing.assert_allclose(absorption_spectrum(mix, grid),
                               0.3 * absorption_spectrum(ens, grid) + 0.7 * absorption_spectrum(other, grid),
                               rtol=1e-10, atol=1e-14)


def test_excited_population_does_not_absorb():
    ens = _random_ensemble(np.random.default_rng(0))
    p = np.zeros_like(ens.populations)
    p[:, 3] = 1.0
    assert not np.any(absorption_spectrum(ens.with_populations(p), np.linspace(-5, 40, 50)))


def test_ensemble_validation():
    s = LevelScheme()
    with pytest.raises(ValueError):
        Ensemble(s, (0, 1), [2.0], [1.0], thermal_populations(1))
    with pytest.raises(ValueError):
        Ensemble(s, (0, 1), [0.5], [-1.0], thermal_populations(1))
    with pytest.raises(ValueError):
        Ensemble(s, (0, 1), [0.5, 0.6], [1.0], thermal_populations(2))


def test_classes_view():
    ens = sample_ensemble(n_classes=3)
    cls = ens.classes
    assert len(cls) == 3
    np.testing.assert_allclose(cls[0].populations, [1 / 3, 1 / 3, 1 / 3, 0, 0, 0])
    assert ens.select([True, False, True]).total_weight == 2.0
