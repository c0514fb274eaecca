from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from ybtransducer.spin import solve_model
from ybtransducer.spectra import (
    EnsembleModel,
    Pumps,
    _optical_convolved,
    absorption_spectrum,
    boltzmann_weights,
    ensemble_kernel,
    even_isotope_centroid,
    forward_transmission,
    four_level_map,
    interference_map,
    lineshape,
    lobe_phases,
    relative_sx_sign,
    three_level_map,
    transmission_spectrum,
    write_spectrum_csv,
)
from ybtransducer.transitions import build_transition_table

GRID = np.linspace(-1, 8, 901)


@given(fwhm=st.floats(0.01, 10), kind=st.sampled_from(["gaussian", "lorentzian"]))
def test_lineshapes_normalised(fwhm, kind):
    area = integrate.quad(lambda x: lineshape(kind, x, fwhm), -np.inf, np.inf)[0]
    assert area == pytest.approx(1.0, rel=1e-7)
    assert lineshape(kind, fwhm / 2, fwhm) == pytest.approx(lineshape(kind, 0.0, fwhm) / 2, rel=1e-12)


@given(T=st.floats(0.005, 100))
def test_boltzmann_properties(model, T):
    g, _ = solve_model(model, 0.0)
    p = boltzmann_weights(g.energies, T)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(p) <= 1e-15)


def test_boltzmann_infinite_temperature(model):
    g, _ = solve_model(model, 0.0)
    assert list(boltzmann_weights(g.energies, np.inf)) == [0.25] * 4


def test_ensemble_validation():
    with pytest.raises(ValueError):
        EnsembleModel(background_leakage_beta=1.0)
    with pytest.raises(ValueError):
        EnsembleModel(lineshape="sech")


def test_even_isotope_at_centroid(model):
    assert even_isotope_centroid(model) == pytest.approx(4.443, abs=1e-9)


def test_transmission_bounds_and_beer_lambert(model, ens):
    a = absorption_spectrum(build_transition_table(model, 0.0), ens, grid=GRID)
    beta = ens.background_leakage_beta
    t1 = transmission_spectrum(a, 30e-6, beta)
    t2 = transmission_spectrum(a, 60e-6, beta)
    assert np.all(t1.values >= beta) and np.all(t1.values <= 1)
    np.testing.assert_allclose((t2.values - beta) / (1 - beta), ((t1.values - beta) / (1 - beta)) ** 2, rtol=1e-10)


def test_hot_spectrum_resolves_three_lines(model, ens):
    t = forward_transmission(model, replace(ens, temperature_K=1.0, even_isotope_strength=0.0), GRID)
    d = 1 - t.values
    peaks = [GRID[i] for i in range(1, GRID.size - 1) if d[i] > d[i - 1] and d[i] >= d[i + 1] and d[i] > 0.05 * d.max()]
    np.testing.assert_allclose(peaks, [0.0, 4.04, 6.86], atol=0.011)


def test_infinite_temperature_sum_rule(model):
    # at equal populations every ground level carries unit total strength
    ens = EnsembleModel(temperature_K=1e12, even_isotope_strength=0.0, gamma_ih_optical_MHz=10)
    grid = np.linspace(-2, 10, 24001)
    a = absorption_spectrum(build_transition_table(model, 3.0), ens, grid=grid)
    area = np.trapezoid(a.values, grid) / (ens.absorption_peak_per_m * ens.isotope_fraction_171)
    line_area = integrate.quad(lambda x: np.exp(-0.5 * (x / (ens.optical_width / 2.3548200450309493)) ** 2), -1, 1)[0]
    assert area == pytest.approx(line_area, rel=1e-4)


@settings(max_examples=12)
@given(dp=st.floats(-0.5, 0.5), slope=st.sampled_from([-120.0, -30.0, 50.0]))
def test_kernel_marginal_is_optical_profile(ens, dp, slope):
    e = replace(ens, correlation_slope=slope)
    dm = np.linspace(-0.06, 0.06, 4001)
    K = ensemble_kernel([dp], dm, e)[0]
    assert np.trapezoid(K, dm) == pytest.approx(float(_optical_convolved(np.array([dp]), e)[0]), rel=2e-3, abs=1e-9)


def test_kernel_weak_correlation_limit(ens):
    dp = np.linspace(-0.3, 0.3, 7)
    dm = np.linspace(-3e-4, 3e-4, 9)
    closed = ensemble_kernel(dp, dm, replace(ens, correlation_slope=0.0))
    numeric = ensemble_kernel(dp, dm, replace(ens, correlation_slope=-1e7))
    np.testing.assert_allclose(numeric, closed, rtol=2e-3, atol=1e-6 * closed.max())


def test_three_level_zero_at_zero_field(model, ens):
    rm = three_level_map(build_transition_table(model, 0.0), ens, np.linspace(-0.5, 1.2, 30), np.linspace(3.36, 3.38, 30))
    assert np.all(rm.values == 0)


def test_three_level_peaks_at_5p1_mT(model, ens):
    opt = np.linspace(-0.5, 1.2, 120)
    mw = np.linspace(3.366, 3.382, 120)
    rm = three_level_map(build_transition_table(model, 5.1), ens, opt, mw)
    op, f = rm.argmax()
    assert f == pytest.approx(3.3738, abs=1e-3)
    # V systems sharing the excited clock leg: pumps on A and B
    mag = rm.magnitude[:, np.argmin(np.abs(mw - f))]
    peaks = [opt[i] for i in range(1, opt.size - 1) if mag[i] > mag[i - 1] and mag[i] >= mag[i + 1] and mag[i] > 0.2 * mag.max()]
    np.testing.assert_allclose(peaks, [0.0, 0.675], atol=0.1)


def test_four_level_peak_at_clock_frequencies(model, ens):
    fM = np.linspace(3.3685, 3.3695, 200)
    fMG = np.linspace(0.6735, 0.6745, 200)
    rm = four_level_map(model, ens, fM, fMG)
    r, c = rm.argmax()
    assert rm.magnitude.max() > 0
    assert abs(r - 0.674) <= fMG[1] - fMG[0]
    assert abs(c - 3.369) <= fM[1] - fM[0]


@given(ph=st.lists(st.floats(-3, 3), min_size=8, max_size=8), B=st.floats(0, 10))
def test_relative_sx_sign_gauge_invariant(model, ph, B):
    g, e = solve_model(model, B)
    assert relative_sx_sign(g.regauged(ph[:4]), e.regauged(ph[4:])) == -1.0


def test_interference_cancels_at_zero_field_and_flips_phase(model, ens):
    fM = np.linspace(3.366, 3.378, 241)
    rm = interference_map(model, ens, [0.0, 2.5], fM)
    assert rm.magnitude[0].max() < 1e-6 * rm.magnitude.max()
    lobes = sorted(lobe_phases(rm.values[1], fM), key=lambda p: -p[1])[:2]
    assert len(lobes) == 2
    assert abs(np.angle(np.exp(1j * (lobes[0][2] - lobes[1][2])))) == pytest.approx(np.pi, abs=0.05)


def test_map_csv_long_form(model, ens, tmp_path):
    rm = four_level_map(model, ens, np.linspace(3.368, 3.37, 3), np.linspace(0.673, 0.675, 2), Pumps())
    paths = rm.write(tmp_path, ens)
    rows = paths[0].read_text().splitlines()
    assert rows[0] == "fMG_GHz,microwave_GHz,re,im,abs,phase_rad"
    assert len(rows) == 1 + 6


def test_spectrum_csv_absolute_frequency(model, ens, tmp_path):
    a = absorption_spectrum(build_transition_table(model, 0.0), ens, grid=GRID)
    t = transmission_spectrum(a, ens.waveguide_length_m, ens.background_leakage_beta)
    lines = write_spectrum_csv(tmp_path / "s.csv", a, t).read_text().splitlines()
    assert lines[0] == "freq_GHz,absorption_per_m,transmission"
    assert float(lines[1].split(",")[0]) == pytest.approx(304500.0)
