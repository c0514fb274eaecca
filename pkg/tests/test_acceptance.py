"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (criterion, measured values, runtime);
the lines are printed in the pytest terminal summary and when this file is
run as a script.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ybtransducer.calibration import boltzmann_populations, dbm_to_watts, photons_per_second
from ybtransducer.efficiency import eta_from_R
from ybtransducer.scenarios import run_and_check, run_scenario, scenario_names
from ybtransducer.spectra import four_level_map, interference_map, lobe_phases, relative_sx_sign, three_level_map
from ybtransducer.spin import EXCITED, GROUND, SpinManifoldParams, fit_g_parallel, solve_manifold, solve_model
from ybtransducer.transitions import Polarization, build_transition_table, microwave_amplitudes

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
RESULTS: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str, seconds: float, limit: float):
    ok = bool(ok) and seconds < limit
    RESULTS[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d} {title}: {detail} ({seconds:.2f} s, limit {limit:g} s)"
    return ok


def scenario(name, tmp_path):
    results = run_and_check(SCENARIOS, name, tmp_path / name)
    return all(r.ok for r in results), {r.check.get("path", r.check["file"]): r.actual for r in results}


def test_01_calibration_chain(tmp_path):
    t0 = time.perf_counter()
    ok, v = scenario("calibration", tmp_path)
    eta = v["eta"]
    ok &= abs(eta - 1.2e-13) <= 0.1 * 1.2e-13
    assert record(1, "calibration chain", ok, f"eta = {eta:.4g} (target 1.2e-13 +-10%)", time.perf_counter() - t0, 1)


def test_02_photon_rates():
    t0 = time.perf_counter()
    n_in = photons_per_second(dbm_to_watts(3.0), 3.369)
    n_out = photons_per_second(280e-15, 304501.0)
    ok = abs(n_in / 8.9e20 - 1) <= 0.01 and abs(n_out / 1.4e6 - 1) <= 0.01
    assert record(2, "photon rates", ok, f"{n_in:.4g} /s and {n_out:.4g} /s", time.perf_counter() - t0, 1)


_worst_rel = [0.0]


@given(R=st.floats(1e-100, 0.01))
def _weak_coupling_property(R):
    rel = abs(eta_from_R(R) / (4 * R * R) - 1)
    _worst_rel[0] = max(_worst_rel[0], rel)
    assert rel <= 1e-3


def test_03_efficiency_algebra():
    t0 = time.perf_counter()
    _weak_coupling_property()
    edge = abs(eta_from_R(0.01) / 4e-4 - 1)
    ok = eta_from_R(1.0) == 1.0 and eta_from_R(0.0) == 0.0 and edge <= 1e-3
    worst = max(_worst_rel[0], edge)
    assert record(3, "efficiency algebra", ok, f"eta(1) = {eta_from_R(1.0)!r}, worst |eta/4R^2 - 1| = {worst:.2e}",
                  time.perf_counter() - t0, 1)


def test_04_upgrade_ledger(tmp_path):
    t0 = time.perf_counter()
    ok, v = scenario("efficiency_ledger", tmp_path)
    assert record(4, "upgrade ledger", ok, f"R gain = {v['total_factor']:.3g}, eta = {v['eta']:.3f}",
                  time.perf_counter() - t0, 1)


def test_05_finesse(tmp_path):
    t0 = time.perf_counter()
    ok, v = scenario("efficiency_point", tmp_path)
    assert record(5, "finesse", ok, f"FWHM = {v['fwhm_GHz']:.4f} GHz, finesse = {v['finesse']:.2f}",
                  time.perf_counter() - t0, 1)


def test_06_alpha(tmp_path):
    t0 = time.perf_counter()
    ok, v = scenario("efficiency_alpha", tmp_path)
    detail = f"alpha Yb = {v['alpha.alpha_s']:.3g} s, Er = {v['reference.alpha_s']:.3g} s, ratio = {v['ratio']:.1f}"
    assert record(6, "magneto-optic coefficient", ok, detail, time.perf_counter() - t0, 10)


def test_07_spin_model(model):
    t0 = time.perf_counter()
    g, e = solve_model(model, 0.0)
    gap_err = max(abs(g.gap(3, 4) - 0.674), abs(e.gap(1, 2) - 3.369))
    # one-sided difference: a central one vanishes identically for an even function
    h = 1e-3
    slopes = []
    for p, pair in ((model.ground, (3, 4)), (model.excited, (1, 2))):
        slopes.append(abs(solve_manifold(p, h).gap(*pair) - solve_manifold(p, 0.0).gap(*pair)) / h)
    dip_err = 0.0
    for tag, dipole, pair in ((EXCITED, 17.6, (1, 2)), (GROUND, 42.0, (3, 4))):
        base = model.manifold(tag)
        p = SpinManifoldParams(fit_g_parallel(dipole, tag), base.g_perp, base.A_parallel, base.A_perp, tag)
        d = next(m for m in microwave_amplitudes(solve_manifold(p, 0.0), p) if m.pair == pair).dipole_GHz_per_T
        dip_err = max(dip_err, abs(d / dipole - 1))
    ok = gap_err < 1e-12 and max(slopes) < 1e-4 and dip_err < 5e-3
    detail = f"gap error {gap_err:.1e} GHz, max clock slope {max(slopes):.1e} GHz/mT, dipole error {dip_err:.1e}"
    assert record(7, "spin model", ok, detail, time.perf_counter() - t0, 5)


def test_08_selection_rules(model, ens):
    t0 = time.perf_counter()
    t = build_transition_table(model, 0.0)
    bd = max(abs(l.amplitude) for lab in ("B", "D") for l in t.lines(lab, Polarization.E_PARALLEL_C))
    opt, mw = np.linspace(-0.5, 1.2, 200), np.linspace(3.36, 3.38, 200)
    zero = three_level_map(t, ens, opt, mw).magnitude.max()
    fM, fMG = np.linspace(3.3685, 3.3695, 200), np.linspace(0.6735, 0.6745, 200)
    rm = four_level_map(model, ens, fM, fMG)
    r, c = rm.argmax()
    in_cell = abs(r - 0.674) <= fMG[1] - fMG[0] and abs(c - 3.369) <= fM[1] - fM[0]
    ok = bd < 1e-12 and zero == 0 and rm.magnitude.max() > 0 and in_cell
    detail = f"|B|,|D| <= {bd:.1e}, three-level max {zero:g}, four-level peak at ({c:.6f}, {r:.6f}) GHz"
    assert record(8, "selection rules", ok, detail, time.perf_counter() - t0, 30)


def test_09_interference(model, ens):
    t0 = time.perf_counter()
    g, e = solve_model(model, 0.0)
    signs = {relative_sx_sign(g.regauged(ph[:4]), e.regauged(ph[4:])) for ph in np.random.default_rng(0).uniform(-3, 3, (20, 8))}
    fM = np.linspace(3.366, 3.378, 241)
    rm = interference_map(model, ens, np.linspace(0, 5, 51), fM)
    ratio = rm.magnitude[0].max() / rm.magnitude.max()
    lobes = sorted(lobe_phases(rm.values[25], fM), key=lambda p: -p[1])[:2]
    flip = abs(np.angle(np.exp(1j * (lobes[0][2] - lobes[1][2])))) if len(lobes) == 2 else 0.0
    ok = signs == {-1.0} and ratio < 1e-6 and abs(flip - math.pi) < 0.05
    detail = f"relative sign {sorted(signs)}, B=0 ratio {ratio:.1e}, lobe phase difference {flip:.4f} rad at 2.5 mT"
    assert record(9, "interference", ok, detail, time.perf_counter() - t0, 30)


def test_10_dynamics(tmp_path):
    t0 = time.perf_counter()
    names = ["dynamics_hahn_14us", "dynamics_hahn_22us", "dynamics_hahn_35us", "dynamics_t1",
             "dynamics_optical_echo", "dynamics_rabi", "dynamics_bandwidth"]
    vals, ok = {}, True
    for n in names:
        good, v = scenario(n, tmp_path)
        ok &= good
        vals[n] = v
    t2 = [vals[f"dynamics_hahn_{k}us"]["fit.T2_us"] for k in (14, 22, 35)]
    detail = (f"T2 fits {', '.join(f'{x:.2f}' for x in t2)} us; T1 {vals['dynamics_t1']['fit.T1_fast_ms']:.3f} ms; "
              f"optical T2 {vals['dynamics_optical_echo']['fit.T2_us']:.2f} us; "
              f"Rabi periods {vals['dynamics_rabi']['n_periods']}, monotone {vals['dynamics_rabi']['envelope_monotone']}; "
              f"knee {vals['dynamics_bandwidth']['knee_us']:.2f} us")
    assert record(10, "dynamics round trips", ok, detail, time.perf_counter() - t0, 30)


def test_11_temperature_fit(tmp_path, model):
    t0 = time.perf_counter()
    ok40, v40 = scenario("fit_temperature_40mK", tmp_path)
    ok4, v4 = scenario("fit_temperature_4K", tmp_path)
    T40, T4 = v40["temperature_K"], v4["temperature_K"]
    g, _ = solve_model(model, 0.0)
    inf = boltzmann_populations(g.energies, math.inf)
    ok = ok40 and ok4 and abs(T40 - 0.04) <= 0.01 and abs(T4 / 4 - 1) <= 0.15 and list(inf) == [0.25] * 4
    detail = f"40 mK -> {T40 * 1e3:.3f} mK, 4 K -> {T4:.4f} K, T=inf populations {[float(x) for x in inf]}"
    assert record(11, "temperature fit", ok, detail, time.perf_counter() - t0, 10)


def test_12_determinism(tmp_path):
    t0 = time.perf_counter()
    names = scenario_names(SCENARIOS)
    differing = []
    for n in names:
        trees = []
        for k in range(2):
            out = tmp_path / f"run{k}" / n
            run_scenario(SCENARIOS / f"{n}.cfg", out)
            trees.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if trees[0] != trees[1]:
            differing.append(n)
    ok = not differing
    detail = f"{len(names)} scenarios run twice, {len(differing)} differ" + (f": {differing}" if differing else "")
    assert record(12, "determinism", ok, detail, time.perf_counter() - t0, 60)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
