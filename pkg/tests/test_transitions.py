import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ybtransducer.spin import FieldVector, solve_manifold, solve_model
from ybtransducer.transitions import (
    FieldMismatch,
    LabelAmbiguity,
    Polarization,
    build_transition_table,
    label_transitions,
    optical_amplitudes,
    v_lambda_systems,
)

EPAR, EPERP = Polarization.E_PARALLEL_C, Polarization.E_PERP_C
fields = st.floats(-30, 30, allow_nan=False)


def test_zero_field_allowed_set_parallel(model):
    t = build_transition_table(model, 0.0)
    allowed = {l.label for l in t.lines(polarization=EPAR) if abs(l.amplitude) > 1e-9}
    assert allowed == {"A", "E", "I"}
    for lab in ("B", "D"):
        assert abs(t.line(lab, EPAR).amplitude) < 1e-12


def test_zero_field_allowed_set_perp(model):
    t = build_transition_table(model, 0.0)
    allowed = {l.label[0] for l in t.lines(polarization=EPERP) if abs(l.amplitude) > 1e-9}
    assert allowed == {"C", "F", "G", "H"}
    for l in t.lines(polarization=EPERP):
        if abs(l.amplitude) > 1e-9:
            assert abs(l.amplitude) == pytest.approx(2**-0.5, abs=1e-12)


def test_zero_field_offsets(model):
    t = build_transition_table(model, 0.0)
    expect = {"A": 0.0, "E": 4.043, "I": 6.8645, "C1": 2.75, "F1": 6.119, "H3": 4.7885, "G3": 4.1145}
    for lab, off in expect.items():
        pol = EPAR if lab in "AEI" else EPERP
        for l in t.lines(lab, pol):
            assert l.freq_GHz - t.anchor_GHz == pytest.approx(off, abs=1e-9)


@given(B=fields)
def test_sum_rule(model, B):
    g, e = solve_model(model, B)
    for pol in (EPAR, EPERP):
        M = optical_amplitudes(g, e, pol)
        np.testing.assert_allclose((np.abs(M) ** 2).sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose((np.abs(M) ** 2).sum(axis=0), 1.0, atol=1e-12)


@given(B=fields, ph=st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_amplitude_moduli_gauge_invariant(model, B, ph):
    g, e = solve_model(model, B)
    M = optical_amplitudes(g, e, EPAR)
    M2 = optical_amplitudes(g.regauged(ph[:4]), e.regauged(ph[4:]), EPAR)
    np.testing.assert_allclose(np.abs(M), np.abs(M2), atol=1e-12)


def test_b_d_turn_on_with_field(model):
    t = build_transition_table(model, 5.0)
    assert abs(t.line("B", EPAR).amplitude) > 1e-3
    assert abs(t.line("D", EPAR).amplitude) > 1e-3


def test_field_mismatch(model):
    g = solve_manifold(model.ground, 0.0)
    e = solve_manifold(model.excited, 1.0)
    with pytest.raises(FieldMismatch):
        optical_amplitudes(g, e, EPAR)


def test_no_three_level_systems_at_zero_field(model):
    assert v_lambda_systems(build_transition_table(model, 0.0), EPAR) == []


def test_systems_at_5p1_mT(model):
    syst = v_lambda_systems(build_transition_table(model, 5.1), EPAR)
    kinds = sorted((s.kind, s.pump.label, s.output.label) for s in syst)
    assert kinds == [("Lambda", "A", "B"), ("Lambda", "D", "E"), ("V", "A", "D"), ("V", "B", "E")]
    for s in syst:
        assert s.closure_residual_GHz < 1e-9
        if s.kind == "V":
            assert s.microwave.pair == (1, 2)
            assert s.microwave.freq_GHz == pytest.approx(3.3738, abs=1e-3)
        else:
            assert s.microwave.pair == (3, 4)


@given(B=st.floats(0.5, 20))
def test_closure_invariant(model, B):
    for s in v_lambda_systems(build_transition_table(model, B), EPAR):
        assert s.closure_residual_GHz < 1e-9


def test_microwave_dipoles_zero_field(model):
    t = build_transition_table(model, 0.0)
    mw = {(m.manifold_tag, m.pair): m for m in t.microwave}
    assert mw[("excited", (1, 2))].dipole_GHz_per_T == pytest.approx(17.6, rel=5e-3)
    assert mw[("ground", (3, 4))].dipole_GHz_per_T == pytest.approx(42.0, rel=5e-3)


def test_label_ambiguity(model):
    t = build_transition_table(model, 0.0)
    with pytest.raises(LabelAmbiguity):
        label_transitions(t, ambiguity_MHz=1e6)


def test_polarization_parse():
    assert Polarization.parse("E_perp_c") is EPERP
    with pytest.raises(ValueError):
        Polarization.parse("circular")


def test_transition_csv(model, tmp_path):
    t = build_transition_table(model, FieldVector(2.0))
    p = t.write_csv(tmp_path / "t.csv")
    lines = p.read_text().splitlines()
    assert lines[0] == "label,ground_idx,excited_idx,freq_GHz,amp_re,amp_im,polarization"
    assert len(lines) == 33
