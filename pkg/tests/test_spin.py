import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ybtransducer.constants import MU_B_GHZ_PER_T
from ybtransducer.io import ConfigError, parse_kv
from ybtransducer.spin import (
    EXCITED,
    GROUND,
    IZ,
    SX,
    SZ,
    FieldVector,
    NotHermitian,
    SpinManifoldParams,
    Underdetermined,
    build_hamiltonian,
    eigensolve,
    field_grid,
    fit_g_parallel,
    fit_hyperfine,
    format_params,
    level_diagram_scan,
    params_from_kv,
    solve_manifold,
    solve_model,
)
from ybtransducer.transitions import microwave_amplitudes

fields = st.floats(-50, 50, allow_nan=False)
unit_dirs = st.tuples(*[st.floats(-1, 1)] * 3).filter(lambda v: np.linalg.norm(v) > 0.1)


def closed_form_zero_field(p):
    # zero-field eigenvalues from the block structure of the axial hyperfine term
    a, b = p.A_parallel, p.A_perp
    return np.sort([a / 4, a / 4, -a / 4 - b / 2, -a / 4 + b / 2])


def test_zero_field_gaps_exact(model):
    g, e = solve_model(model, 0.0)
    assert g.gap(3, 4) == pytest.approx(0.674, abs=1e-12)
    assert e.gap(1, 2) == pytest.approx(3.369, abs=1e-12)


@pytest.mark.parametrize("tag", [GROUND, EXCITED])
def test_zero_field_matches_closed_form(model, tag):
    p = model.manifold(tag)
    np.testing.assert_allclose(solve_manifold(p, 0.0).energies, closed_form_zero_field(p), atol=1e-12)


@given(B=fields)
def test_eigenvalues_are_char_poly_roots(model, B):
    H = build_hamiltonian(model.ground, B)
    sol = eigensolve(H, B)
    roots = np.sort(np.roots(np.poly(H)).real)
    np.testing.assert_allclose(sol.energies, roots, atol=1e-8)


@given(B=fields, d=unit_dirs)
def test_eigenvectors_orthonormal(model, B, d):
    sol = solve_manifold(model.excited, FieldVector.along(B, d))
    np.testing.assert_allclose(sol.vectors.conj().T @ sol.vectors, np.eye(4), atol=1e-12)
    H = build_hamiltonian(model.excited, sol.field)
    np.testing.assert_allclose(H @ sol.vectors, sol.vectors * sol.energies, atol=1e-10)


@given(B=fields)
def test_spectrum_even_in_field(model, B):
    for p in (model.ground, model.excited):
        np.testing.assert_allclose(solve_manifold(p, B).energies, solve_manifold(p, -B).energies, atol=1e-10)


def test_clock_transitions_flat_at_zero_field(model):
    h = 1e-3
    for p, pair in ((model.ground, (3, 4)), (model.excited, (1, 2))):
        f = lambda b: solve_manifold(p, b).gap(*pair)
        assert abs((f(h) - f(-h)) / (2 * h)) < 1e-4
        # second-order response is nonzero: the clock is curvature-limited
        assert abs(f(h) + f(-h) - 2 * f(0)) > 0


def test_zero_field_state_structure(model):
    g, e = solve_model(model, 0.0)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(np.abs(g.vectors[:, 0]), [1, 0, 0, 0], atol=1e-12)
    np.testing.assert_allclose(np.abs(g.vectors[:, 1]), [0, 0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(g.vectors[:, 2], [0, s, -s, 0], atol=1e-12)
    np.testing.assert_allclose(g.vectors[:, 3], [0, s, s, 0], atol=1e-12)
    np.testing.assert_allclose(e.vectors[:, 0], [0, s, -s, 0], atol=1e-12)
    np.testing.assert_allclose(e.vectors[:, 1], [0, s, s, 0], atol=1e-12)


def test_degenerate_basis_is_deterministic(model):
    H = build_hamiltonian(model.ground, 0.0)
    a, b = eigensolve(H), eigensolve(H.copy())
    np.testing.assert_array_equal(a.vectors, b.vectors)


@given(ph=st.lists(st.floats(-np.pi, np.pi), min_size=4, max_size=4), B=fields)
def test_matrix_element_moduli_gauge_invariant(model, ph, B):
    sol = solve_manifold(model.ground, B)
    re = sol.regauged(ph)
    for op in (SZ, SX, IZ):
        for i in range(1, 5):
            for j in range(1, 5):
                assert abs(re.matrix_element(op, i, j)) == pytest.approx(abs(sol.matrix_element(op, i, j)), abs=1e-12)


def test_not_hermitian():
    with pytest.raises(NotHermitian):
        eigensolve(np.array([[0, 1], [0, 0]], dtype=complex))


def test_field_vector_validation():
    with pytest.raises(ValueError):
        FieldVector(1.0, (1.0, 1.0, 0.0))
    assert FieldVector.along(2.0, (1, 1, 0)).orientation == pytest.approx((2**-0.5, 2**-0.5, 0.0))


@pytest.mark.parametrize("tag,dipole", [(EXCITED, 17.6), (GROUND, 42.0)])
def test_g_parallel_reproduces_clock_dipole(model, tag, dipole):
    g = fit_g_parallel(dipole, tag)
    p = SpinManifoldParams(g, model.manifold(tag).g_perp, model.manifold(tag).A_parallel, model.manifold(tag).A_perp, tag)
    pair = (3, 4) if tag == GROUND else (1, 2)
    line = next(m for m in microwave_amplitudes(solve_manifold(p, 0.0), p) if m.pair == pair)
    assert line.dipole_GHz_per_T == pytest.approx(dipole, rel=5e-3)


def test_default_g_parallel_matches_dipoles(model):
    assert MU_B_GHZ_PER_T * model.excited.g_parallel / 2 == pytest.approx(17.6, rel=5e-3)
    assert MU_B_GHZ_PER_T * model.ground.g_parallel / 2 == pytest.approx(42.0, rel=5e-3)


def test_fit_hyperfine_round_trip(model):
    g0, e0 = solve_model(model, 0.0)
    gaps = [(GROUND, (3, 4), g0.gap(3, 4)), (GROUND, (1, 4), g0.gap(1, 4)), (EXCITED, (1, 2), e0.gap(1, 2))]
    fit = fit_hyperfine(gaps, defaults={GROUND: model.ground, EXCITED: model.excited})
    assert fit[GROUND].A_perp == pytest.approx(model.ground.A_perp, abs=1e-12)
    assert fit[GROUND].A_parallel == pytest.approx(model.ground.A_parallel, abs=1e-12)
    assert fit[EXCITED].A_perp == pytest.approx(model.excited.A_perp, abs=1e-12)
    assert fit[EXCITED].A_parallel == model.excited.A_parallel


def test_fit_hyperfine_underdetermined():
    with pytest.raises(Underdetermined):
        fit_hyperfine([(GROUND, (1, 2), 0.0)])


def test_level_scan_threads_identical(model):
    a = level_diagram_scan(model, 0, 10, 0.5)
    b = level_diagram_scan(model, 0, 10, 0.5, threads=4)
    np.testing.assert_array_equal(a.energies(GROUND), b.energies(GROUND))
    assert len(a.B_mT) == 21


def test_field_grid_rejects_bad_step():
    with pytest.raises(ValueError):
        field_grid(0, 1, 0)


def test_params_round_trip(model):
    again = params_from_kv(parse_kv(format_params(model)))
    assert again == model


def test_params_unknown_key_has_line(model):
    text = format_params(model) + "\nground.g_bogus = 1\n"
    with pytest.raises(ConfigError) as err:
        params_from_kv(parse_kv(text))
    assert err.value.line is not None
