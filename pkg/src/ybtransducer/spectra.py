"""Forward models of the spectroscopic observables.

Frequencies on optical axes are offsets from the zero-field transition A
(GHz); microwave axes are absolute spin-transition frequencies (GHz).

Map values use a perturbative dipole-product model: for each closed
three- or four-level loop the signal is

    population(pumped level) * pump amplitudes * (gauge-invariant loop product)
    * (ensemble kernel at the cell's detunings)

which yields relative magnitudes (and signs, so loops that share a
frequency can interfere).  No saturation or propagation is modelled.

The ensemble kernel for an optical detuning ``dp`` and spin detuning
``dm`` (both GHz) is

    K(dp, dm) = integral du  D_o(u) h_o(dp - u) L_s(dm - u / c)

with ``D_o`` the optical inhomogeneous distribution, ``h_o`` the optical
homogeneous (pump-broadened) Lorentzian and ``L_s`` the spin inhomogeneous
distribution of sub-ensembles already conditioned on their optical shift.
``c`` is the optical-per-spin correlation slope.  ``c = 0`` switches the
correlation off and the kernel factorises.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import voigt_profile

from .constants import CONST
from .io import format_float, write_csv, write_json
from .spin import GROUND, LevelSolution, ModelParams, solve_model
from .transitions import (
    Polarization,
    ThreeLevelSystem,
    TransitionTable,
    build_transition_table,
    microwave_matrix,
    optical_amplitudes,
    v_lambda_systems,
    zero_field_offset,
)

_FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


# -- lineshapes ------------------------------------------------------------


def gaussian(x, fwhm):
    """Area-normalised Gaussian of full width ``fwhm``."""
    s = fwhm * _FWHM_TO_SIGMA
    return np.exp(-0.5 * (np.asarray(x) / s) ** 2) / (s * np.sqrt(2 * np.pi))


def lorentzian(x, fwhm):
    """Area-normalised Lorentzian of full width ``fwhm``."""
    g = fwhm / 2
    return (g / np.pi) / (np.asarray(x) ** 2 + g**2)


def lineshape(kind: str, x, fwhm):
    if kind == "gaussian":
        return gaussian(x, fwhm)
    if kind == "lorentzian":
        return lorentzian(x, fwhm)
    raise ValueError(f"unknown lineshape {kind!r}")


def peak_lineshape(kind: str, x, fwhm):
    """Lineshape scaled to 1 at its centre."""
    return lineshape(kind, x, fwhm) / lineshape(kind, 0.0, fwhm)


def boltzmann_weights(energies_GHz: Sequence[float], temperature_K: float) -> np.ndarray:
    """Thermal populations of the given levels; ``inf`` gives equal weights."""
    E = np.asarray(energies_GHz, dtype=float)
    if not temperature_K > 0:
        raise ValueError("temperature must be positive")
    if np.isinf(temperature_K):
        return np.full(E.shape, 1.0 / E.size)
    x = -(E - E.min()) / (CONST.kT_GHz_per_K * temperature_K)
    w = np.exp(x)
    return w / w.sum()


# -- ensemble --------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleModel:
    """Inhomogeneous ensemble and waveguide description.

    Widths are full widths at half maximum.  ``correlation_slope`` is the
    optical shift (MHz) that accompanies a 1 MHz shift of the excited-state
    spin transition; 0 disables the correlation.
    """

    gamma_ih_optical_MHz: float = 200.0
    gamma_ih_spin_kHz: float = 130.0
    lineshape: str = "gaussian"
    correlation_slope: float = -120.0
    ion_density_rho: float = 1.08e24
    temperature_K: float = 0.04
    even_isotope_offset_GHz: float | None = None
    even_isotope_strength: float | None = None
    background_leakage_beta: float = 0.1
    gamma_h_optical_MHz: float = 6.0
    gamma_ih_spin_ground_kHz: float = 130.0
    isotope_fraction_171: float = 0.95
    absorption_peak_per_m: float = 4.0e4
    waveguide_length_m: float = 60e-6

    def __post_init__(self):
        for name in ("gamma_ih_optical_MHz", "gamma_ih_spin_kHz", "gamma_h_optical_MHz", "gamma_ih_spin_ground_kHz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lineshape not in ("gaussian", "lorentzian"):
            raise ValueError(f"lineshape must be 'gaussian' or 'lorentzian', got {self.lineshape!r}")
        if not 0 <= self.background_leakage_beta < 1:
            raise ValueError("background_leakage_beta must lie in [0, 1)")
        if self.ion_density_rho < 0 or self.absorption_peak_per_m < 0 or self.waveguide_length_m < 0:
            raise ValueError("density, absorption scale and length must be non-negative")
        if not 0 <= self.isotope_fraction_171 <= 1:
            raise ValueError("isotope_fraction_171 must lie in [0, 1]")
        if not self.temperature_K > 0:
            raise ValueError("temperature_K must be positive")

    # widths in GHz
    @property
    def optical_width(self) -> float:
        return self.gamma_ih_optical_MHz * 1e-3

    @property
    def homogeneous_width(self) -> float:
        return self.gamma_h_optical_MHz * 1e-3

    @property
    def spin_width(self) -> float:
        return self.gamma_ih_spin_kHz * 1e-6

    @property
    def ground_spin_width(self) -> float:
        return self.gamma_ih_spin_ground_kHz * 1e-6

    @property
    def even_strength(self) -> float:
        if self.even_isotope_strength is not None:
            return self.even_isotope_strength
        return 1.0 - self.isotope_fraction_171

    def populations(self, ground: LevelSolution) -> np.ndarray:
        return boltzmann_weights(ground.energies, self.temperature_K)


def even_isotope_centroid(model: ModelParams) -> float:
    """Offset of the hyperfine-free line: both Hamiltonians are traceless, so
    the centroid of each manifold sits at zero spin energy."""
    g0, e0 = solve_model(model, 0.0)
    return float(-(e0.energies[0] - g0.energies[3]))


# -- results ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    axis: np.ndarray
    values: np.ndarray
    kind: str
    anchor_GHz: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if axis.shape != values.shape or axis.ndim != 1:
            raise ValueError("axis and values must be 1-D arrays of equal length")
        if axis.size > 1 and np.any(np.diff(axis) <= 0):
            raise ValueError("frequency grid must be strictly increasing")
        if self.kind == "transmission" and (np.any(values < -1e-12) or np.any(values > 1 + 1e-9)):
            raise ValueError("transmission must lie in [0, 1]")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "values", values)

    @property
    def absolute_GHz(self) -> np.ndarray:
        return self.anchor_GHz + self.axis


@dataclass(frozen=True, eq=False)
class ResonanceMap:
    """Complex signal on a (row, microwave) grid; rows are optical offsets unless
    ``row_name`` says otherwise (the interference map scans field)."""

    optical_axis: np.ndarray
    microwave_axis: np.ndarray
    values: np.ndarray
    field_mT: float | np.ndarray
    row_name: str = "optical_GHz"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (len(self.optical_axis), len(self.microwave_axis)):
            raise ValueError("map values must have shape (rows, microwave)")
        if not np.all(np.isfinite(v)):
            raise ValueError("map values must be finite")
        for ax in (self.optical_axis, self.microwave_axis):
            d = np.diff(np.asarray(ax, dtype=float))
            if d.size and not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("map axes must be monotone")
        object.__setattr__(self, "values", v)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.magnitude), self.values.shape)
        return float(self.optical_axis[i]), float(self.microwave_axis[j])

    def phase_trace(self, row: int) -> np.ndarray:
        return np.angle(self.values[row])

    def write_csv(self, path) -> Path:
        rows = (
            (
                format_float(r),
                format_float(m),
                format_float(v.real),
                format_float(v.imag),
                format_float(abs(v)),
                format_float(np.angle(v)),
            )
            for r, vrow in zip(self.optical_axis, self.values)
            for m, v in zip(self.microwave_axis, vrow)
        )
        return write_csv(path, (self.row_name, "microwave_GHz", "re", "im", "abs", "phase_rad"), rows)

    def manifest(self, ens: EnsembleModel | None = None) -> dict:
        out = {
            "row_axis": self.row_name,
            "row_values": [float(x) for x in self.optical_axis],
            "microwave_GHz": [float(x) for x in self.microwave_axis],
            "field_mT": self.field_mT if np.isscalar(self.field_mT) else [float(b) for b in self.field_mT],
            "shape": list(self.values.shape),
            "max_abs": float(self.magnitude.max()) if self.values.size else 0.0,
        }
        out.update(self.meta)
        if ens is not None:
            out["ensemble"] = asdict(ens)
        return out

    def write(self, outdir, ens: EnsembleModel | None = None, stem: str = "map") -> list[Path]:
        outdir = Path(outdir)
        return [self.write_csv(outdir / f"{stem}.csv"), write_json(outdir / "manifest.json", self.manifest(ens))]


@dataclass(frozen=True)
class Pumps:
    """Drive amplitudes (Rabi frequencies, MHz) entering the maps linearly."""

    omega_o_MHz: float = 6.0
    omega_m_MHz: float = 1.0
    omega_mg_MHz: float = 1.0


# -- absorption and transmission ------------------------------------------


def absorption_basis(
    table: TransitionTable, ens: EnsembleModel, pol=Polarization.E_PARALLEL_C, grid=None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-ground-level line shapes and the even-isotope line on ``grid``.

    Returns ``(grid, S, even)`` with ``S[i]`` the sum of ``|amp|^2``-weighted,
    peak-normalised lines starting from ground level ``i + 1``; absorption is
    then ``scale * (f171 * p @ S + even_strength * even)``.
    """
    pol = Polarization.parse(pol)
    grid = np.asarray(grid if grid is not None else np.linspace(-1.0, 8.0, 1801), dtype=float)
    S = np.zeros((len(table.ground.energies), grid.size))
    for line in table.lines(polarization=pol):
        w = abs(line.amplitude) ** 2
        if w > 0:
            S[line.ground - 1] += w * peak_lineshape(ens.lineshape, grid - (line.freq_GHz - table.anchor_GHz), ens.optical_width)
    centre = ens.even_isotope_offset_GHz
    if centre is None:
        centre = -table.zero_field_offset_GHz
    even = peak_lineshape(ens.lineshape, grid - centre, ens.optical_width)
    return grid, S, even


def absorption_from_basis(S: np.ndarray, even: np.ndarray, pops: np.ndarray, ens: EnsembleModel) -> np.ndarray:
    return ens.absorption_peak_per_m * (ens.isotope_fraction_171 * (pops @ S) + ens.even_strength * even)


def absorption_spectrum(
    table: TransitionTable,
    ens: EnsembleModel,
    pol=Polarization.E_PARALLEL_C,
    grid=None,
) -> SpectrumTrace:
    """Absorption coefficient (1/m) on an offset grid (GHz from transition A).

    Each transition contributes ``population(ground) * |amp|^2`` times a
    peak-normalised inhomogeneous line; the even-isotope line adds
    ``even_strength`` of an unsplit unit-strength line.
    """
    pol = Polarization.parse(pol)
    grid, S, even = absorption_basis(table, ens, pol, grid)
    alpha = absorption_from_basis(S, even, ens.populations(table.ground), ens)
    return SpectrumTrace(
        grid, alpha, "absorption", table.anchor_GHz, {"field_mT": table.field.B_mT, "polarization": pol.value}
    )


def transmission_spectrum(absorption: SpectrumTrace, length_m: float, beta: float) -> SpectrumTrace:
    """``T = (1 - beta) exp(-alpha L) + beta``; ``beta`` is light bypassing the waveguide."""
    if absorption.kind != "absorption":
        raise ValueError("transmission_spectrum needs an absorption-coefficient trace")
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    T = (1 - beta) * np.exp(-absorption.values * length_m) + beta
    meta = dict(absorption.meta, length_m=length_m, beta=beta)
    return SpectrumTrace(absorption.axis, np.clip(T, 0.0, 1.0), "transmission", absorption.anchor_GHz, meta)


def forward_transmission(model: ModelParams, ens: EnsembleModel, grid, B_mT: float = 0.0, pol=Polarization.E_PARALLEL_C):
    table = build_transition_table(model, B_mT, polarizations=(pol,))
    a = absorption_spectrum(table, ens, pol, grid)
    return transmission_spectrum(a, ens.waveguide_length_m, ens.background_leakage_beta)


def field_absorption_scan(
    model: ModelParams, ens: EnsembleModel, fields_mT: Sequence[float], grid, pol=Polarization.E_PARALLEL_C
) -> np.ndarray:
    """Absorption coefficient map, shape ``(len(fields), len(grid))``."""
    return np.array(
        [absorption_spectrum(build_transition_table(model, b, (pol,)), ens, pol, grid).values for b in fields_mT]
    )


# -- ensemble kernel -------------------------------------------------------


def _optical_convolved(dp: np.ndarray, ens: EnsembleModel) -> np.ndarray:
    """``(D_o * h_o)(dp)`` in closed form."""
    gh = ens.homogeneous_width / 2
    if ens.lineshape == "gaussian":
        return voigt_profile(dp, ens.optical_width * _FWHM_TO_SIGMA, gh)
    return lorentzian(dp, ens.optical_width + ens.homogeneous_width)


def ensemble_kernel(dp, dm, ens: EnsembleModel, spin_width: float | None = None) -> np.ndarray:
    """Kernel on the outer grid ``dp[:, None]``, ``dm[None, :]`` (GHz)."""
    dp = np.atleast_1d(np.asarray(dp, dtype=float))
    dm = np.atleast_1d(np.asarray(dm, dtype=float))
    ws = ens.spin_width if spin_width is None else spin_width
    slope = ens.correlation_slope
    if slope == 0:
        return np.outer(_optical_convolved(dp, ens), lineshape(ens.lineshape, dm, ws))
    k = 1.0 / slope
    reach = 8.0 if ens.lineshape == "gaussian" else 60.0
    # the whole inhomogeneous line: far from centre the homogeneous wings dominate
    lo, hi = -reach * ens.optical_width, reach * ens.optical_width
    du = min(ens.homogeneous_width, ws / abs(k)) / 8
    n = int(np.ceil((hi - lo) / du)) + 1
    if n > 40001:
        n = 40001
    u = np.linspace(lo, hi, n)
    wts = np.full(n, u[1] - u[0])
    wts[[0, -1]] *= 0.5
    A = lorentzian(dp[:, None] - u[None, :], ens.homogeneous_width) * (lineshape(ens.lineshape, u, ens.optical_width) * wts)
    B = lineshape(ens.lineshape, dm[None, :] - k * u[:, None], ws)
    return A @ B


# -- maps ------------------------------------------------------------------


def three_level_map(
    table: TransitionTable,
    ens: EnsembleModel,
    optical_axis,
    microwave_axis,
    pumps: Pumps = Pumps(),
    polarization=Polarization.E_PARALLEL_C,
    systems: Sequence[ThreeLevelSystem] | None = None,
) -> ResonanceMap:
    """Transduced signal from every V and Lambda system in ``table``."""
    optical_axis = np.asarray(optical_axis, dtype=float)
    microwave_axis = np.asarray(microwave_axis, dtype=float)
    if systems is None:
        systems = v_lambda_systems(table, polarization)
    pops = ens.populations(table.ground)
    values = np.zeros((optical_axis.size, microwave_axis.size), dtype=complex)
    for s in systems:
        w = pops[s.pump_ground - 1] * s.loop_amplitude * pumps.omega_o_MHz * pumps.omega_m_MHz
        if w == 0:
            continue
        spin_w = ens.spin_width if s.microwave.manifold_tag != GROUND else ens.ground_spin_width
        K = ensemble_kernel(
            optical_axis - (s.pump.freq_GHz - table.anchor_GHz), microwave_axis - s.microwave.freq_GHz, ens, spin_w
        )
        values += w * K
    return ResonanceMap(
        optical_axis,
        microwave_axis,
        values,
        table.field.B_mT,
        meta={"mode": "three_level", "polarization": Polarization.parse(polarization).value, "n_systems": len(systems)},
    )


def four_level_loop(table: TransitionTable, model: ModelParams, ac=Polarization.BAC_PARALLEL_C) -> complex:
    """Closed product for |4>g -A-> |1>e -f_M-> |2>e -E-> |3>g -f_MG-> |4>g."""
    M = optical_amplitudes(table.ground, table.excited, Polarization.E_PARALLEL_C)
    Ze = microwave_matrix(table.excited, model.excited, ac)
    Zg = microwave_matrix(table.ground, model.ground, ac)
    return complex(M[3, 0] * Ze[0, 1] * np.conj(M[2, 1]) * Zg[2, 3])


def four_level_map(
    model: ModelParams,
    ens: EnsembleModel,
    fM_axis,
    fMG_axis,
    pumps: Pumps = Pumps(),
    B_mT: float = 0.0,
    optical_offset_GHz: float = 0.0,
) -> ResonanceMap:
    """Zero-field-capable four-level signal on the (f_M, f_MG) plane.

    The optical pump sits at ``optical_offset_GHz`` from transition A; rows
    of the returned map are ``f_MG`` values (ground pair), columns ``f_M``.
    """
    fM_axis = np.asarray(fM_axis, dtype=float)
    fMG_axis = np.asarray(fMG_axis, dtype=float)
    table = build_transition_table(model, B_mT, polarizations=(Polarization.E_PARALLEL_C,))
    loop = four_level_loop(table, model)
    pop = ens.populations(table.ground)[3]
    f_e = table.excited.gap(1, 2)
    f_g = table.ground.gap(3, 4)
    a_off = table.offset(4, 1)
    optical = float(peak_lineshape(ens.lineshape, optical_offset_GHz - a_off, ens.optical_width))
    w = pop * loop * pumps.omega_o_MHz * pumps.omega_mg_MHz * pumps.omega_m_MHz * optical
    values = w * np.outer(
        lineshape(ens.lineshape, fMG_axis - f_g, ens.ground_spin_width),
        lineshape(ens.lineshape, fM_axis - f_e, ens.spin_width),
    )
    return ResonanceMap(
        fMG_axis,
        fM_axis,
        values,
        B_mT,
        row_name="fMG_GHz",
        meta={"mode": "four_level", "f_M_centre_GHz": f_e, "f_MG_centre_GHz": f_g},
    )


def sx_products(ground: LevelSolution, excited: LevelSolution) -> tuple[complex, complex]:
    """``(<1g|Sx|1e><2e|Sx|1g>, <2g|Sx|1e><2e|Sx|2g>)``."""
    M = optical_amplitudes(ground, excited, Polarization.E_PERP_C) / 2  # operator is 2 Sx
    p1 = M[0, 0] * np.conj(M[0, 1])
    p2 = M[1, 0] * np.conj(M[1, 1])
    return complex(p1), complex(p2)


def sx_product_signs(ground: LevelSolution, excited: LevelSolution) -> tuple[complex, complex]:
    """Unit phases of the two S_x products; only their ratio is gauge-invariant."""
    p1, p2 = sx_products(ground, excited)
    return p1 / abs(p1), p2 / abs(p2)


def relative_sx_sign(ground: LevelSolution, excited: LevelSolution) -> float:
    """Gauge-invariant relative sign of the two S_x products (-1 at zero field)."""
    s1, s2 = sx_product_signs(ground, excited)
    r = s1 / s2
    if abs(r.imag) > 1e-9:
        raise ValueError(f"relative phase {np.angle(r):.3g} rad is not a sign")
    return float(np.sign(r.real))


def interference_map(
    model: ModelParams,
    ens: EnsembleModel,
    fields_mT,
    fM_axis,
    optical_offset_GHz: float = 2.75,
    pumps: Pumps = Pumps(),
    ac=Polarization.BAC_PARALLEL_C,
) -> ResonanceMap:
    """Coherent sum of the C1/F1 and C2/F2 V-systems versus field and f_M.

    Both systems share the ``|1>e-|2>e`` microwave leg and, at zero field,
    the same optical frequencies; their S_x products carry opposite signs so
    the outputs cancel there.  As the field splits C1 from C2, the fixed
    laser selects sub-ensembles with opposite optical shifts, which the
    correlation maps to opposite spin shifts: two lobes of opposite phase.
    """
    fields_mT = np.asarray(fields_mT, dtype=float)
    fM_axis = np.asarray(fM_axis, dtype=float)
    rows = []
    for b in fields_mT:
        g, e = solve_model(model, b)
        M = optical_amplitudes(g, e, Polarization.E_PERP_C)
        Ze = microwave_matrix(e, model.excited, ac)
        pops = ens.populations(g)
        f_mw = e.gap(1, 2)
        row = np.zeros(fM_axis.size, dtype=complex)
        offset0 = zero_field_offset(model)
        for gi in (0, 1):
            loop = M[gi, 0] * Ze[0, 1] * np.conj(M[gi, 1])
            pump_off = e.energies[0] - g.energies[gi] - offset0
            K = ensemble_kernel(np.array([optical_offset_GHz - pump_off]), fM_axis - f_mw, ens)[0]
            row += pops[gi] * loop * pumps.omega_o_MHz * pumps.omega_m_MHz * K
        rows.append(row)
    return ResonanceMap(
        fields_mT,
        fM_axis,
        np.array(rows),
        fields_mT,
        row_name="field_mT",
        meta={"mode": "interference", "optical_offset_GHz": optical_offset_GHz},
    )


def lobe_phases(row: np.ndarray, fM_axis, rel_height: float = 0.2) -> list[tuple[float, float, float]]:
    """Local maxima of ``|row|`` above ``rel_height`` of its peak, as (f_M, |v|, phase)."""
    mag = np.abs(row)
    if mag.max() == 0:
        return []
    peaks = [
        k
        for k in range(1, len(mag) - 1)
        if mag[k] >= mag[k - 1] and mag[k] > mag[k + 1] and mag[k] >= rel_height * mag.max()
    ]
    return [(float(fM_axis[k]), float(mag[k]), float(np.angle(row[k]))) for k in peaks]


def spectrum_rows(absorption: SpectrumTrace, transmission: SpectrumTrace):
    for f, a, t in zip(absorption.absolute_GHz, absorption.values, transmission.values):
        yield (format_float(f), format_float(a), format_float(t))


def write_spectrum_csv(path, absorption: SpectrumTrace, transmission: SpectrumTrace) -> Path:
    return write_csv(path, ("freq_GHz", "absorption_per_m", "transmission"), spectrum_rows(absorption, transmission))
